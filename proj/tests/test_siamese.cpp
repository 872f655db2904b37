#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>

#include "codetwin/errors.hpp"
#include "codetwin/siamese.hpp"
#include "reference_nn.hpp"

using namespace codetwin;

namespace {

EncoderConfig small_cfg() { return EncoderConfig{10, 4, 5, 64}; }

template <class T = float>
nn::ParamStore<T> random_model(std::uint64_t seed, const EncoderConfig& cfg = small_cfg()) {
  nn::ParamStore<T> p;
  nn::Rng rng(seed);
  init_encoder(p, cfg, rng);
  init_calibration(p);
  return p;
}

long double oracle_loss(long double s, int y, long double w, long double b) {
  const long double p = 1.0L / (1.0L + std::exp(-(w * s + b)));
  return 0.5L * (y - p) * (y - p);
}

// Four classes of sequences whose members share a distinctive token order.
std::vector<std::vector<IdSequence>> toy_classes(std::size_t per_class, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<std::vector<IdSequence>> classes(4);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      IdSequence s{2};
      for (int rep = 0; rep < 3; ++rep) {
        s.push_back(static_cast<TokenId>(4 + c));
        s.push_back(static_cast<TokenId>(4 + (c + 1 + rng.uniform_int(2)) % 6));
      }
      s.push_back(3);
      classes[c].push_back(s);
    }
  }
  return classes;
}

}  // namespace

TEST_CASE("cosine_similarity examples and errors") {
  std::vector<double> e1{1, 0}, e2{0, 1}, a{1, 2, 2}, b{2, 1, 2};
  CHECK(cosine_similarity<double>(e1, e1) == 1.0);
  CHECK(cosine_similarity<double>(e1, e2) == 0.0);
  CHECK(cosine_similarity<double>(a, b) == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  std::vector<float> zero{0, 0}, one{1, 0};
  CHECK_THROWS_AS(cosine_similarity<float>(zero, one), ZeroVector);
  CHECK_THROWS_AS(cosine_similarity<double>(a, e1), ShapeMismatch);
}

TEST_CASE("cosine_similarity properties") {
  nn::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(20);
    std::vector<double> u(n), v(n), su(n);
    const double alpha = 0.01 + rng.uniform() * 100.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = rng.uniform(-1, 1);
      v[i] = rng.uniform(-1, 1);
      su[i] = alpha * u[i];
    }
    const double s = cosine_similarity<double>(u, v);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(s == cosine_similarity<double>(v, u));
    CHECK(cosine_similarity<double>(su, v) == doctest::Approx(s).epsilon(1e-6).scale(1.0));
    refnn::Vec lu(u.begin(), u.end()), lv(v.begin(), v.end());
    CHECK(s == doctest::Approx(double(refnn::cosine(lu, lv))).epsilon(1e-12).scale(1.0));
    CHECK(cosine_similarity<double>(u, u) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("siamese_loss examples") {
  for (double s : {-1.0, 0.0, 0.37, 1.0}) {
    CHECK(siamese_loss(s, 1, {0.0, 0.0}) == 0.125);
    CHECK(siamese_loss(s, 0, {0.0, 0.0}) == 0.125);
  }
  CHECK(siamese_loss(0.8, 1, {2.0, -1.0}) == doctest::Approx(0.062780).epsilon(1e-5));
  CHECK(siamese_loss(0.8, 1, {2.0, -1.0}) == doctest::Approx(double(oracle_loss(0.8L, 1, 2.0L, -1.0L))).epsilon(1e-14));
}

TEST_CASE("siamese_loss: range and analytic derivatives") {
  nn::Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const double s = rng.uniform(-1, 1), w = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
    const int y = trial % 2;
    auto g = siamese_loss_grad(s, y, {w, b});
    CHECK(g.loss >= 0.0);
    CHECK(g.loss <= 0.5);
    CHECK(g.loss == doctest::Approx(double(oracle_loss(s, y, w, b))).epsilon(1e-13));
    const long double h = 1e-6L;
    auto fd = [&](long double ds, long double dw, long double db) {
      return double((oracle_loss(s + ds, y, w + dw, b + db) - oracle_loss(s - ds, y, w - dw, b - db)) / (2 * h));
    };
    CHECK(g.d_s == doctest::Approx(fd(h, 0, 0)).epsilon(1e-6).scale(1e-3));
    CHECK(g.d_w == doctest::Approx(fd(0, h, 0)).epsilon(1e-6).scale(1e-3));
    CHECK(g.d_b == doctest::Approx(fd(0, 0, h)).epsilon(1e-6).scale(1e-3));
  }
}

TEST_CASE("sample_pair_indices: balance, validity and determinism") {
  std::vector<std::size_t> sizes{3, 2, 5};
  nn::Rng r1(9), r2(9);
  auto a = sample_pair_indices(sizes, 101, r1);
  CHECK(a == sample_pair_indices(sizes, 101, r2));
  REQUIRE(a.size() == 101);
  int pos = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& p = a[i];
    CHECK(p.y == (i % 2 == 0 ? 1 : 0));
    pos += p.y;
    CHECK(p.item_a < sizes[p.class_a]);
    CHECK(p.item_b < sizes[p.class_b]);
    if (p.y == 1) {
      CHECK(p.class_a == p.class_b);
      CHECK(p.item_a != p.item_b);
    } else {
      CHECK(p.class_a != p.class_b);
    }
  }
  CHECK(pos == 51);

  nn::Rng r3(0);
  auto two = sample_pair_indices({2, 2}, 2, r3);
  CHECK(two[0].y == 1);
  CHECK(two[1].y == 0);
  CHECK(sample_pair_indices({2, 2}, 0, r3).empty());
}

TEST_CASE("sample_pair_indices: class choice is roughly uniform") {
  nn::Rng rng(4);
  auto pairs = sample_pair_indices({2, 10, 2, 3}, 8000, rng);
  std::map<std::size_t, int> pos_class, neg_class;
  for (const auto& p : pairs) {
    if (p.y) {
      ++pos_class[p.class_a];
    } else {
      ++neg_class[p.class_a];
      ++neg_class[p.class_b];
    }
  }
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(std::abs(pos_class[c] - 1000) < 150);
    CHECK(std::abs(neg_class[c] - 2000) < 200);
  }
}

TEST_CASE("sample_pairs errors") {
  nn::Rng rng(0);
  CHECK_THROWS_AS(sample_pair_indices({5}, 4, rng), InsufficientClasses);
  CHECK_THROWS_AS(sample_pair_indices({}, 4, rng), InsufficientClasses);
  CHECK_THROWS_AS(sample_pair_indices({5, 1}, 4, rng), InsufficientSamples);
  std::vector<std::vector<IdSequence>> classes{{{2, 3}, {2, 4, 3}}, {{2, 5, 3}, {2, 6, 3}}};
  auto pairs = sample_pairs(classes, 4, rng);
  REQUIRE(pairs.size() == 4);
  CHECK(pairs[0].y == 1);
  CHECK(pairs[0].ids_a != pairs[0].ids_b);
}

TEST_CASE("calibration accessors") {
  nn::ParamStore<float> p;
  init_calibration(p);
  CHECK(get_calibration(p) == Calibration{1.0, 0.0});
  set_calibration(p, {2.5, -0.5});
  CHECK(get_calibration(p) == Calibration{2.5, -0.5});
  CHECK(p.at(param_names::kCalibrationW).shape() == std::vector<std::size_t>{1});
}

TEST_CASE("pair_loss matches a hand-unrolled reference and is branch symmetric") {
  auto cfg = small_cfg();
  auto p = random_model<double>(3, cfg);
  set_calibration(p, {1.7, -0.3});
  PairSample pair{{2, 4, 5, 3}, {2, 5, 6, 7, 3}, 1};
  auto f = pair_loss(p, cfg, pair);
  auto [ha, ca] = refnn::encode(p, pair.ids_a);
  auto [hb, cb] = refnn::encode(p, pair.ids_b);
  const long double s = refnn::cosine(ha, hb);
  CHECK(f.similarity == doctest::Approx(double(s)).epsilon(1e-12));
  CHECK(f.loss == doctest::Approx(double(oracle_loss(s, 1, 1.7L, -0.3L))).epsilon(1e-12));

  PairSample swapped{pair.ids_b, pair.ids_a, 1};
  auto g = pair_loss(p, cfg, swapped);
  CHECK(g.similarity == f.similarity);
  CHECK(g.loss == f.loss);
}

TEST_CASE("identical pair: s is exactly 1 and both branches contribute the same gradient") {
  auto cfg = small_cfg();
  auto p = random_model<double>(8, cfg);
  PairSample pair{{2, 4, 9, 5, 3}, {2, 4, 9, 5, 3}, 1};
  auto grads = nn::zero_gradients(p);
  auto ga = nn::zero_gradients(p), gb = nn::zero_gradients(p);
  auto f = pair_loss(p, cfg, pair, &grads, &ga, &gb);
  CHECK(f.similarity == 1.0);

  // Branch gradients also sum to the total on a non-degenerate pair.
  PairSample near{{2, 4, 9, 5, 3}, {2, 4, 9, 6, 3}, 0};
  auto grads2 = nn::zero_gradients(p);
  auto ga2 = nn::zero_gradients(p), gb2 = nn::zero_gradients(p);
  pair_loss(p, cfg, near, &grads2, &ga2, &gb2);

  for (const auto& name : {param_names::kEncoderW, param_names::kEncoderU, param_names::kEncoderB,
                           param_names::kEmbedding}) {
    for (std::size_t i = 0; i < ga.at(name).size(); ++i) {
      CHECK(ga.at(name)[i] == doctest::Approx(gb.at(name)[i]).epsilon(1e-6).scale(1e-6));
      CHECK(grads.at(name)[i] == doctest::Approx(ga.at(name)[i] + gb.at(name)[i]).epsilon(1e-12).scale(1e-12));
      CHECK(grads2.at(name)[i] ==
            doctest::Approx(ga2.at(name)[i] + gb2.at(name)[i]).epsilon(1e-12).scale(1e-12));
    }
  }
}

TEST_CASE("pair_loss gradients pass a finite-difference check") {
  EncoderConfig cfg{7, 3, 4, 64};
  auto p = random_model<double>(21, cfg);
  set_calibration(p, {1.3, 0.2});
  for (int y : {0, 1}) {
    PairSample pair{{2, 4, 5, 6, 3}, {2, 6, 4, 3}, y};
    nn::LossFunction<double> loss = [&](const nn::ParamStore<double>& s, nn::Gradients<double>* g) {
      return pair_loss(s, cfg, pair, g).loss;
    };
    nn::Rng pick(5);
    auto report = nn::gradient_check(loss, p, 1e-5, 1e-4, 100, pick);
    CAPTURE(report.worst);
    CAPTURE(report.max_relative_error);
    CHECK(report.passed);
  }
}

TEST_CASE("train_epoch: learning rate 0 is a no-op; thread count does not matter") {
  auto cfg = small_cfg();
  nn::Rng rng(1);
  auto pairs = sample_pairs(toy_classes(6, 1), 40, rng);
  SiameseConfig sc;
  sc.learning_rate = 0.0;
  sc.batch_size = 8;
  auto p = random_model(2, cfg);
  auto before = p;
  nn::Rng r(0);
  train_epoch(p, cfg, sc, pairs, r);
  for (const auto& name : p.names()) CHECK(p.at(name) == before.at(name));

  sc.learning_rate = 0.01;
  auto p1 = random_model(2, cfg), p3 = p1;
  nn::Rng ra(4), rb(4);
  auto e1 = train_epoch(p1, cfg, sc, pairs, ra, 1);
  auto e3 = train_epoch(p3, cfg, sc, pairs, rb, 3);
  CHECK(e1.mean_loss == e3.mean_loss);
  CHECK(p1 == p3);
  CHECK_THROWS_AS(train_epoch(p1, cfg, sc, {}, ra), std::invalid_argument);
}

TEST_CASE("train_epoch: toy four-class corpus, loss falls over every 5-epoch window") {
  auto cfg = small_cfg();
  auto classes = toy_classes(8, 3);
  auto p = random_model(6, cfg);
  SiameseConfig sc;
  sc.learning_rate = 0.01;
  sc.batch_size = 16;
  nn::Rng rng(7);
  std::vector<double> losses;
  for (int e = 0; e < 30; ++e) {
    auto pairs = sample_pairs(classes, 128, rng);
    losses.push_back(train_epoch(p, cfg, sc, pairs, rng).mean_loss);
  }
  for (std::size_t e = 0; e + 5 < losses.size(); ++e) {
    CAPTURE(e);
    CHECK(losses[e + 5] < losses[e]);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto cfg = small_cfg();
  auto p = random_model(5, cfg);
  set_calibration(p, {1.25f, -0.0625f});
  p.at(param_names::kEncoderW)[0] = 1.17549435e-38f;
  p.at(param_names::kEncoderW)[1] = -3.4028235e38f;
  p.at(param_names::kEncoderW)[2] = 0.1f;
  auto ckpt = make_checkpoint(p, cfg, "0123456789abcdef");
  auto text = checkpoint_to_text(ckpt);
  CHECK(text.rfind("codetwin-checkpoint v1\n", 0) == 0);
  auto back = checkpoint_from_text(text, "0123456789abcdef");
  CHECK(back.config == cfg);
  CHECK(back.calibration == Calibration{1.25, -0.0625});
  CHECK(back.vocab_fingerprint == "0123456789abcdef");
  CHECK(back.params.names() == ckpt.params.names());
  for (const auto& name : ckpt.params.names()) CHECK(back.params.at(name) == ckpt.params.at(name));
  CHECK(checkpoint_to_text(back) == text);
  CHECK(trainable_params(back) == trainable_params(ckpt));
  CHECK_FALSE(back.params.contains(param_names::kCalibrationW));

  auto path = (std::filesystem::temp_directory_path() / "codetwin_test.ckpt").string();
  save_checkpoint(ckpt, path);
  CHECK(load_checkpoint(path).params.at(param_names::kEmbedding) == ckpt.params.at(param_names::kEmbedding));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint load errors") {
  auto cfg = small_cfg();
  auto ckpt = make_checkpoint(random_model(5, cfg), cfg, "0123456789abcdef");
  const auto text = checkpoint_to_text(ckpt);
  CHECK_THROWS_AS(checkpoint_from_text(text, "fedcba9876543210"), VocabMismatch);
  CHECK_THROWS_AS(checkpoint_from_text(text.substr(0, text.size() / 2)), FormatError);
  CHECK_THROWS_AS(checkpoint_from_text(text.substr(0, text.size() - 4)), FormatError);
  CHECK_THROWS_AS(checkpoint_from_text(""), FormatError);
  CHECK_THROWS_AS(checkpoint_from_text("garbage\n"), FormatError);

  auto replace = [&](const std::string& from, const std::string& to) {
    std::string t = text;
    auto pos = t.find(from);
    REQUIRE(pos != std::string::npos);
    t.replace(pos, from.size(), to);
    return t;
  };
  CHECK_THROWS_AS(checkpoint_from_text(replace("hidden_dim=5", "hidden_dim=6")), ShapeMismatch);
  CHECK_THROWS_AS(checkpoint_from_text(replace("tensor enc.embed 2 10 4", "tensor enc.embed 2 10 3")),
                  ShapeMismatch);
  CHECK_THROWS_AS(checkpoint_from_text(replace("tensor enc.embed", "tensor enc.bogus")), FormatError);
  CHECK_THROWS_AS(checkpoint_from_text(replace("w=1", "w=nan")), FormatError);
  CHECK_THROWS_AS(checkpoint_from_text(replace("tensors 4", "tensors 3")), FormatError);
}
