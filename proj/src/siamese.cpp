#include "codetwin/siamese.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "codetwin/textio.hpp"

namespace codetwin {

using nn::Gradients;
using nn::ParamStore;
using nn::Tensor;
using nn::Vector;

void SiameseConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (pairs_per_epoch < 1) throw std::invalid_argument("pairs_per_epoch must be at least 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be nonnegative");
}

template <class T>
double cosine_similarity(std::span<const T> v1, std::span<const T> v2) {
  if (v1.size() != v2.size()) throw ShapeMismatch("cosine similarity of vectors with different lengths");
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < v1.size(); ++i) {
    const double a = static_cast<double>(v1[i]), b = static_cast<double>(v2[i]);
    dot += a * b;
    n1 += a * a;
    n2 += b * b;
  }
  if (std::sqrt(n1) < 1e-12 || std::sqrt(n2) < 1e-12) throw ZeroVector("cosine similarity of a zero vector");
  // sqrt(n1 * n2) rather than sqrt(n1) * sqrt(n2): identical vectors give exactly 1.
  return std::clamp(dot / std::sqrt(n1 * n2), -1.0, 1.0);
}

double siamese_loss(double s, int y, const Calibration& cal) { return siamese_loss_grad(s, y, cal).loss; }

SiameseLossGrad siamese_loss_grad(double s, int y, const Calibration& cal) {
  const double p = nn::sigmoid(cal.w * s + cal.b);
  const double r = static_cast<double>(y) - p;
  const double dz = -r * p * (1.0 - p);
  return {0.5 * r * r, dz * cal.w, dz * s, dz};
}

std::vector<PairIndex> sample_pair_indices(const std::vector<std::size_t>& class_sizes, std::size_t n_pairs,
                                           nn::Rng& rng) {
  if (class_sizes.size() < 2) throw InsufficientClasses("pair sampling needs at least two classes");
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    if (class_sizes[c] < 2) {
      throw InsufficientSamples("class " + std::to_string(c) + " has fewer than two samples");
    }
  }
  const std::uint64_t k = class_sizes.size();
  std::vector<PairIndex> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    PairIndex p;
    if (i % 2 == 0) {
      p.class_a = p.class_b = rng.uniform_int(k);
      const std::uint64_t m = class_sizes[p.class_a];
      p.item_a = rng.uniform_int(m);
      p.item_b = rng.uniform_int(m - 1);
      if (p.item_b >= p.item_a) ++p.item_b;
      p.y = 1;
    } else {
      p.class_a = rng.uniform_int(k);
      p.class_b = rng.uniform_int(k - 1);
      if (p.class_b >= p.class_a) ++p.class_b;
      p.item_a = rng.uniform_int(class_sizes[p.class_a]);
      p.item_b = rng.uniform_int(class_sizes[p.class_b]);
      p.y = 0;
    }
    pairs.push_back(p);
  }
  return pairs;
}

std::vector<PairSample> sample_pairs(const std::vector<std::vector<IdSequence>>& classes, std::size_t n_pairs,
                                     nn::Rng& rng) {
  std::vector<std::size_t> sizes;
  for (const auto& c : classes) sizes.push_back(c.size());
  std::vector<PairSample> out;
  out.reserve(n_pairs);
  for (const auto& p : sample_pair_indices(sizes, n_pairs, rng)) {
    out.push_back({classes[p.class_a][p.item_a], classes[p.class_b][p.item_b], p.y});
  }
  return out;
}

template <class T>
Calibration get_calibration(const ParamStore<T>& params) {
  return {static_cast<double>(params.at(param_names::kCalibrationW)[0]),
          static_cast<double>(params.at(param_names::kCalibrationB)[0])};
}

template <class T>
void set_calibration(ParamStore<T>& params, const Calibration& cal) {
  params.at(param_names::kCalibrationW)[0] = static_cast<T>(cal.w);
  params.at(param_names::kCalibrationB)[0] = static_cast<T>(cal.b);
}

template <class T>
void init_calibration(ParamStore<T>& params, const Calibration& cal) {
  params.add(param_names::kCalibrationW, Tensor<T>({1}, static_cast<T>(cal.w)));
  params.add(param_names::kCalibrationB, Tensor<T>({1}, static_cast<T>(cal.b)));
}

template <class T>
PairForward pair_loss(const ParamStore<T>& params, const EncoderConfig& cfg, const PairSample& pair,
                      Gradients<T>* grads, Gradients<T>* branch_a, Gradients<T>* branch_b) {
  if (pair.y != 0 && pair.y != 1) throw std::invalid_argument("pair label must be 0 or 1");
  EncoderTrace<T> ta, tb;
  encoder_forward(params, cfg, pair.ids_a, ta);
  encoder_forward(params, cfg, pair.ids_b, tb);
  const Vector<T> va = ta.final_h(), vb = tb.final_h();
  const double s = cosine_similarity<T>(std::span<const T>(va.data(), va.size()), std::span<const T>(vb.data(), vb.size()));
  const Calibration cal = get_calibration(params);
  const SiameseLossGrad lg = siamese_loss_grad(s, pair.y, cal);
  if (!grads && !branch_a && !branch_b) return {s, lg.loss};

  // d s / d va = vb / (|va||vb|) - s * va / |va|^2, likewise for vb.
  const double na = va.template cast<double>().norm(), nb = vb.template cast<double>().norm();
  const Vector<double> ga = lg.d_s * (vb.template cast<double>() / (na * nb) - s * va.template cast<double>() / (na * na));
  const Vector<double> gb = lg.d_s * (va.template cast<double>() / (na * nb) - s * vb.template cast<double>() / (nb * nb));
  const Vector<T> zero = Vector<T>::Zero(va.size());

  auto run_branch = [&](const EncoderTrace<T>& trace, const Vector<double>& dv, Gradients<T>* own) {
    if (own) {
      encoder_backward(params, trace, dv.template cast<T>().eval(), zero, *own);
      if (grads) nn::accumulate(*grads, *own);
    } else if (grads) {
      encoder_backward(params, trace, dv.template cast<T>().eval(), zero, *grads);
    }
  };
  run_branch(ta, ga, branch_a);
  run_branch(tb, gb, branch_b);
  if (grads) {
    grads->at(param_names::kCalibrationW)[0] += static_cast<T>(lg.d_w);
    grads->at(param_names::kCalibrationB)[0] += static_cast<T>(lg.d_b);
  }
  return {s, lg.loss};
}

namespace {

Gradients<float> siamese_gradients(const ParamStore<float>& params) {
  Gradients<float> g;
  for (const auto& [name, slot] : params.slots()) {
    if (name.rfind("enc.", 0) == 0 || name.rfind("cal.", 0) == 0) g.emplace(name, Tensor<float>(slot.value.shape()));
  }
  return g;
}

}  // namespace

EpochReport train_epoch(ParamStore<float>& params, const EncoderConfig& cfg, const SiameseConfig& scfg,
                        const std::vector<PairSample>& pairs, nn::Rng& rng, std::size_t threads) {
  scfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train_epoch needs at least one pair");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());

  const nn::AdamConfig adam{scfg.learning_rate};
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += scfg.batch_size) {
    const std::size_t n = std::min(scfg.batch_size, order.size() - start);
    std::vector<Gradients<float>> per_pair(n);
    std::vector<double> losses(n);
    parallel_for(n, threads, [&](std::size_t i) {
      per_pair[i] = siamese_gradients(params);
      losses[i] = pair_loss(params, cfg, pairs[order[start + i]], &per_pair[i]).loss;
    });
    Gradients<float> batch = std::move(per_pair[0]);
    for (std::size_t i = 1; i < n; ++i) nn::accumulate(batch, per_pair[i]);
    nn::scale(batch, 1.0f / static_cast<float>(n));
    for (double l : losses) loss_sum += l;
    nn::adam_update(params, batch, adam);
  }
  return {0, loss_sum / static_cast<double>(pairs.size()), pairs.size()};
}

// ---------------------------------------------------------------------------
// Checkpoint text format
//
//   codetwin-checkpoint v1
//   config vocab_size=<n> embed_dim=<n> hidden_dim=<n> max_len=<n>
//   calibration w=<float> b=<float>
//   vocab_fingerprint <16 hex digits>
//   tensors <count>
//   tensor <name> <rank> <dim>...
//   <values, at most 16 per line>
//   ...
//   end

namespace {

constexpr std::string_view kCheckpointHeader = "codetwin-checkpoint v1";
constexpr std::size_t kValuesPerLine = 16;

std::vector<std::vector<std::size_t>> expected_shapes(const EncoderConfig& c, const std::string& name) {
  const std::size_t V = c.vocab_size, E = c.embed_dim, H = c.hidden_dim;
  if (name == param_names::kEmbedding) return {{V, E}};
  if (name == param_names::kEncoderW || name == param_names::kDecoderW) return {{4 * H, E}};
  if (name == param_names::kEncoderU || name == param_names::kDecoderU) return {{4 * H, H}};
  if (name == param_names::kEncoderB || name == param_names::kDecoderB) return {{4 * H}};
  if (name == param_names::kOutputW) return {{V, H}};
  if (name == param_names::kOutputB) return {{V}};
  return {};
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : lines_(split_lines(text)) {}
  std::string_view next(const char* what) {
    if (pos_ >= lines_.size()) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    return lines_[pos_++];
  }
  std::size_t line_number() const { return pos_; }

 private:
  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
};

std::vector<std::string> words(std::string_view line) {
  std::istringstream ss{std::string(line)};
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

template <class V>
V parse_number(std::string_view text, const std::string& what) {
  V v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("bad " + what + " '" + std::string(text) + "'");
  }
  return v;
}

std::string key_value(const std::string& word, const std::string& key) {
  if (word.rfind(key + "=", 0) != 0) throw FormatError("expected '" + key + "=' in checkpoint header");
  return word.substr(key.size() + 1);
}

}  // namespace

std::string checkpoint_to_text(const ModelCheckpoint& ckpt) {
  const EncoderConfig& c = ckpt.config;
  std::string out(kCheckpointHeader);
  out += "\nconfig vocab_size=" + std::to_string(c.vocab_size) + " embed_dim=" + std::to_string(c.embed_dim) +
         " hidden_dim=" + std::to_string(c.hidden_dim) + " max_len=" + std::to_string(c.max_len) + "\n";
  out += "calibration w=" + format_float(static_cast<float>(ckpt.calibration.w)) +
         " b=" + format_float(static_cast<float>(ckpt.calibration.b)) + "\n";
  out += "vocab_fingerprint " + ckpt.vocab_fingerprint + "\n";
  out += "tensors " + std::to_string(ckpt.params.slots().size()) + "\n";
  for (const auto& [name, slot] : ckpt.params.slots()) {
    const auto& shape = slot.value.shape();
    out += "tensor " + name + " " + std::to_string(shape.size());
    for (auto d : shape) out += " " + std::to_string(d);
    out += "\n";
    for (std::size_t i = 0; i < slot.value.size(); ++i) {
      out += format_float(slot.value[i]);
      out += (i + 1 == slot.value.size() || (i + 1) % kValuesPerLine == 0) ? '\n' : ' ';
    }
  }
  out += "end\n";
  return out;
}

ModelCheckpoint checkpoint_from_text(std::string_view text, const std::string& expected_fingerprint) {
  LineReader in(text);
  if (in.next("header") != kCheckpointHeader) throw FormatError("missing 'codetwin-checkpoint v1' header");
  ModelCheckpoint ckpt;

  auto config = words(in.next("config"));
  if (config.size() != 5 || config[0] != "config") throw FormatError("malformed config line");
  ckpt.config.vocab_size = parse_number<std::size_t>(key_value(config[1], "vocab_size"), "vocab_size");
  ckpt.config.embed_dim = parse_number<std::size_t>(key_value(config[2], "embed_dim"), "embed_dim");
  ckpt.config.hidden_dim = parse_number<std::size_t>(key_value(config[3], "hidden_dim"), "hidden_dim");
  ckpt.config.max_len = parse_number<std::size_t>(key_value(config[4], "max_len"), "max_len");
  try {
    ckpt.config.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid config: ") + e.what());
  }

  auto cal = words(in.next("calibration"));
  if (cal.size() != 3 || cal[0] != "calibration") throw FormatError("malformed calibration line");
  ckpt.calibration.w = parse_number<float>(key_value(cal[1], "w"), "calibration w");
  ckpt.calibration.b = parse_number<float>(key_value(cal[2], "b"), "calibration b");
  if (!std::isfinite(ckpt.calibration.w) || !std::isfinite(ckpt.calibration.b)) {
    throw FormatError("calibration must be finite");
  }

  auto fp = words(in.next("vocab_fingerprint"));
  if (fp.size() != 2 || fp[0] != "vocab_fingerprint") throw FormatError("malformed vocab_fingerprint line");
  ckpt.vocab_fingerprint = fp[1];
  if (!expected_fingerprint.empty() && expected_fingerprint != ckpt.vocab_fingerprint) {
    throw VocabMismatch("checkpoint was trained with vocabulary " + ckpt.vocab_fingerprint +
                        ", given vocabulary is " + expected_fingerprint);
  }

  auto count_line = words(in.next("tensor count"));
  if (count_line.size() != 2 || count_line[0] != "tensors") throw FormatError("malformed tensors line");
  const auto count = parse_number<std::size_t>(count_line[1], "tensor count");
  for (std::size_t t = 0; t < count; ++t) {
    auto head = words(in.next("tensor header"));
    if (head.size() < 3 || head[0] != "tensor") throw FormatError("malformed tensor header");
    const std::string& name = head[1];
    const auto rank = parse_number<std::size_t>(head[2], "tensor rank");
    if (head.size() != 3 + rank) throw FormatError("tensor '" + name + "' rank does not match its dimensions");
    std::vector<std::size_t> shape;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(parse_number<std::size_t>(head[3 + i], "dimension"));
    auto allowed = expected_shapes(ckpt.config, name);
    if (allowed.empty()) throw FormatError("unknown tensor '" + name + "'");
    if (allowed[0] != shape) {
      throw ShapeMismatch("tensor '" + name + "' has shape " + nn::shape_to_string(shape) + ", config implies " +
                          nn::shape_to_string(allowed[0]));
    }
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<float> values;
    values.reserve(n);
    while (values.size() < n) {
      for (const auto& w : words(in.next("tensor values"))) {
        if (values.size() == n) throw FormatError("too many values for tensor '" + name + "'");
        values.push_back(parse_number<float>(w, "value"));
      }
    }
    if (ckpt.params.contains(name)) throw FormatError("duplicate tensor '" + name + "'");
    ckpt.params.add(name, Tensor<float>(shape, std::move(values)));
  }
  if (in.next("end marker") != "end") throw FormatError("missing 'end' marker");
  for (const auto& required : {param_names::kEmbedding, param_names::kEncoderW, param_names::kEncoderU,
                               param_names::kEncoderB}) {
    if (!ckpt.params.contains(required)) throw FormatError("checkpoint lacks tensor '" + required + "'");
  }
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  write_file(path, checkpoint_to_text(ckpt));
}

ModelCheckpoint load_checkpoint(const std::string& path, const std::string& expected_fingerprint) {
  return checkpoint_from_text(read_file(path), expected_fingerprint);
}

ParamStore<float> trainable_params(const ModelCheckpoint& ckpt) {
  ParamStore<float> params;
  for (const auto& [name, slot] : ckpt.params.slots()) params.add(name, slot.value);
  init_calibration(params, ckpt.calibration);
  return params;
}

ModelCheckpoint make_checkpoint(const ParamStore<float>& params, const EncoderConfig& cfg,
                                const std::string& vocab_fingerprint) {
  ModelCheckpoint ckpt;
  ckpt.config = cfg;
  ckpt.vocab_fingerprint = vocab_fingerprint;
  if (params.contains(param_names::kCalibrationW)) ckpt.calibration = get_calibration(params);
  for (const auto& [name, slot] : params.slots()) {
    if (name.rfind("cal.", 0) == 0) continue;
    ckpt.params.add(name, slot.value);
  }
  return ckpt;
}

#define CODETWIN_INSTANTIATE(T)                                                                           \
  template double cosine_similarity(std::span<const T>, std::span<const T>);                              \
  template Calibration get_calibration(const ParamStore<T>&);                                             \
  template void set_calibration(ParamStore<T>&, const Calibration&);                                      \
  template void init_calibration(ParamStore<T>&, const Calibration&);                                     \
  template PairForward pair_loss(const ParamStore<T>&, const EncoderConfig&, const PairSample&, Gradients<T>*, \
                                 Gradients<T>*, Gradients<T>*);

CODETWIN_INSTANTIATE(float)
CODETWIN_INSTANTIATE(double)

#undef CODETWIN_INSTANTIATE

}  // namespace codetwin
