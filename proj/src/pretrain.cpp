#include "codetwin/pretrain.hpp"

#include <numeric>

namespace codetwin {

using nn::Gradients;
using nn::Matrix;
using nn::ParamStore;
using nn::Tensor;
using nn::Vector;

namespace {

template <class T>
struct AutoencoderPass {
  EncoderTrace<T> encoder;
  nn::LstmTrace<T> decoder;
  Matrix<T> logits;  // [n-1 x V]
};

template <class T>
void autoencoder_forward(const ParamStore<T>& params, const EncoderConfig& cfg, std::span<const TokenId> ids,
                         AutoencoderPass<T>& pass) {
  check_ids(ids, cfg.vocab_size);
  if (ids.size() < 2) throw EmptySequence("autoencoder needs at least two tokens");
  encoder_forward(params, cfg, ids, pass.encoder);
  auto inputs = ids.first(ids.size() - 1);
  nn::lstm_sequence_forward(lstm_weights(params, "dec.lstm"), embed_tokens(params, inputs),
                            pass.encoder.final_h(), pass.encoder.final_c(), pass.decoder);
  pass.logits.noalias() = pass.decoder.h * params.at(param_names::kOutputW).matrix().transpose();
  pass.logits.rowwise() += params.at(param_names::kOutputB).vector().transpose();
}

template <class T>
std::span<const T> row_span(const Matrix<T>& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

Gradients<float> training_gradients(const ParamStore<float>& params) {
  Gradients<float> g;
  for (const auto& [name, slot] : params.slots()) {
    if (name.rfind("enc.", 0) == 0 || name.rfind(param_names::kDecoderPrefix, 0) == 0) {
      g.emplace(name, Tensor<float>(slot.value.shape()));
    }
  }
  return g;
}

}  // namespace

void PretrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be nonnegative");
  if (!teacher_forcing) throw std::invalid_argument("only teacher-forced pre-training is supported");
}

template <class T>
void init_decoder(ParamStore<T>& params, const EncoderConfig& cfg, nn::Rng& rng) {
  cfg.validate();
  const std::size_t V = cfg.vocab_size, E = cfg.embed_dim, H = cfg.hidden_dim;
  params.add(param_names::kDecoderW, uniform_init<T>({4 * H, E}, E, rng));
  params.add(param_names::kDecoderU, uniform_init<T>({4 * H, H}, H, rng));
  Tensor<T> b({4 * H});
  for (std::size_t k = H; k < 2 * H; ++k) b[k] = T(1);
  params.add(param_names::kDecoderB, std::move(b));
  params.add(param_names::kOutputW, uniform_init<T>({V, H}, H, rng));
  params.add(param_names::kOutputB, Tensor<T>({V}));
}

template <class T>
double autoencoder_loss(const ParamStore<T>& params, const EncoderConfig& cfg, std::span<const TokenId> ids,
                        Gradients<T>* grads) {
  AutoencoderPass<T> pass;
  autoencoder_forward(params, cfg, ids, pass);
  const auto targets = static_cast<Eigen::Index>(ids.size() - 1);
  const auto V = pass.logits.cols();
  Matrix<T> dlogits(targets, V);
  double total = 0.0;
  for (Eigen::Index t = 0; t < targets; ++t) {
    std::span<T> d(dlogits.data() + t * V, static_cast<std::size_t>(V));
    total += nn::softmax_xent(row_span(pass.logits, t), static_cast<std::size_t>(ids[t + 1]),
                              grads ? d : std::span<T>{});
  }
  const double loss = total / static_cast<double>(targets);
  if (!grads) return loss;

  dlogits /= static_cast<T>(targets);
  const auto Wout = params.at(param_names::kOutputW).matrix();
  grads->at(param_names::kOutputW).matrix().noalias() += dlogits.transpose() * pass.decoder.h;
  grads->at(param_names::kOutputB).vector() += dlogits.colwise().sum().transpose();
  Matrix<T> dh_dec = dlogits * Wout;
  const auto H = pass.decoder.h.cols();
  Matrix<T> dx;
  Vector<T> dh0, dc0;
  nn::lstm_sequence_backward(lstm_weights(params, "dec.lstm"), pass.decoder, dh_dec, Vector<T>(Vector<T>::Zero(H)),
                             lstm_grads(*grads, "dec.lstm"), dx, dh0, dc0);
  embed_backward(*grads, ids.first(ids.size() - 1), dx);
  encoder_backward(params, pass.encoder, dh0, dc0, *grads);
  return loss;
}

EpochReport pretrain_epoch(ParamStore<float>& params, const EncoderConfig& cfg, const PretrainConfig& pcfg,
                           const std::vector<IdSequence>& corpus, nn::Rng& rng, std::size_t threads) {
  pcfg.validate();
  if (corpus.empty()) throw EmptyCorpus("pre-training corpus is empty");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());

  const nn::AdamConfig adam{pcfg.learning_rate};
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += pcfg.batch_size) {
    const std::size_t n = std::min(pcfg.batch_size, order.size() - start);
    std::vector<Gradients<float>> per_sample(n);
    std::vector<double> losses(n);
    parallel_for(n, threads, [&](std::size_t i) {
      per_sample[i] = training_gradients(params);
      losses[i] = autoencoder_loss(params, cfg, corpus[order[start + i]], &per_sample[i]);
    });
    Gradients<float> batch = std::move(per_sample[0]);
    for (std::size_t i = 1; i < n; ++i) nn::accumulate(batch, per_sample[i]);
    nn::scale(batch, 1.0f / static_cast<float>(n));
    for (double l : losses) loss_sum += l;
    nn::adam_update(params, batch, adam);
  }
  return {0, loss_sum / static_cast<double>(corpus.size()), corpus.size()};
}

double reconstruction_accuracy(const ParamStore<float>& params, const EncoderConfig& cfg,
                               const std::vector<IdSequence>& corpus) {
  if (corpus.empty()) throw EmptyCorpus("accuracy probe needs a nonempty corpus");
  std::size_t correct = 0, total = 0;
  for (const auto& ids : corpus) {
    AutoencoderPass<float> pass;
    autoencoder_forward(params, cfg, ids, pass);
    for (Eigen::Index t = 0; t < pass.logits.rows(); ++t) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < pass.logits.cols(); ++k) {
        if (pass.logits(t, k) > pass.logits(t, best)) best = k;
      }
      correct += best == ids[static_cast<std::size_t>(t) + 1] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

template <class T>
ParamStore<T> strip_decoder(const ParamStore<T>& params) {
  ParamStore<T> out;
  for (const auto& [name, slot] : params.slots()) {
    if (name.rfind(param_names::kDecoderPrefix, 0) != 0) out.add(name, slot.value);
  }
  return out;
}

#define CODETWIN_INSTANTIATE(T)                                                                          \
  template void init_decoder(ParamStore<T>&, const EncoderConfig&, nn::Rng&);                           \
  template double autoencoder_loss(const ParamStore<T>&, const EncoderConfig&, std::span<const TokenId>, \
                                   Gradients<T>*);                                                      \
  template ParamStore<T> strip_decoder(const ParamStore<T>&);

CODETWIN_INSTANTIATE(float)
CODETWIN_INSTANTIATE(double)

#undef CODETWIN_INSTANTIATE

}  // namespace codetwin
