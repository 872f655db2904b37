#include "codetwin/encoder.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace codetwin {

using nn::Gradients;
using nn::Matrix;
using nn::ParamStore;
using nn::Tensor;
using nn::Vector;

void EncoderConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("encoder dimensions must be at least 1");
  }
  if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
}

template <class T>
Tensor<T> uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, nn::Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-r, r));
  return t;
}

template <class T>
void init_encoder(ParamStore<T>& params, const EncoderConfig& cfg, nn::Rng& rng) {
  cfg.validate();
  const std::size_t V = cfg.vocab_size, E = cfg.embed_dim, H = cfg.hidden_dim;
  params.add(param_names::kEmbedding, uniform_init<T>({V, E}, 1, rng));
  params.add(param_names::kEncoderW, uniform_init<T>({4 * H, E}, E, rng));
  params.add(param_names::kEncoderU, uniform_init<T>({4 * H, H}, H, rng));
  Tensor<T> b({4 * H});
  for (std::size_t k = H; k < 2 * H; ++k) b[k] = T(1);
  params.add(param_names::kEncoderB, std::move(b));
}

template <class T>
nn::LstmWeights<T> lstm_weights(const ParamStore<T>& params, const std::string& prefix) {
  return {params.at(prefix + ".W"), params.at(prefix + ".U"), params.at(prefix + ".b")};
}

template <class T>
nn::LstmGrads<T> lstm_grads(Gradients<T>& grads, const std::string& prefix) {
  return {grads.at(prefix + ".W"), grads.at(prefix + ".U"), grads.at(prefix + ".b")};
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size) {
  if (ids.empty()) throw EmptySequence("cannot encode an empty sequence");
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab_size) {
      throw IdOutOfRange("token id " + std::to_string(ids[t]) + " at position " + std::to_string(t) +
                         " is outside the vocabulary of " + std::to_string(vocab_size));
    }
  }
}

template <class T>
Matrix<T> embed_tokens(const ParamStore<T>& params, std::span<const TokenId> ids) {
  const auto table = params.at(param_names::kEmbedding).matrix();
  Matrix<T> x(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) x.row(static_cast<Eigen::Index>(t)) = table.row(ids[t]);
  return x;
}

template <class T>
void embed_backward(Gradients<T>& grads, std::span<const TokenId> ids, const Matrix<T>& d_inputs) {
  auto table = grads.at(param_names::kEmbedding).matrix();
  for (std::size_t t = 0; t < ids.size(); ++t) table.row(ids[t]) += d_inputs.row(static_cast<Eigen::Index>(t));
}

template <class T>
void encoder_forward(const ParamStore<T>& params, const EncoderConfig& cfg, std::span<const TokenId> ids,
                     EncoderTrace<T>& trace) {
  check_ids(ids, cfg.vocab_size);
  trace.ids.assign(ids.begin(), ids.end());
  const auto H = static_cast<Eigen::Index>(cfg.hidden_dim);
  Vector<T> zero = Vector<T>::Zero(H);
  nn::lstm_sequence_forward(lstm_weights(params, "enc.lstm"), embed_tokens(params, ids), zero, zero, trace.lstm);
}

template <class T>
void encoder_backward(const ParamStore<T>& params, const EncoderTrace<T>& trace, const Vector<T>& dh_final,
                      const Vector<T>& dc_final, Gradients<T>& grads) {
  const auto steps = static_cast<Eigen::Index>(trace.lstm.steps());
  const auto H = trace.lstm.h.cols();
  Matrix<T> dh_out = Matrix<T>::Zero(steps, H);
  dh_out.row(steps - 1) = dh_final.transpose();
  Matrix<T> dx;
  Vector<T> dh0, dc0;
  nn::lstm_sequence_backward(lstm_weights(params, "enc.lstm"), trace.lstm, dh_out, dc_final,
                             lstm_grads(grads, "enc.lstm"), dx, dh0, dc0);
  embed_backward(grads, trace.ids, dx);
}

template <class T>
std::vector<T> encode(const ParamStore<T>& params, const EncoderConfig& cfg, std::span<const TokenId> ids) {
  const auto w = lstm_weights(params, "enc.lstm");
  if (w.hidden_dim() != cfg.hidden_dim || w.input_dim() != cfg.embed_dim) {
    throw ShapeMismatch("encoder weights do not match the configuration");
  }
  EncoderTrace<T> trace;
  encoder_forward(params, cfg, ids, trace);
  Vector<T> h = trace.final_h();
  return std::vector<T>(h.data(), h.data() + h.size());
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<EmbeddingVector> encode_batch(const ParamStore<float>& params, const EncoderConfig& cfg,
                                          const std::vector<IdSequence>& batch, std::size_t threads) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      check_ids(batch[i], cfg.vocab_size);
    } catch (const Error& e) {
      throw BatchItemError(i, e.what());
    }
  }
  std::vector<EmbeddingVector> out(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) { out[i] = encode(params, cfg, batch[i]); });
  return out;
}

#define CODETWIN_INSTANTIATE(T)                                                                           \
  template Tensor<T> uniform_init(std::vector<std::size_t>, std::size_t, nn::Rng&);                      \
  template void init_encoder(ParamStore<T>&, const EncoderConfig&, nn::Rng&);                            \
  template nn::LstmWeights<T> lstm_weights(const ParamStore<T>&, const std::string&);                    \
  template nn::LstmGrads<T> lstm_grads(Gradients<T>&, const std::string&);                               \
  template Matrix<T> embed_tokens(const ParamStore<T>&, std::span<const TokenId>);                       \
  template void embed_backward(Gradients<T>&, std::span<const TokenId>, const Matrix<T>&);               \
  template void encoder_forward(const ParamStore<T>&, const EncoderConfig&, std::span<const TokenId>,    \
                                EncoderTrace<T>&);                                                       \
  template void encoder_backward(const ParamStore<T>&, const EncoderTrace<T>&, const Vector<T>&,         \
                                 const Vector<T>&, Gradients<T>&);                                       \
  template std::vector<T> encode(const ParamStore<T>&, const EncoderConfig&, std::span<const TokenId>);

CODETWIN_INSTANTIATE(float)
CODETWIN_INSTANTIATE(double)

#undef CODETWIN_INSTANTIATE

}  // namespace codetwin
