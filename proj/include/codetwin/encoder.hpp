#pragma once

#include <span>
#include <string>
#include <vector>

#include "codetwin/nn_core.hpp"
#include "codetwin/vocab.hpp"

namespace codetwin {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t max_len = kDefaultMaxLen;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

namespace param_names {
inline const std::string kEmbedding = "enc.embed";
inline const std::string kEncoderW = "enc.lstm.W";
inline const std::string kEncoderU = "enc.lstm.U";
inline const std::string kEncoderB = "enc.lstm.b";
}  // namespace param_names

using EmbeddingVector = std::vector<float>;
using IdSequence = std::vector<TokenId>;

/// Adds the encoder parameters. Matrices draw from uniform(-r, r) with
/// r = 1/sqrt(fan_in) (fan_in 1 for the embedding lookup); biases are zero
/// except the forget gate, which starts at 1.
template <class T>
void init_encoder(nn::ParamStore<T>& params, const EncoderConfig& cfg, nn::Rng& rng);

/// Uniform(-r, r) matrix of the given shape with r = 1/sqrt(fan_in).
template <class T>
nn::Tensor<T> uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, nn::Rng& rng);

template <class T>
nn::LstmWeights<T> lstm_weights(const nn::ParamStore<T>& params, const std::string& prefix);
template <class T>
nn::LstmGrads<T> lstm_grads(nn::Gradients<T>& grads, const std::string& prefix);

/// Checks that the sequence is nonempty and every id is below vocab_size.
void check_ids(std::span<const TokenId> ids, std::size_t vocab_size);

/// Rows of the embedding table for each id.
template <class T>
nn::Matrix<T> embed_tokens(const nn::ParamStore<T>& params, std::span<const TokenId> ids);
/// Scatter-adds row t of `d_inputs` into the embedding gradient row ids[t].
template <class T>
void embed_backward(nn::Gradients<T>& grads, std::span<const TokenId> ids, const nn::Matrix<T>& d_inputs);

/// Forward activations of one encoded sequence.
template <class T>
struct EncoderTrace {
  IdSequence ids;
  nn::LstmTrace<T> lstm;

  nn::Vector<T> final_h() const { return lstm.h.row(lstm.h.rows() - 1).transpose(); }
  nn::Vector<T> final_c() const { return lstm.c.row(lstm.c.rows() - 1).transpose(); }
};

template <class T>
void encoder_forward(const nn::ParamStore<T>& params, const EncoderConfig& cfg, std::span<const TokenId> ids,
                     EncoderTrace<T>& trace);

/// Accumulates parameter gradients given d loss / d (final h, final c).
template <class T>
void encoder_backward(const nn::ParamStore<T>& params, const EncoderTrace<T>& trace, const nn::Vector<T>& dh_final,
                      const nn::Vector<T>& dc_final, nn::Gradients<T>& grads);

/// Final hidden state after running the LSTM from a zero state over the
/// embedded tokens. Throws EmptySequence or IdOutOfRange.
template <class T>
std::vector<T> encode(const nn::ParamStore<T>& params, const EncoderConfig& cfg, std::span<const TokenId> ids);

/// encode() over every sequence; results are bitwise identical to the serial
/// map whatever `threads` is. Errors name the offending item.
std::vector<EmbeddingVector> encode_batch(const nn::ParamStore<float>& params, const EncoderConfig& cfg,
                                          const std::vector<IdSequence>& batch, std::size_t threads = 1);

/// Runs fn(i) for i in [0, n) on up to `threads` workers in contiguous chunks.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace codetwin
