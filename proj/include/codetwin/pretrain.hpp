#pragma once

// Sequence-to-sequence autoencoder used to pre-train the encoder. The decoder
// is an LSTM of the same width started from the encoder's final (h, c); it
// reads the shared token embedding of the previous target token and predicts
// the next one through a linear output layer.

#include <span>
#include <string>
#include <vector>

#include "codetwin/encoder.hpp"

namespace codetwin {

namespace param_names {
inline const std::string kDecoderPrefix = "dec.";
inline const std::string kDecoderW = "dec.lstm.W";
inline const std::string kDecoderU = "dec.lstm.U";
inline const std::string kDecoderB = "dec.lstm.b";
inline const std::string kOutputW = "dec.out.W";
inline const std::string kOutputB = "dec.out.b";
}  // namespace param_names

struct PretrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  bool teacher_forcing = true;  // the only supported mode
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t samples = 0;
};

template <class T>
void init_decoder(nn::ParamStore<T>& params, const EncoderConfig& cfg, nn::Rng& rng);

/// Mean token cross-entropy of reconstructing ids[1..n) with teacher
/// forcing. Adds gradients to `grads` when non-null.
template <class T>
double autoencoder_loss(const nn::ParamStore<T>& params, const EncoderConfig& cfg, std::span<const TokenId> ids,
                        nn::Gradients<T>* grads = nullptr);

/// One pass over a shuffled copy of the corpus, one Adam step per batch.
/// Per-sample gradients are summed in sample order, so the result does not
/// depend on `threads`.
EpochReport pretrain_epoch(nn::ParamStore<float>& params, const EncoderConfig& cfg, const PretrainConfig& pcfg,
                           const std::vector<IdSequence>& corpus, nn::Rng& rng, std::size_t threads = 1);

/// Teacher-forced greedy accuracy over every target position. Argmax ties go
/// to the lowest id.
double reconstruction_accuracy(const nn::ParamStore<float>& params, const EncoderConfig& cfg,
                               const std::vector<IdSequence>& corpus);

/// Copy of `params` without any "dec." tensor. Optimizer moments and the
/// step counter start fresh, as after a checkpoint round trip.
template <class T>
nn::ParamStore<T> strip_decoder(const nn::ParamStore<T>& params);

}  // namespace codetwin
