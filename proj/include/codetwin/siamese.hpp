#pragma once

// Siamese training of the shared encoder. Two sequences go through the same
// encoder; their cosine similarity s enters l = ½(y − σ(w·s + b))², where w
// and b are trainable calibration scalars.

#include <span>
#include <string>
#include <vector>

#include "codetwin/pretrain.hpp"

namespace codetwin {

namespace param_names {
inline const std::string kCalibrationW = "cal.w";
inline const std::string kCalibrationB = "cal.b";
}  // namespace param_names

struct Calibration {
  double w = 1.0;
  double b = 0.0;
  bool operator==(const Calibration&) const = default;
};

struct PairSample {
  IdSequence ids_a;
  IdSequence ids_b;
  int y = 0;  // 1 = same class
};

/// Positions of a pair inside a class-grouped collection.
struct PairIndex {
  std::size_t class_a = 0, item_a = 0;
  std::size_t class_b = 0, item_b = 0;
  int y = 0;
  bool operator==(const PairIndex&) const = default;
};

struct SiameseConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t pairs_per_epoch = 4000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// v1·v2 / (‖v1‖‖v2‖) in double precision, clamped to [-1, 1]. Throws
/// ZeroVector when either norm is below 1e-12.
template <class T>
double cosine_similarity(std::span<const T> v1, std::span<const T> v2);

double siamese_loss(double s, int y, const Calibration& cal);

struct SiameseLossGrad {
  double loss = 0.0;
  double d_s = 0.0;
  double d_w = 0.0;
  double d_b = 0.0;
};
SiameseLossGrad siamese_loss_grad(double s, int y, const Calibration& cal);

/// ⌈n/2⌉ positive then ⌊n/2⌋ negative pairs, interleaved (even index =
/// positive). Positives pick a uniform class and two distinct items;
/// negatives pick two distinct uniform classes and one item from each.
std::vector<PairIndex> sample_pair_indices(const std::vector<std::size_t>& class_sizes, std::size_t n_pairs,
                                           nn::Rng& rng);

/// Builds PairSamples from class-grouped id sequences.
std::vector<PairSample> sample_pairs(const std::vector<std::vector<IdSequence>>& classes, std::size_t n_pairs,
                                     nn::Rng& rng);

template <class T>
Calibration get_calibration(const nn::ParamStore<T>& params);
template <class T>
void set_calibration(nn::ParamStore<T>& params, const Calibration& cal);
/// Adds cal.w / cal.b (1-element tensors) to the store.
template <class T>
void init_calibration(nn::ParamStore<T>& params, const Calibration& cal = {});

struct PairForward {
  double similarity = 0.0;
  double loss = 0.0;
};

/// Loss of one pair. When `grads` is given the gradients of both branches
/// are summed into it. `branch_a` / `branch_b`, when given, receive the
/// encoder gradient flowing through that branch alone.
template <class T>
PairForward pair_loss(const nn::ParamStore<T>& params, const EncoderConfig& cfg, const PairSample& pair,
                      nn::Gradients<T>* grads = nullptr, nn::Gradients<T>* branch_a = nullptr,
                      nn::Gradients<T>* branch_b = nullptr);

/// Shuffles the pairs, then one Adam step (encoder + calibration) per batch
/// on the batch-mean loss. Returns the mean pair loss before each update.
EpochReport train_epoch(nn::ParamStore<float>& params, const EncoderConfig& cfg, const SiameseConfig& scfg,
                        const std::vector<PairSample>& pairs, nn::Rng& rng, std::size_t threads = 1);

struct ModelCheckpoint {
  EncoderConfig config;
  Calibration calibration;
  std::string vocab_fingerprint;
  nn::ParamStore<float> params;  // encoder (+ optional decoder); calibration lives in the header
};

std::string checkpoint_to_text(const ModelCheckpoint& ckpt);
/// Parses and validates a checkpoint. When `expected_fingerprint` is nonempty
/// it must match the stored one (VocabMismatch otherwise).
ModelCheckpoint checkpoint_from_text(std::string_view text, const std::string& expected_fingerprint = "");
void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path, const std::string& expected_fingerprint = "");

/// Store of a checkpoint with calibration tensors added, ready for training.
nn::ParamStore<float> trainable_params(const ModelCheckpoint& ckpt);
/// Inverse of trainable_params: moves calibration back into the header.
ModelCheckpoint make_checkpoint(const nn::ParamStore<float>& params, const EncoderConfig& cfg,
                                const std::string& vocab_fingerprint);

}  // namespace codetwin
