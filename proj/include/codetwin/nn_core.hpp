#pragma once

// Small deterministic numeric engine: tensors, parameter storage with Adam
// state, a portable RNG, the LSTM cell, softmax cross-entropy and a
// finite-difference gradient checker. Everything is templated on the scalar
// type; float is used for training, double for gradient verification.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "codetwin/errors.hpp"

namespace codetwin::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using MatrixMap = Eigen::Map<Matrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const Matrix<T>>;
template <class T>
using VectorMap = Eigen::Map<Vector<T>>;
template <class T>
using ConstVectorMap = Eigen::Map<const Vector<T>>;

/// Row-major dense tensor.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0));
  Tensor(std::vector<std::size_t> shape, std::vector<T> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Product of all dimensions after the first (1 for vectors).
  std::size_t cols() const;

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  MatrixMap<T> matrix() { return MatrixMap<T>(data_.data(), rows(), cols()); }
  ConstMatrixMap<T> matrix() const { return ConstMatrixMap<T>(data_.data(), rows(), cols()); }
  VectorMap<T> vector() { return VectorMap<T>(data_.data(), data_.size()); }
  ConstVectorMap<T> vector() const { return ConstVectorMap<T>(data_.data(), data_.size()); }

  void fill(T v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

/// splitmix64-seeded xoshiro256**. Uniform draws use the top 53 bits;
/// Gaussian draws use the Box-Muller cosine branch.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), n > 0, by rejection.
  std::uint64_t uniform_int(std::uint64_t n);
  double gaussian();

  template <class It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      auto j = uniform_int(i);
      std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);
/// Per-purpose seed: the root seed mixed with a hash of the tag.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);

template <class T>
using Gradients = std::map<std::string, Tensor<T>>;

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Named parameters plus Adam moments. Iteration order is by name.
template <class T>
class ParamStore {
 public:
  struct Slot {
    Tensor<T> value;
    Tensor<T> m;
    Tensor<T> v;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return slots_.count(name) != 0; }
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  const Slot& slot(const std::string& name) const;
  void erase(const std::string& name) { slots_.erase(name); }
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  std::uint64_t step() const { return step_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

  /// Same parameters converted to U; Adam state is carried over.
  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, s] : slots_) out.restore(name, s.value.template cast<U>(), s.m.template cast<U>(), s.v.template cast<U>());
    out.set_step(step_);
    return out;
  }

  void restore(const std::string& name, Tensor<T> value, Tensor<T> m, Tensor<T> v);
  void set_step(std::uint64_t t) { step_ = t; }
  void adam_update(const Gradients<T>& grads, const AdamConfig& cfg);

  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Slot> slots_;
  std::uint64_t step_ = 0;
};

/// One Adam step with bias correction. The step counter advances once per
/// call, even for parameters absent from `grads`.
template <class T>
void adam_update(ParamStore<T>& store, const Gradients<T>& grads, const AdamConfig& cfg) {
  store.adam_update(grads, cfg);
}

template <class T>
Gradients<T> zero_gradients(const ParamStore<T>& store);
template <class T>
void accumulate(Gradients<T>& into, const Gradients<T>& from);
template <class T>
void scale(Gradients<T>& grads, T factor);

template <class T>
T sigmoid(T x);

/// Views of one LSTM layer's weights. Gate blocks are stacked i, f, o, g:
/// W is [4H x D], U is [4H x H], b is [4H].
template <class T>
struct LstmWeights {
  const Tensor<T>& W;
  const Tensor<T>& U;
  const Tensor<T>& b;
  std::size_t input_dim() const { return W.cols(); }
  std::size_t hidden_dim() const { return U.cols(); }
};

template <class T>
struct LstmGrads {
  Tensor<T>& W;
  Tensor<T>& U;
  Tensor<T>& b;
};

template <class T>
struct LstmState {
  std::vector<T> h;
  std::vector<T> c;
};

/// Everything a single step needs to run backwards.
template <class T>
struct LstmStepCache {
  std::vector<T> x;
  std::vector<T> h_prev;
  std::vector<T> c_prev;
  std::vector<T> gates;  // activated i, f, o, g
  std::vector<T> c;
  std::vector<T> tanh_c;
};

/// i=σ(W_i x+U_i h+b_i), f, o likewise, g=tanh(...), c'=f⊙c+i⊙g, h'=o⊙tanh(c').
template <class T>
LstmState<T> lstm_step(const LstmWeights<T>& w, std::span<const T> x, std::span<const T> h,
                       std::span<const T> c, LstmStepCache<T>* cache = nullptr);

/// Adds this step's weight gradients into `grads` and writes input/state
/// gradients to dx, dh_prev, dc_prev.
template <class T>
void lstm_step_backward(const LstmWeights<T>& w, const LstmStepCache<T>& cache, std::span<const T> dh,
                        std::span<const T> dc, LstmGrads<T> grads, std::span<T> dx, std::span<T> dh_prev,
                        std::span<T> dc_prev);

/// Activations of a whole sequence; row t holds step t.
template <class T>
struct LstmTrace {
  Matrix<T> x;       // [T x D]
  Matrix<T> h_prev;  // [T x H]
  Matrix<T> c_prev;  // [T x H]
  Matrix<T> gates;   // [T x 4H]
  Matrix<T> c;       // [T x H]
  Matrix<T> tanh_c;  // [T x H]
  Matrix<T> h;       // [T x H]
  std::size_t steps() const { return static_cast<std::size_t>(x.rows()); }
};

/// Runs the cell over every row of `inputs` starting from (h0, c0).
template <class T>
void lstm_sequence_forward(const LstmWeights<T>& w, const Matrix<T>& inputs, const Vector<T>& h0,
                           const Vector<T>& c0, LstmTrace<T>& trace);

/// Backpropagation through time. `dh_out` row t is the loss gradient with
/// respect to h_t from outside the recurrence (may be all zero but the last);
/// `dc_last` is the gradient with respect to the final cell state.
template <class T>
void lstm_sequence_backward(const LstmWeights<T>& w, const LstmTrace<T>& trace, const Matrix<T>& dh_out,
                            const Vector<T>& dc_last, LstmGrads<T> grads, Matrix<T>& dx, Vector<T>& dh0,
                            Vector<T>& dc0);

/// -log softmax(logits)[target], max-subtracted. Optionally writes
/// d loss / d logits = softmax - onehot.
template <class T>
double softmax_xent(std::span<const T> logits, std::size_t target, std::span<T> dlogits = {});

/// Returns the loss; fills `grads` (keyed like the store) when non-null.
template <class T>
using LossFunction = std::function<double(const ParamStore<T>&, Gradients<T>*)>;

struct GradCheckReport {
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  std::string worst;  // "name[index]"
  double tolerance = 0.0;
  bool passed = true;
};

/// Compares analytic gradients with central differences
/// (f(θ+ε)-f(θ-ε))/2ε at up to `per_tensor` sampled coordinates of each
/// parameter (all coordinates when the tensor is smaller). Relative error is
/// |a-n| / max(|a|, |n|, abs_floor).
template <class T>
GradCheckReport gradient_check(const LossFunction<T>& loss_fn, const ParamStore<T>& store, double eps_fd,
                               double tol, std::size_t per_tensor, Rng& rng, double abs_floor = 1e-6);

}  // namespace codetwin::nn
