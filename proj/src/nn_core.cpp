#include "codetwin/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace codetwin::nn {

// ---------------------------------------------------------------------------
// Tensor

template <class T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, T fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (auto d : shape_) {
    if (d == 0) throw ShapeMismatch("tensor dimensions must be positive");
    n *= d;
  }
  data_.assign(shape_.empty() ? 0 : n, fill);
}

template <class T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  std::size_t n = shape_.empty() ? 0 : 1;
  for (auto d : shape_) n *= d;
  if (n != data_.size()) {
    throw ShapeMismatch("tensor of shape " + shape_to_string(shape_) + " given " + std::to_string(data_.size()) + " values");
  }
}

template <class T>
std::size_t Tensor<T>::cols() const {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
  return n;
}

template <class T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <class T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Rng

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = root ^ h;
  return splitmix64(state);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& s : s_) s = splitmix64(state);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int needs n > 0");
  const std::uint64_t threshold = (0 - n) % n;
  while (true) {
    std::uint64_t x = next_u64();
    if (x >= threshold) return x % n;
  }
}

double Rng::gaussian() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// ---------------------------------------------------------------------------
// ParamStore and Adam

template <class T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (slots_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Tensor<T> zeros(value.shape());
  auto& slot = slots_[name];
  slot.m = zeros;
  slot.v = zeros;
  slot.value = std::move(value);
  return slot.value;
}

template <class T>
void ParamStore<T>::restore(const std::string& name, Tensor<T> value, Tensor<T> m, Tensor<T> v) {
  if (!value.same_shape(m) || !value.same_shape(v)) {
    throw ShapeMismatch("Adam state shape differs from parameter '" + name + "'");
  }
  slots_[name] = Slot{std::move(value), std::move(m), std::move(v)};
}

template <class T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second.value;
}

template <class T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  return slot(name).value;
}

template <class T>
const typename ParamStore<T>::Slot& ParamStore<T>::slot(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second;
}

template <class T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  for (const auto& [name, s] : slots_) out.push_back(name);
  return out;
}

template <class T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, s] : slots_) n += s.value.size();
  return n;
}

template <class T>
bool ParamStore<T>::operator==(const ParamStore& other) const {
  if (step_ != other.step_ || slots_.size() != other.slots_.size()) return false;
  for (const auto& [name, s] : slots_) {
    auto it = other.slots_.find(name);
    if (it == other.slots_.end()) return false;
    if (!(s.value == it->second.value && s.m == it->second.m && s.v == it->second.v)) return false;
  }
  return true;
}

template <class T>
void ParamStore<T>::adam_update(const Gradients<T>& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw std::out_of_range("gradient for unknown parameter '" + name + "'");
    if (!it->second.value.same_shape(g)) {
      throw ShapeMismatch("gradient for '" + name + "' has shape " + shape_to_string(g.shape()) + ", parameter is " +
                          shape_to_string(it->second.value.shape()));
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (const auto& [name, g] : grads) {
    Slot& s = slots_.find(name)->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T gi = g[i];
      s.m[i] = b1 * s.m[i] + (T(1) - b1) * gi;
      s.v[i] = b2 * s.v[i] + (T(1) - b2) * gi * gi;
      const double m_hat = static_cast<double>(s.m[i]) / bc1;
      const double v_hat = static_cast<double>(s.v[i]) / bc2;
      s.value[i] -= static_cast<T>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

template <class T>
Gradients<T> zero_gradients(const ParamStore<T>& store) {
  Gradients<T> g;
  for (const auto& [name, s] : store.slots()) g.emplace(name, Tensor<T>(s.value.shape()));
  return g;
}

template <class T>
void accumulate(Gradients<T>& into, const Gradients<T>& from) {
  for (const auto& [name, g] : from) {
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, g);
      continue;
    }
    if (!it->second.same_shape(g)) throw ShapeMismatch("gradient shapes differ for '" + name + "'");
    it->second.vector() += g.vector();
  }
}

template <class T>
void scale(Gradients<T>& grads, T factor) {
  for (auto& [name, g] : grads) g.vector() *= factor;
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

// ---------------------------------------------------------------------------
// LSTM

namespace {

template <class T>
void check_lstm_shapes(const LstmWeights<T>& w) {
  const std::size_t H = w.U.cols();
  if (w.U.rows() != 4 * H || w.W.rows() != 4 * H || w.b.size() != 4 * H) {
    throw ShapeMismatch("inconsistent LSTM weight shapes");
  }
}

// z (pre-activations, 4H) -> activated gates in place, then the new cell state.
template <class T, class Z, class C, class Out>
void lstm_cell(Z& z, const C& c_prev, std::size_t H, Out& c, Out& tanh_c, Out& h) {
  for (std::size_t k = 0; k < 3 * H; ++k) z[k] = sigmoid(z[k]);
  for (std::size_t k = 3 * H; k < 4 * H; ++k) z[k] = std::tanh(z[k]);
  for (std::size_t k = 0; k < H; ++k) {
    const T i = z[k], f = z[H + k], o = z[2 * H + k], g = z[3 * H + k];
    c[k] = f * c_prev[k] + i * g;
    tanh_c[k] = std::tanh(c[k]);
    h[k] = o * tanh_c[k];
  }
}

// Gradient w.r.t. pre-activations of one step; returns dc_prev through `dc_prev`.
template <class T, class G, class C, class D, class DZ, class DC>
void lstm_cell_backward(const G& gates, const C& c_prev, const C& tanh_c, const D& dh, const D& dc, std::size_t H,
                        DZ& dz, DC& dc_prev) {
  for (std::size_t k = 0; k < H; ++k) {
    const T i = gates[k], f = gates[H + k], o = gates[2 * H + k], g = gates[3 * H + k];
    const T tc = tanh_c[k];
    const T dct = dc[k] + dh[k] * o * (T(1) - tc * tc);
    dz[k] = dct * g * i * (T(1) - i);
    dz[H + k] = dct * c_prev[k] * f * (T(1) - f);
    dz[2 * H + k] = dh[k] * tc * o * (T(1) - o);
    dz[3 * H + k] = dct * i * (T(1) - g * g);
    dc_prev[k] = dct * f;
  }
}

}  // namespace

template <class T>
LstmState<T> lstm_step(const LstmWeights<T>& w, std::span<const T> x, std::span<const T> h, std::span<const T> c,
                       LstmStepCache<T>* cache) {
  check_lstm_shapes(w);
  const std::size_t H = w.hidden_dim(), D = w.input_dim();
  if (x.size() != D) throw ShapeMismatch("LSTM input has length " + std::to_string(x.size()) + ", expected " + std::to_string(D));
  if (h.size() != H || c.size() != H) throw ShapeMismatch("LSTM state length differs from hidden size");

  Vector<T> z = w.W.matrix() * ConstVectorMap<T>(x.data(), D) + w.U.matrix() * ConstVectorMap<T>(h.data(), H) +
                w.b.vector();
  LstmState<T> out{std::vector<T>(H), std::vector<T>(H)};
  std::vector<T> tanh_c(H);
  lstm_cell<T>(z, c, H, out.c, tanh_c, out.h);
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h.begin(), h.end());
    cache->c_prev.assign(c.begin(), c.end());
    cache->gates.assign(z.data(), z.data() + z.size());
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

template <class T>
void lstm_step_backward(const LstmWeights<T>& w, const LstmStepCache<T>& cache, std::span<const T> dh,
                        std::span<const T> dc, LstmGrads<T> grads, std::span<T> dx, std::span<T> dh_prev,
                        std::span<T> dc_prev) {
  const std::size_t H = w.hidden_dim(), D = w.input_dim();
  if (dh.size() != H || dc.size() != H || dx.size() != D || dh_prev.size() != H || dc_prev.size() != H) {
    throw ShapeMismatch("LSTM backward buffer sizes");
  }
  Vector<T> dz(4 * H);
  lstm_cell_backward<T>(cache.gates, cache.c_prev, cache.tanh_c, dh, dc, H, dz, dc_prev);
  ConstVectorMap<T> x(cache.x.data(), D), hp(cache.h_prev.data(), H);
  grads.W.matrix().noalias() += dz * x.transpose();
  grads.U.matrix().noalias() += dz * hp.transpose();
  grads.b.vector() += dz;
  VectorMap<T>(dx.data(), D).noalias() = w.W.matrix().transpose() * dz;
  VectorMap<T>(dh_prev.data(), H).noalias() = w.U.matrix().transpose() * dz;
}

template <class T>
void lstm_sequence_forward(const LstmWeights<T>& w, const Matrix<T>& inputs, const Vector<T>& h0, const Vector<T>& c0,
                           LstmTrace<T>& trace) {
  check_lstm_shapes(w);
  const auto H = static_cast<Eigen::Index>(w.hidden_dim());
  const auto steps = inputs.rows();
  if (static_cast<std::size_t>(inputs.cols()) != w.input_dim()) throw ShapeMismatch("LSTM input width");
  if (h0.size() != H || c0.size() != H) throw ShapeMismatch("LSTM initial state size");

  trace.x = inputs;
  trace.gates.resize(steps, 4 * H);
  trace.gates.noalias() = inputs * w.W.matrix().transpose();
  trace.gates.rowwise() += w.b.vector().transpose();
  trace.h_prev.resize(steps, H);
  trace.c_prev.resize(steps, H);
  trace.c.resize(steps, H);
  trace.tanh_c.resize(steps, H);
  trace.h.resize(steps, H);

  const auto U = w.U.matrix();
  Vector<T> h = h0, c = c0, z(4 * H);
  for (Eigen::Index t = 0; t < steps; ++t) {
    trace.h_prev.row(t) = h.transpose();
    trace.c_prev.row(t) = c.transpose();
    z = trace.gates.row(t).transpose();
    z.noalias() += U * h;
    auto c_row = trace.c.row(t);
    auto tc_row = trace.tanh_c.row(t);
    auto h_row = trace.h.row(t);
    lstm_cell<T>(z, c, static_cast<std::size_t>(H), c_row, tc_row, h_row);
    trace.gates.row(t) = z.transpose();
    h = h_row.transpose();
    c = c_row.transpose();
  }
}

template <class T>
void lstm_sequence_backward(const LstmWeights<T>& w, const LstmTrace<T>& trace, const Matrix<T>& dh_out,
                            const Vector<T>& dc_last, LstmGrads<T> grads, Matrix<T>& dx, Vector<T>& dh0,
                            Vector<T>& dc0) {
  const auto H = static_cast<Eigen::Index>(w.hidden_dim());
  const auto steps = static_cast<Eigen::Index>(trace.steps());
  if (dh_out.rows() != steps || dh_out.cols() != H || dc_last.size() != H) {
    throw ShapeMismatch("LSTM sequence gradient shapes");
  }
  Matrix<T> dz_all(steps, 4 * H);
  Vector<T> dh_next = Vector<T>::Zero(H), dc_next = dc_last, dh(H), dc_prev(H), dz(4 * H);
  const auto U = w.U.matrix();
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    dh = dh_out.row(t).transpose() + dh_next;
    lstm_cell_backward<T>(trace.gates.row(t), trace.c_prev.row(t), trace.tanh_c.row(t), dh, dc_next,
                          static_cast<std::size_t>(H), dz, dc_prev);
    dz_all.row(t) = dz.transpose();
    dc_next = dc_prev;
    dh_next.noalias() = U.transpose() * dz;
  }
  grads.W.matrix().noalias() += dz_all.transpose() * trace.x;
  grads.U.matrix().noalias() += dz_all.transpose() * trace.h_prev;
  grads.b.vector() += dz_all.colwise().sum().transpose();
  dx.noalias() = dz_all * w.W.matrix();
  dh0 = dh_next;
  dc0 = dc_next;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy

template <class T>
double softmax_xent(std::span<const T> logits, std::size_t target, std::span<T> dlogits) {
  if (target >= logits.size()) {
    throw IndexError("target " + std::to_string(target) + " out of range for " + std::to_string(logits.size()) + " logits");
  }
  if (!dlogits.empty() && dlogits.size() != logits.size()) throw ShapeMismatch("dlogits size");
  double mx = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  double sum = 0.0;
  for (T v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double log_z = std::log(sum) + mx;
  if (!dlogits.empty()) {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      dlogits[k] = static_cast<T>(std::exp(static_cast<double>(logits[k]) - log_z));
    }
    dlogits[target] -= T(1);
  }
  return log_z - static_cast<double>(logits[target]);
}

// ---------------------------------------------------------------------------
// Gradient check

template <class T>
GradCheckReport gradient_check(const LossFunction<T>& loss_fn, const ParamStore<T>& store, double eps_fd, double tol,
                               std::size_t per_tensor, Rng& rng, double abs_floor) {
  GradCheckReport report;
  report.tolerance = tol;
  Gradients<T> analytic = zero_gradients(store);
  loss_fn(store, &analytic);

  ParamStore<T> work = store;
  for (const auto& name : store.names()) {
    Tensor<T>& param = work.at(name);
    std::vector<std::size_t> coords(param.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > per_tensor) {
      for (std::size_t i = 0; i < per_tensor; ++i) {
        auto j = i + rng.uniform_int(coords.size() - i);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(per_tensor);
    }
    const Tensor<T>& grad = analytic.at(name);
    for (std::size_t idx : coords) {
      const T original = param[idx];
      param[idx] = static_cast<T>(original + eps_fd);
      const double up = loss_fn(work, nullptr);
      param[idx] = static_cast<T>(original - eps_fd);
      const double down = loss_fn(work, nullptr);
      param[idx] = original;
      const double numeric = (up - down) / (2.0 * eps_fd);
      const double a = static_cast<double>(grad[idx]);
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_relative_error || report.worst.empty()) {
        report.max_relative_error = rel;
        report.worst = name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  report.passed = report.max_relative_error <= tol;
  return report;
}

// ---------------------------------------------------------------------------
// Instantiations

#define CODETWIN_INSTANTIATE(T)                                                                                 \
  template class Tensor<T>;                                                                                     \
  template class ParamStore<T>;                                                                                 \
  template Gradients<T> zero_gradients(const ParamStore<T>&);                                                   \
  template void accumulate(Gradients<T>&, const Gradients<T>&);                                                 \
  template void scale(Gradients<T>&, T);                                                                        \
  template T sigmoid(T);                                                                                        \
  template LstmState<T> lstm_step(const LstmWeights<T>&, std::span<const T>, std::span<const T>,                \
                                  std::span<const T>, LstmStepCache<T>*);                                       \
  template void lstm_step_backward(const LstmWeights<T>&, const LstmStepCache<T>&, std::span<const T>,          \
                                   std::span<const T>, LstmGrads<T>, std::span<T>, std::span<T>, std::span<T>); \
  template void lstm_sequence_forward(const LstmWeights<T>&, const Matrix<T>&, const Vector<T>&,                \
                                      const Vector<T>&, LstmTrace<T>&);                                         \
  template void lstm_sequence_backward(const LstmWeights<T>&, const LstmTrace<T>&, const Matrix<T>&,            \
                                       const Vector<T>&, LstmGrads<T>, Matrix<T>&, Vector<T>&, Vector<T>&);     \
  template double softmax_xent(std::span<const T>, std::size_t, std::span<T>);                                  \
  template GradCheckReport gradient_check(const LossFunction<T>&, const ParamStore<T>&, double, double,         \
                                          std::size_t, Rng&, double);

CODETWIN_INSTANTIATE(float)
CODETWIN_INSTANTIATE(double)

#undef CODETWIN_INSTANTIATE

}  // namespace codetwin::nn
