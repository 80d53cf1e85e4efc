#pragma once

// Fixed-topology multilayer perceptrons with exact reverse-mode gradients,
// Adam, and soft target updates. Parameters live in one flat array so the
// optimizer and target updates are plain elementwise loops; layers are
// Eigen maps over that array.
//
// Layout per layer: weight matrix (fan_out x fan_in, column-major), then
// bias (fan_out). Inputs are column-per-sample matrices.
//
// Vectorized Eigen kernels pick their summation order from buffer
// alignment. Parameters sit in aligned storage and span inputs are copied
// into aligned temporaries so results never depend on where malloc put
// things (which differs between runs and threads).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcps/rng.hpp"

namespace vcps::nn {

enum class OutputActivation { identity, sigmoid };

inline const char* to_string(OutputActivation a) {
  return a == OutputActivation::sigmoid ? "sigmoid" : "identity";
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::size_t layer)
      : std::runtime_error("non-finite gradient in layer " + std::to_string(layer)),
        layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

template <typename Scalar>
class BasicMlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using WeightMap = Eigen::Map<Matrix>;
  using ConstWeightMap = Eigen::Map<const Matrix>;
  using BiasMap = Eigen::Map<Vector>;
  using ConstBiasMap = Eigen::Map<const Vector>;

  BasicMlp() = default;

  BasicMlp(std::vector<int> sizes, OutputActivation output)
      : sizes_(std::move(sizes)), output_(output) {
    if (sizes_.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
    for (int s : sizes_)
      if (s <= 0) throw ShapeError("layer sizes must be positive");
    offsets_.reserve(sizes_.size());
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(offset);
      offset += static_cast<std::size_t>(sizes_[l] + 1) * static_cast<std::size_t>(sizes_[l + 1]);
    }
    offsets_.push_back(offset);
    params_.assign(offset, Scalar(0));
  }

  static std::size_t parameter_count(const std::vector<int>& sizes) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      n += static_cast<std::size_t>(sizes[l] + 1) * static_cast<std::size_t>(sizes[l + 1]);
    return n;
  }

  /// Uniform in +-1/sqrt(fan_in) for weights and biases.
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(l)));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t i = offsets_[l]; i < offsets_[l + 1]; ++i) params_[i] = static_cast<Scalar>(u(rng));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  OutputActivation output_activation() const { return output_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  int fan_in(std::size_t layer) const { return sizes_[layer]; }
  int fan_out(std::size_t layer) const { return sizes_[layer + 1]; }

  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }
  std::size_t layer_begin(std::size_t layer) const { return offsets_[layer]; }
  std::size_t layer_end(std::size_t layer) const { return offsets_[layer + 1]; }

  std::size_t layer_of(std::size_t param_index) const {
    for (std::size_t l = 0; l < layer_count(); ++l)
      if (param_index < offsets_[l + 1]) return l;
    throw std::out_of_range("parameter index out of range");
  }

  WeightMap weight(std::size_t l) { return WeightMap(params_.data() + offsets_[l], fan_out(l), fan_in(l)); }
  ConstWeightMap weight(std::size_t l) const {
    return ConstWeightMap(params_.data() + offsets_[l], fan_out(l), fan_in(l));
  }
  BiasMap bias(std::size_t l) {
    return BiasMap(params_.data() + offsets_[l] + weight_count(l), fan_out(l));
  }
  ConstBiasMap bias(std::size_t l) const {
    return ConstBiasMap(params_.data() + offsets_[l] + weight_count(l), fan_out(l));
  }

  bool all_finite() const {
    for (Scalar p : params_)
      if (!std::isfinite(p)) return false;
    return true;
  }

  friend bool operator==(const BasicMlp&, const BasicMlp&) = default;

 private:
  std::size_t weight_count(std::size_t l) const {
    return static_cast<std::size_t>(fan_in(l)) * static_cast<std::size_t>(fan_out(l));
  }

  std::vector<int> sizes_;
  OutputActivation output_ = OutputActivation::identity;
  std::vector<std::size_t> offsets_;
  std::vector<Scalar, Eigen::aligned_allocator<Scalar>> params_;
};

using Mlp = BasicMlp<double>;

/// Post-activation values of every layer; activations[0] is the input.
template <typename Scalar>
struct ForwardCache {
  std::vector<typename BasicMlp<Scalar>::Matrix> activations;
};

template <typename Scalar>
typename BasicMlp<Scalar>::Matrix forward(
    const BasicMlp<Scalar>& net,
    const Eigen::Ref<const typename BasicMlp<Scalar>::Matrix>& input,
    ForwardCache<Scalar>* cache = nullptr) {
  using Matrix = typename BasicMlp<Scalar>::Matrix;
  if (input.rows() != net.input_size())
    throw ShapeError("input has " + std::to_string(input.rows()) + " rows, network expects " +
                     std::to_string(net.input_size()));
  const std::size_t layers = net.layer_count();
  if (cache) {
    cache->activations.resize(layers + 1);
    cache->activations[0] = input;
  }
  Matrix current = input;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = net.weight(l) * current;
    z.colwise() += net.bias(l);
    if (l + 1 < layers) {
      z = z.cwiseMax(Scalar(0));
    } else if (net.output_activation() == OutputActivation::sigmoid) {
      z = z.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
    }
    current = std::move(z);
    if (cache) cache->activations[l + 1] = current;
  }
  return current;
}

template <typename Scalar>
typename BasicMlp<Scalar>::Vector forward(const BasicMlp<Scalar>& net,
                                          std::span<const Scalar> input) {
  using Matrix = typename BasicMlp<Scalar>::Matrix;
  const Matrix x = Eigen::Map<const Matrix>(input.data(), static_cast<Eigen::Index>(input.size()), 1);
  return forward<Scalar>(net, x).col(0);
}

/// Reverse-mode pass. `output_grad` is dLoss/dOutput (same shape as the
/// forward output). Parameter gradients are summed over the batch and
/// written (not accumulated) into `param_grad`. When `input_grad` is
/// non-null it receives dLoss/dInput.
template <typename Scalar>
void backward(const BasicMlp<Scalar>& net, const ForwardCache<Scalar>& cache,
              const Eigen::Ref<const typename BasicMlp<Scalar>::Matrix>& output_grad,
              std::span<Scalar> param_grad,
              typename BasicMlp<Scalar>::Matrix* input_grad = nullptr) {
  using Matrix = typename BasicMlp<Scalar>::Matrix;
  using Vector = typename BasicMlp<Scalar>::Vector;
  const std::size_t layers = net.layer_count();
  if (cache.activations.size() != layers + 1) throw ShapeError("forward cache does not match network");
  if (param_grad.size() != net.parameters().size()) throw ShapeError("gradient buffer size mismatch");
  const Matrix& out = cache.activations[layers];
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols())
    throw ShapeError("output gradient shape mismatch");

  Matrix delta = output_grad;
  if (net.output_activation() == OutputActivation::sigmoid)
    delta = delta.cwiseProduct(out.unaryExpr([](Scalar y) { return y * (Scalar(1) - y); }));

  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& prev = cache.activations[l];
    Eigen::Map<Matrix> dW(param_grad.data() + net.layer_begin(l), net.fan_out(l), net.fan_in(l));
    Eigen::Map<Vector> db(param_grad.data() + net.layer_begin(l) + dW.size(), net.fan_out(l));
    const Matrix w_grad = delta * prev.transpose();
    const Vector b_grad = delta.rowwise().sum();
    dW = w_grad;
    db = b_grad;
    if (l > 0) {
      Matrix back = net.weight(l).transpose() * delta;
      delta = back.cwiseProduct(prev.unaryExpr([](Scalar a) { return a > Scalar(0) ? Scalar(1) : Scalar(0); }));
    } else if (input_grad) {
      *input_grad = net.weight(0).transpose() * delta;
    }
  }
}

template <typename Scalar>
struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(n, 0), v(n, 0), lr(learning_rate) {}

  std::vector<Scalar> m;
  std::vector<Scalar> v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Validates the whole gradient before touching the
/// parameters, so a rejected step leaves both state and network intact.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, BasicMlp<Scalar>& net, std::span<const Scalar> grad) {
  auto params = net.parameters();
  if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam: parameter, gradient and moment sizes differ");
  for (std::size_t l = 0; l < net.layer_count(); ++l)
    for (std::size_t i = net.layer_begin(l); i < net.layer_end(l); ++i)
      if (!std::isfinite(grad[i])) throw NonFiniteGradient(l);

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar step_size = static_cast<Scalar>(state.lr / c1);
  const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
  const Scalar eps = static_cast<Scalar>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Scalar g = grad[i];
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g * g;
    params[i] -= step_size * state.m[i] / (std::sqrt(state.v[i] * inv_c2) + eps);
  }
}

/// target <- rate * local + (1 - rate) * target
template <typename Scalar>
void soft_update(BasicMlp<Scalar>& target, const BasicMlp<Scalar>& local, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("soft update rate must lie in (0, 1]");
  if (target.sizes() != local.sizes()) throw ShapeError("soft update between different topologies");
  auto t = target.parameters();
  auto s = local.parameters();
  const Scalar a = static_cast<Scalar>(rate);
  const Scalar b = static_cast<Scalar>(1.0 - rate);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = a * s[i] + b * t[i];
}

// Checkpoint format (text):
//   vcps-mlp 1
//   sizes <n> <s0> ... <s_{n-1}>
//   output <identity|sigmoid>
//   params <count>
//   <one value per line, round-trip precision>
template <typename Scalar>
void save_checkpoint(std::ostream& os, const BasicMlp<Scalar>& net) {
  os << "vcps-mlp 1\nsizes " << net.sizes().size();
  for (int s : net.sizes()) os << ' ' << s;
  os << "\noutput " << to_string(net.output_activation()) << "\nparams " << net.parameters().size() << '\n';
  const auto old = os.precision(std::numeric_limits<Scalar>::max_digits10);
  for (Scalar p : net.parameters()) os << p << '\n';
  os.precision(old);
}

template <typename Scalar>
BasicMlp<Scalar> load_checkpoint(std::istream& is) {
  auto fail = [](const std::string& what) { return std::runtime_error("bad checkpoint: " + what); };
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "vcps-mlp") throw fail("missing header");
  if (version != 1) throw fail("unsupported version " + std::to_string(version));
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "sizes") throw fail("missing sizes");
  std::vector<int> sizes(n);
  for (auto& s : sizes)
    if (!(is >> s)) throw fail("truncated sizes");
  std::string act;
  if (!(is >> tag >> act) || tag != "output") throw fail("missing output activation");
  OutputActivation output;
  if (act == "sigmoid") output = OutputActivation::sigmoid;
  else if (act == "identity") output = OutputActivation::identity;
  else throw fail("unknown activation " + act);
  std::size_t count = 0;
  if (!(is >> tag >> count) || tag != "params") throw fail("missing params");
  BasicMlp<Scalar> net(sizes, output);
  if (count != net.parameters().size()) throw fail("parameter count does not match sizes");
  for (auto& p : net.parameters())
    if (!(is >> p)) throw fail("truncated parameters");
  return net;
}

}  // namespace vcps::nn
