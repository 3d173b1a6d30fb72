#pragma once

// Small dense feedforward engine: affine + relu/identity layers with a
// hand-written backward pass, an Adam optimizer and a central-difference
// gradient checker. Everything runs in double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scaleface/error.hpp"
#include "scaleface/matrix.hpp"
#include "scaleface/random.hpp"

namespace scaleface {

enum class Activation : std::uint32_t { relu = 0, identity = 1 };

struct DenseLayer {
  Matrix weight;  // [out x in]
  std::vector<double> bias;
  Activation activation = Activation::relu;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    validate();
  }

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  /// `dims` lists input width followed by every layer's output width.
  static DenseNet random(std::span<const std::size_t> dims, Activation hidden,
                         Activation output, std::uint64_t seed) {
    require(dims.size() >= 2, "a network needs at least one layer");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      DenseLayer layer;
      layer.weight = Matrix(dims[k + 1], dims[k]);
      layer.bias.assign(dims[k + 1], 0.0);
      layer.activation = (k + 2 == dims.size()) ? output : hidden;
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[k]));
      for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
      layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers));
  }

  void validate() const {
    require(!layers_.empty(), "a network needs at least one layer");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const DenseLayer& layer = layers_[k];
      require(layer.in_dim() > 0 && layer.out_dim() > 0,
              "layer " + std::to_string(k) + " has an empty dimension");
      require(layer.bias.size() == layer.out_dim(),
              "layer " + std::to_string(k) + " bias length does not match its output width");
      if (k > 0)
        require(layers_[k - 1].out_dim() == layer.in_dim(),
                "layer " + std::to_string(k) + " input width does not chain");
      require(layer.weight.all_finite(), "layer " + std::to_string(k) + " has non-finite weights",
              ErrorKind::numeric);
      for (double b : layer.bias)
        require(std::isfinite(b), "layer " + std::to_string(k) + " has non-finite bias",
                ErrorKind::numeric);
    }
  }

  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.back().out_dim(); }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  /// Weight then bias of each layer, in layer order.
  std::vector<std::span<double>> parameter_blocks() {
    std::vector<std::span<double>> blocks;
    for (DenseLayer& layer : layers_) {
      blocks.emplace_back(layer.weight.values());
      blocks.emplace_back(layer.bias);
    }
    return blocks;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
  }

  std::vector<double> flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const DenseLayer& layer : layers_) {
      flat.insert(flat.end(), layer.weight.values().begin(), layer.weight.values().end());
      flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
  }

  void set_flat_parameters(std::span<const double> flat) {
    require(flat.size() == parameter_count(), "flat parameter vector has the wrong length");
    std::size_t offset = 0;
    for (std::span<double> block : parameter_blocks()) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
      offset += block.size();
    }
  }

  /// FNV-1a over shapes and parameter bytes; identifies the exact parameter
  /// state a forward cache was produced with.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, std::size_t bytes) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
      }
    };
    for (const DenseLayer& layer : layers_) {
      const std::uint64_t shape[3] = {layer.out_dim(), layer.in_dim(),
                                      static_cast<std::uint64_t>(layer.activation)};
      feed(shape, sizeof shape);
      feed(layer.weight.values().data(), layer.weight.size() * sizeof(double));
      feed(layer.bias.data(), layer.bias.size() * sizeof(double));
    }
    return h;
  }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t k = 0; k < a.layers_.size(); ++k) {
      const DenseLayer& x = a.layers_[k];
      const DenseLayer& y = b.layers_[k];
      if (x.activation != y.activation || x.bias != y.bias || !(x.weight == y.weight))
        return false;
    }
    return true;
  }

 private:
  std::vector<DenseLayer> layers_;
};

struct ForwardCache {
  std::vector<Matrix> inputs;          // input fed to each layer
  std::vector<Matrix> preactivations;  // affine output of each layer
  std::uint64_t fingerprint = 0;
};

struct ForwardResult {
  Matrix outputs;
  ForwardCache cache;
};

struct NetGradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  std::vector<std::span<const double>> blocks() const {
    std::vector<std::span<const double>> out;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      out.emplace_back(weight[k].values());
      out.emplace_back(bias[k]);
    }
    return out;
  }

  std::vector<double> flat() const {
    std::vector<double> out;
    for (std::span<const double> b : blocks()) out.insert(out.end(), b.begin(), b.end());
    return out;
  }
};

struct BackwardResult {
  NetGradients params;
  Matrix input_grad;
};

inline ForwardResult net_forward(const DenseNet& net, const Matrix& batch) {
  require(batch.cols() == net.input_dim(),
          "batch width " + std::to_string(batch.cols()) + " does not match network input " +
              std::to_string(net.input_dim()));
  require(batch.all_finite(), "batch contains non-finite values", ErrorKind::numeric);

  ForwardResult result;
  result.cache.fingerprint = net.fingerprint();
  Matrix x = batch;
  for (const DenseLayer& layer : net.layers()) {
    const std::size_t n = x.rows();
    Matrix z(n, layer.out_dim());
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.row(i);
      for (std::size_t o = 0; o < layer.out_dim(); ++o)
        z(i, o) = layer.bias[o] + dot(xi, layer.weight.row(o));
    }
    Matrix a = z;
    if (layer.activation == Activation::relu)
      for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
    result.cache.inputs.push_back(std::move(x));
    result.cache.preactivations.push_back(std::move(z));
    x = std::move(a);
  }
  result.outputs = std::move(x);
  return result;
}

inline BackwardResult net_backward(const DenseNet& net, const ForwardCache& cache,
                                   const Matrix& output_grad) {
  const std::size_t depth = net.layers().size();
  require(cache.inputs.size() == depth && cache.preactivations.size() == depth,
          "forward cache does not match the network depth");
  require(cache.fingerprint == net.fingerprint(),
          "forward cache is stale: network parameters changed since net_forward");
  const std::size_t n = cache.inputs.front().rows();
  require(output_grad.rows() == n && output_grad.cols() == net.output_dim(),
          "output gradient shape does not match the cached forward pass");

  BackwardResult result;
  result.params.weight.resize(depth);
  result.params.bias.resize(depth);

  Matrix upstream = output_grad;
  for (std::size_t k = depth; k-- > 0;) {
    const DenseLayer& layer = net.layers()[k];
    const Matrix& x = cache.inputs[k];
    const Matrix& z = cache.preactivations[k];

    Matrix dz = upstream;
    if (layer.activation == Activation::relu)
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (!(z.values()[i] > 0.0)) dz.values()[i] = 0.0;

    Matrix dw(layer.out_dim(), layer.in_dim());
    std::vector<double> db(layer.out_dim(), 0.0);
    Matrix dx(n, layer.in_dim());
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.row(i);
      auto dxi = dx.row(i);
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const double g = dz(i, o);
        if (g == 0.0) continue;
        db[o] += g;
        auto dwo = dw.row(o);
        const auto wo = layer.weight.row(o);
        for (std::size_t c = 0; c < layer.in_dim(); ++c) {
          dwo[c] += g * xi[c];
          dxi[c] += g * wo[c];
        }
      }
    }
    result.params.weight[k] = std::move(dw);
    result.params.bias[k] = std::move(db);
    upstream = std::move(dx);
  }
  result.input_grad = std::move(upstream);
  return result;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState;
inline void adam_step(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads, AdamState& state);

class AdamState {
 public:
  AdamState() = default;

  template <typename Blocks>
  AdamState(const Blocks& shapes, AdamConfig config) : config_(config) {
    require(config.learning_rate > 0.0 && config.beta1 >= 0.0 && config.beta1 < 1.0 &&
                config.beta2 >= 0.0 && config.beta2 < 1.0 && config.epsilon > 0.0,
            "invalid Adam hyperparameters");
    for (const auto& block : shapes) {
      first_.emplace_back(block.size(), 0.0);
      second_.emplace_back(block.size(), 0.0);
    }
  }

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step() const noexcept { return step_; }
  const std::vector<std::vector<double>>& first_moment() const noexcept { return first_; }
  const std::vector<std::vector<double>>& second_moment() const noexcept { return second_; }

 private:
  friend void adam_step(std::span<const std::span<double>>,
                        std::span<const std::span<const double>>, AdamState&);

  AdamConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t step_ = 0;
};

/// One bias-corrected Adam update. An all-zero gradient advances the step
/// counter and decays the moments but leaves parameters untouched.
inline void adam_step(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_.size(),
          "Adam: parameter/gradient/state block counts differ");
  bool all_zero = true;
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(params[b].size() == grads[b].size() && params[b].size() == state.first_[b].size(),
            "Adam: block " + std::to_string(b) + " shape mismatch");
    for (double g : grads[b]) {
      require(std::isfinite(g), "Adam: non-finite gradient", ErrorKind::numeric);
      all_zero = all_zero && g == 0.0;
    }
  }

  const AdamConfig& cfg = state.config_;
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_[b];
    auto& v = state.second_[b];
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      if (all_zero) continue;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[b][i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

struct GradCheckReport {
  std::vector<double> relative_errors;  // one per parameter entry
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double step = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Evaluates the loss at `params`; fills `grad` with the analytic gradient
/// when it is non-empty.
using LossEvaluator = std::function<double(std::span<const double> params, std::span<double> grad)>;

/// Compares the analytic gradient against central differences. The error for
/// each entry is |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheckReport finite_diff_check(const LossEvaluator& loss, std::span<const double> params,
                                         double tolerance, double step = 1e-4,
                                         double floor = 1e-6) {
  require(step > 0.0, "finite difference step must be positive");
  require(tolerance >= 0.0, "tolerance must be non-negative");

  std::vector<double> point(params.begin(), params.end());
  std::vector<double> analytic(point.size(), 0.0);
  const double base = loss(point, analytic);
  require(std::isfinite(base), "loss is not finite at the check point", ErrorKind::numeric);

  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  report.relative_errors.resize(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double plus = loss(point, {});
    point[i] = saved - step;
    const double minus = loss(point, {});
    point[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus))
      fail(ErrorKind::numeric, "loss is not finite at perturbed entry " + std::to_string(i));
    const double numeric = (plus - minus) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double err = std::abs(analytic[i] - numeric) / denom;
    report.relative_errors[i] = err;
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace scaleface
