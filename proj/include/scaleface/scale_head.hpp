#pragma once

// Per-sample scale predictor s(x) = act(a(x)), where a is a relu MLP over the
// frozen unit embedding, and its training loop under the ScaleFace loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "scaleface/embeddings.hpp"
#include "scaleface/error.hpp"
#include "scaleface/gradnet.hpp"
#include "scaleface/losses.hpp"

namespace scaleface {

enum class ScaleFamily : std::uint32_t { exp = 0, sigm = 1, shifted_sigm = 2, relu = 3 };

/// Positivity map a -> s. Families: exp(a), c*sigm(a), lo + (hi-lo)*sigm(a),
/// c*relu(a).
struct ScaleActivation {
  ScaleFamily family = ScaleFamily::sigm;
  double c = 64.0;
  double lo = 0.0;
  double hi = 0.0;

  static ScaleActivation exponential() { return {ScaleFamily::exp, 1.0, 0.0, 0.0}; }
  static ScaleActivation sigm(double c) { return {ScaleFamily::sigm, c, 0.0, 0.0}; }
  static ScaleActivation shifted_sigm(double lo, double hi) {
    return {ScaleFamily::shifted_sigm, 1.0, lo, hi};
  }
  static ScaleActivation relu(double c) { return {ScaleFamily::relu, c, 0.0, 0.0}; }

  void validate() const {
    switch (family) {
      case ScaleFamily::exp: break;
      case ScaleFamily::sigm:
      case ScaleFamily::relu: require(c > 0.0, "activation constant must be positive"); break;
      case ScaleFamily::shifted_sigm:
        require(hi > lo && lo >= 0.0, "shifted sigmoid needs hi > lo >= 0");
        break;
      default: fail(ErrorKind::invalid_argument, "unknown activation family");
    }
  }

  static double sigmoid(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
  }

  double operator()(double a) const {
    switch (family) {
      case ScaleFamily::exp: return std::exp(a);
      case ScaleFamily::sigm: return c * sigmoid(a);
      case ScaleFamily::shifted_sigm: return lo + (hi - lo) * sigmoid(a);
      case ScaleFamily::relu: return a > 0.0 ? c * a : 0.0;
    }
    return 0.0;
  }

  double derivative(double a) const {
    switch (family) {
      case ScaleFamily::exp: return std::exp(a);
      case ScaleFamily::sigm: {
        const double p = sigmoid(a);
        return c * p * (1.0 - p);
      }
      case ScaleFamily::shifted_sigm: {
        const double p = sigmoid(a);
        return (hi - lo) * p * (1.0 - p);
      }
      case ScaleFamily::relu: return a > 0.0 ? c : 0.0;
    }
    return 0.0;
  }

  /// "exp", "sigm:64", "shifted_sigm:32:64", "relu:8".
  std::string name() const {
    std::ostringstream os;
    os.precision(17);
    switch (family) {
      case ScaleFamily::exp: os << "exp"; break;
      case ScaleFamily::sigm: os << "sigm:" << c; break;
      case ScaleFamily::shifted_sigm: os << "shifted_sigm:" << lo << ':' << hi; break;
      case ScaleFamily::relu: os << "relu:" << c; break;
    }
    return os.str();
  }

  static ScaleActivation parse(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    auto number = [&](std::size_t k) {
      try {
        std::size_t used = 0;
        const double v = std::stod(parts.at(k), &used);
        if (used != parts[k].size()) throw std::invalid_argument(parts[k]);
        return v;
      } catch (const std::exception&) {
        fail(ErrorKind::invalid_argument, "bad activation spec '" + text + "'");
      }
    };
    ScaleActivation act;
    if (parts.size() == 1 && parts[0] == "exp") act = exponential();
    else if (parts.size() == 2 && parts[0] == "sigm") act = sigm(number(1));
    else if (parts.size() == 3 && parts[0] == "shifted_sigm") act = shifted_sigm(number(1), number(2));
    else if (parts.size() == 2 && parts[0] == "relu") act = relu(number(1));
    else fail(ErrorKind::invalid_argument, "bad activation spec '" + text + "'");
    act.validate();
    return act;
  }

  friend bool operator==(const ScaleActivation&, const ScaleActivation&) = default;
};

struct ScaleHeadConfig {
  std::size_t hidden_layers = 2;  // 1..4
  std::size_t hidden_width = 128;
  ScaleActivation activation = ScaleActivation::sigm(64.0);

  void validate() const {
    require(hidden_layers >= 1 && hidden_layers <= 4, "hidden layer count must be in 1..4");
    require(hidden_width >= 1, "hidden width must be positive");
    activation.validate();
  }

  friend bool operator==(const ScaleHeadConfig&, const ScaleHeadConfig&) = default;
};

struct ScaleHead {
  DenseNet net;  // scalar output a(x)
  ScaleActivation activation;
  ScaleHeadConfig config;

  friend bool operator==(const ScaleHead&, const ScaleHead&) = default;
};

inline ScaleHead make_scale_head(const ScaleHeadConfig& config, std::size_t input_dim,
                                 std::uint64_t seed) {
  config.validate();
  require(input_dim >= 1, "head input width must be positive");
  std::vector<std::size_t> dims{input_dim};
  for (std::size_t k = 0; k < config.hidden_layers; ++k) dims.push_back(config.hidden_width);
  dims.push_back(1);
  return {DenseNet::random(dims, Activation::relu, Activation::identity, seed), config.activation,
          config};
}

inline std::vector<double> head_preactivations(const ScaleHead& head, const Matrix& unit) {
  const ForwardResult fwd = net_forward(head.net, unit);
  return {fwd.outputs.values().begin(), fwd.outputs.values().end()};
}

inline std::vector<double> head_forward(const ScaleHead& head, const Matrix& unit) {
  std::vector<double> s = head_preactivations(head, unit);
  for (double& v : s) v = head.activation(v);
  return s;
}

/// Indices ordered by descending scale (ascending uncertainty); ties keep
/// index order.
inline std::vector<std::size_t> confidence_ranking(std::span<const double> scales) {
  std::vector<std::size_t> order(scales.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scales[a] > scales[b]; });
  return order;
}

struct ScalePrediction {
  std::vector<double> scales;
  std::vector<std::size_t> ranking;
};

inline ScalePrediction predict_scales(const ScaleHead& head, const Matrix& unit) {
  ScalePrediction p;
  p.scales = head_forward(head, unit);
  p.ranking = confidence_ranking(p.scales);
  return p;
}

struct HeadLoss {
  double loss = 0.0;
  NetGradients head_grads;
  Matrix centroid_grads;
  std::vector<double> scales;
};

/// ScaleFace loss for a batch with dL/ds chained into the head parameters.
inline HeadLoss head_loss(const ScaleHead& head, const Matrix& batch, std::span<const Label> labels,
                          const Matrix& centroids, double margin, double cos_clamp = 1e-7) {
  const ForwardResult fwd = net_forward(head.net, batch);
  const std::size_t n = batch.rows();
  HeadLoss out;
  out.scales.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.scales[i] = head.activation(fwd.outputs(i, 0));
  LossResult lr = detail::margin_softmax(batch, centroids, labels, out.scales, margin, cos_clamp, true);
  Matrix grad_a(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    grad_a(i, 0) = lr.grad_scales[i] * head.activation.derivative(fwd.outputs(i, 0));
  out.head_grads = net_backward(head.net, fwd.cache, grad_a).params;
  out.loss = lr.loss;
  out.centroid_grads = std::move(lr.grad_centroids);
  return out;
}

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool freeze_centroids = false;
  bool shuffle = true;

  void validate() const {
    require(batch_size >= 1, "batch size must be positive");
    require(learning_rate > 0.0, "learning rate must be positive");
  }
};

struct TrainReport {
  std::vector<double> epoch_losses;
  ScaleHead head;
  CentroidMatrix centroids;

  friend bool operator==(const TrainReport& a, const TrainReport& b) {
    return a.epoch_losses == b.epoch_losses && a.head == b.head &&
           a.centroids.centroids == b.centroids.centroids && a.centroids.frozen == b.centroids.frozen;
  }
};

/// Trains a fresh head (and, unless frozen, the class centroids) with Adam on
/// the ScaleFace loss. Centroid rows are renormalised after every step.
inline TrainReport train_head(const UnitEmbeddings& unit, const ScaleHeadConfig& head_config,
                              double margin, const TrainConfig& config) {
  head_config.validate();
  config.validate();
  require_unit_rows(unit.unit, 1e-6, "training embeddings");

  TrainReport report;
  report.head = make_scale_head(head_config, unit.dim(), mix_seed(config.seed, 4));
  report.centroids = init_centroids(unit);
  report.centroids.frozen = config.freeze_centroids;

  const AdamConfig adam{config.learning_rate};
  AdamState head_state(report.head.net.parameter_blocks(), adam);
  std::vector<std::span<double>> centroid_blocks{report.centroids.centroids.values()};
  AdamState centroid_state(centroid_blocks, adam);

  const std::size_t n = unit.size();
  const std::size_t d = unit.dim();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(config.seed, 3));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - start);
      Matrix batch(m, d);
      std::vector<Label> labels(m);
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = order[start + k];
        std::copy_n(unit.unit.row(i).begin(), d, batch.row(k).begin());
        labels[k] = unit.labels[i];
      }
      HeadLoss hl;
      try {
        hl = head_loss(report.head, batch, labels, report.centroids.centroids, margin);
      } catch (const Error& e) {
        fail(ErrorKind::numeric, "training diverged at epoch " + std::to_string(epoch + 1) +
                                     ": " + e.what());
      }
      if (!std::isfinite(hl.loss))
        fail(ErrorKind::numeric, "training diverged at epoch " + std::to_string(epoch + 1));
      total += hl.loss * static_cast<double>(m);

      adam_step(report.head.net.parameter_blocks(), hl.head_grads.blocks(), head_state);
      if (!config.freeze_centroids) {
        const std::vector<std::span<const double>> grads{hl.centroid_grads.values()};
        adam_step(centroid_blocks, grads, centroid_state);
        for (std::size_t j = 0; j < report.centroids.classes(); ++j) {
          auto row = report.centroids.centroids.row(j);
          const double norm = l2_norm(row);
          require(norm > 1e-12, "centroid collapsed to zero", ErrorKind::numeric);
          for (double& v : row) v /= norm;
        }
      }
    }
    report.epoch_losses.push_back(total / static_cast<double>(n));
  }
  return report;
}

// SFH1 checkpoint, little-endian: "SFH1", u32 input_dim, u32 hidden_layers,
// u32 hidden_width, u32 family, f64 c, f64 lo, f64 hi, then every layer's
// weights (row-major) and bias as f64.
inline void write_head(std::ostream& os, const ScaleHead& head) {
  os.write("SFH1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(head.net.input_dim()));
  detail::put_u32(os, static_cast<std::uint32_t>(head.config.hidden_layers));
  detail::put_u32(os, static_cast<std::uint32_t>(head.config.hidden_width));
  detail::put_u32(os, static_cast<std::uint32_t>(head.activation.family));
  detail::put_f64(os, head.activation.c);
  detail::put_f64(os, head.activation.lo);
  detail::put_f64(os, head.activation.hi);
  for (double v : head.net.flat_parameters()) detail::put_f64(os, v);
  if (!os) fail(ErrorKind::format, "failed writing head checkpoint");
}

inline ScaleHead read_head(std::istream& is) {
  const std::string what = "head checkpoint";
  detail::check_magic(is, "SFH1", what);
  const std::uint32_t input_dim = detail::get_u32(is, what);
  ScaleHeadConfig config;
  config.hidden_layers = detail::get_u32(is, what);
  config.hidden_width = detail::get_u32(is, what);
  const std::uint32_t family = detail::get_u32(is, what);
  if (family > 3) fail(ErrorKind::format, what + ": unknown activation family");
  config.activation.family = static_cast<ScaleFamily>(family);
  config.activation.c = detail::get_f64(is, what);
  config.activation.lo = detail::get_f64(is, what);
  config.activation.hi = detail::get_f64(is, what);
  try {
    config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::format, what + ": invalid config block: " + e.what());
  }
  if (input_dim == 0) fail(ErrorKind::format, what + ": zero input width");
  ScaleHead head = make_scale_head(config, input_dim, 0);
  std::vector<double> flat(head.net.parameter_count());
  for (double& v : flat) {
    v = detail::get_f64(is, what);
    if (!std::isfinite(v)) fail(ErrorKind::format, what + ": non-finite parameter");
  }
  head.net.set_flat_parameters(flat);
  if (is.peek() != std::char_traits<char>::eof())
    fail(ErrorKind::format, what + ": trailing bytes after parameters");
  return head;
}

inline void write_head(const std::string& path, const ScaleHead& head) {
  auto os = detail::open_out(path);
  write_head(os, head);
}

inline ScaleHead read_head(const std::string& path) {
  auto is = detail::open_in(path);
  return read_head(is);
}

}  // namespace scaleface
