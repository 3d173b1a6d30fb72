#pragma once

// Seeded finite-difference checks covering every analytic gradient: the three
// losses (embeddings, centroids, per-sample scales), the dense network and the
// scale head for each activation family and depth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "scaleface/gradnet.hpp"
#include "scaleface/losses.hpp"
#include "scaleface/scale_head.hpp"

namespace scaleface {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

struct GradCheckSuiteConfig {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double step = 1e-4;
};

namespace detail {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, bool unit_rows) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (unit_rows) rng.unit_vector(m.row(r));
    else
      for (double& v : m.row(r)) v = rng.normal();
  }
  return m;
}

inline std::vector<Label> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<Label> y(n);
  for (auto& v : y) v = static_cast<Label>(rng.index(classes));
  return y;
}

/// Fresh nets have zero biases, so a sample whose inputs are all zero sits
/// exactly on a relu kink; small bias offsets move the check point off it.
inline void offset_biases(DenseNet& net, Rng& rng) {
  auto blocks = net.parameter_blocks();
  for (std::size_t b = 1; b < blocks.size(); b += 2)
    for (double& v : blocks[b]) v = rng.uniform(-0.2, 0.2);
}

/// Smallest |preactivation| feeding a relu; central differences are only
/// meaningful when the step cannot carry a unit across its kink.
inline double relu_clearance(const DenseNet& net, const Matrix& batch) {
  const ForwardResult fwd = net_forward(net, batch);
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    if (net.layers()[l].activation != Activation::relu) continue;
    for (double v : fwd.cache.preactivations[l].values()) lowest = std::min(lowest, std::abs(v));
  }
  return lowest;
}

inline constexpr double kReluGuard = 2e-3;

/// Redraws the batch until every relu unit is clear of its kink.
template <typename Draw>
Matrix clear_batch(const DenseNet& net, Rng& rng, Draw draw) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix batch = draw(rng);
    if (relu_clearance(net, batch) >= kReluGuard) return batch;
  }
  fail(ErrorKind::numeric, "could not place a gradient check point away from relu kinks");
}

inline void copy_into(std::span<double> dst, std::span<const double> src) {
  std::copy(src.begin(), src.end(), dst.begin());
}

/// Loss over (embeddings, centroids) flattened one after the other.
inline GradCheckReport check_margin_softmax(const Matrix& emb, const Matrix& cent,
                                            const std::vector<Label>& labels,
                                            const std::vector<double>& scales, double margin,
                                            const GradCheckSuiteConfig& cfg) {
  const std::size_t ne = emb.size();
  std::vector<double> flat(emb.values().begin(), emb.values().end());
  flat.insert(flat.end(), cent.values().begin(), cent.values().end());
  const LossEvaluator f = [&](std::span<const double> p, std::span<double> grad) {
    Matrix e(emb.rows(), emb.cols()), c(cent.rows(), cent.cols());
    copy_into(e.values(), p.subspan(0, ne));
    copy_into(c.values(), p.subspan(ne));
    const LossResult r = margin_softmax(e, c, labels, scales, margin, 1e-7, false);
    if (!grad.empty()) {
      copy_into(grad.subspan(0, ne), r.grad_embeddings.values());
      copy_into(grad.subspan(ne), r.grad_centroids.values());
    }
    return r.loss;
  };
  return finite_diff_check(f, flat, cfg.tolerance, cfg.step);
}

}  // namespace detail

inline std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteConfig& cfg = {}) {
  std::vector<GradCheckCase> out;
  auto add = [&](std::string name, GradCheckReport r) { out.push_back({std::move(name), std::move(r)}); };

  // Plain softmax on raw embeddings and centroids.
  for (std::uint64_t k = 0; k < 3; ++k) {
    Rng rng(mix_seed(cfg.seed, 100 + k));
    const std::size_t n = 3 + k, classes = 3 + k, d = 4 + k;
    const Matrix emb = detail::random_matrix(n, d, rng, false);
    const Matrix cent = detail::random_matrix(classes, d, rng, false);
    const auto labels = detail::random_labels(n, classes, rng);
    const std::vector<double> ones(n, 1.0);
    add("softmax/" + std::to_string(k), detail::check_margin_softmax(emb, cent, labels, ones, 0.0, cfg));
  }

  // ArcFace with a fixed scale.
  for (std::uint64_t k = 0; k < 3; ++k) {
    Rng rng(mix_seed(cfg.seed, 200 + k));
    const std::size_t n = 4, classes = 3 + k, d = 6;
    const Matrix emb = detail::random_matrix(n, d, rng, true);
    const Matrix cent = detail::random_matrix(classes, d, rng, true);
    const auto labels = detail::random_labels(n, classes, rng);
    const std::vector<double> scales(n, 4.0 + 2.0 * static_cast<double>(k));
    add("arcface/" + std::to_string(k),
        detail::check_margin_softmax(emb, cent, labels, scales, 0.2 + 0.15 * static_cast<double>(k), cfg));
  }

  // ScaleFace: per-sample scales as the free parameters.
  for (std::uint64_t k = 0; k < 3; ++k) {
    Rng rng(mix_seed(cfg.seed, 300 + k));
    const std::size_t n = 5, classes = 4, d = 6;
    const Matrix emb = detail::random_matrix(n, d, rng, true);
    const CentroidMatrix cent{detail::random_matrix(classes, d, rng, true), false};
    const auto labels = detail::random_labels(n, classes, rng);
    std::vector<double> scales(n);
    for (double& s : scales) s = rng.uniform(1.0, 12.0);
    const double margin = 0.5;
    const LossEvaluator f = [&](std::span<const double> p, std::span<double> grad) {
      const LossResult r = scaleface_loss(emb, cent, labels, p, margin);
      if (!grad.empty()) detail::copy_into(grad, r.grad_scales);
      return r.loss;
    };
    add("scaleface_scales/" + std::to_string(k), finite_diff_check(f, scales, cfg.tolerance, cfg.step));
  }

  // ScaleFace: embeddings and centroids at varying per-sample scales.
  for (std::uint64_t k = 0; k < 2; ++k) {
    Rng rng(mix_seed(cfg.seed, 350 + k));
    const std::size_t n = 4, classes = 3, d = 5;
    const Matrix emb = detail::random_matrix(n, d, rng, true);
    const Matrix cent = detail::random_matrix(classes, d, rng, true);
    const auto labels = detail::random_labels(n, classes, rng);
    std::vector<double> scales(n);
    for (double& s : scales) s = rng.uniform(1.0, 10.0);
    add("scaleface_inputs/" + std::to_string(k),
        detail::check_margin_softmax(emb, cent, labels, scales, 0.5, cfg));
  }

  // Dense network: parameters and inputs under a fixed random linear readout.
  for (std::uint64_t k = 0; k < 3; ++k) {
    Rng rng(mix_seed(cfg.seed, 400 + k));
    const std::vector<std::size_t> dims{5, 7 + k, 6, 2};
    DenseNet net = DenseNet::random(dims, Activation::relu, Activation::identity,
                                    mix_seed(cfg.seed, 410 + k));
    detail::offset_biases(net, rng);
    const Matrix batch = detail::clear_batch(
        net, rng, [&](Rng& r) { return detail::random_matrix(4, dims.front(), r, false); });
    const Matrix readout = detail::random_matrix(4, dims.back(), rng, false);
    const LossEvaluator f = [&](std::span<const double> p, std::span<double> grad) {
      DenseNet local = net;
      local.set_flat_parameters(p);
      const ForwardResult fwd = net_forward(local, batch);
      double loss = 0.0;
      for (std::size_t i = 0; i < readout.size(); ++i) loss += readout.values()[i] * fwd.outputs.values()[i];
      if (!grad.empty()) {
        const auto g = net_backward(local, fwd.cache, readout).params.flat();
        detail::copy_into(grad, g);
      }
      return loss;
    };
    add("densenet_params/" + std::to_string(k),
        finite_diff_check(f, net.flat_parameters(), cfg.tolerance, cfg.step));

    const LossEvaluator g = [&](std::span<const double> p, std::span<double> grad) {
      Matrix x(batch.rows(), batch.cols());
      detail::copy_into(x.values(), p);
      const ForwardResult fwd = net_forward(net, x);
      double loss = 0.0;
      for (std::size_t i = 0; i < readout.size(); ++i) loss += readout.values()[i] * fwd.outputs.values()[i];
      if (!grad.empty()) detail::copy_into(grad, net_backward(net, fwd.cache, readout).input_grad.values());
      return loss;
    };
    const std::vector<double> inputs(batch.values().begin(), batch.values().end());
    add("densenet_inputs/" + std::to_string(k), finite_diff_check(g, inputs, cfg.tolerance, cfg.step));
  }

  // Scale head through the ScaleFace loss: head parameters, then centroids.
  const std::vector<std::pair<std::size_t, ScaleActivation>> heads{
      {1, ScaleActivation::exponential()},   {2, ScaleActivation::sigm(64.0)},
      {3, ScaleActivation::sigm(32.0)},      {4, ScaleActivation::shifted_sigm(32.0, 64.0)},
      {2, ScaleActivation::relu(8.0)},       {1, ScaleActivation::relu(1.0)},
      {2, ScaleActivation::exponential()},   {3, ScaleActivation::shifted_sigm(1.0, 16.0)},
  };
  for (std::size_t k = 0; k < heads.size(); ++k) {
    Rng rng(mix_seed(cfg.seed, 500 + k));
    const std::size_t n = 4, classes = 3, d = 6;
    ScaleHeadConfig hc;
    hc.hidden_layers = heads[k].first;
    hc.hidden_width = 8;
    hc.activation = heads[k].second;
    ScaleHead head = make_scale_head(hc, d, mix_seed(cfg.seed, 510 + k));
    detail::offset_biases(head.net, rng);
    const Matrix batch =
        detail::clear_batch(head.net, rng, [&](Rng& r) { return detail::random_matrix(n, d, r, true); });
    const Matrix cent = detail::random_matrix(classes, d, rng, true);
    const auto labels = detail::random_labels(n, classes, rng);
    const LossEvaluator f = [&](std::span<const double> p, std::span<double> grad) {
      ScaleHead local = head;
      local.net.set_flat_parameters(p);
      const HeadLoss hl = head_loss(local, batch, labels, cent, 0.5);
      if (!grad.empty()) detail::copy_into(grad, hl.head_grads.flat());
      return hl.loss;
    };
    add("head_params/" + std::to_string(hc.hidden_layers) + "x" + hc.activation.name(),
        finite_diff_check(f, head.net.flat_parameters(), cfg.tolerance, cfg.step));

    if (k < 2) {
      const LossEvaluator g = [&](std::span<const double> p, std::span<double> grad) {
        Matrix c(classes, d);
        detail::copy_into(c.values(), p);
        const HeadLoss hl = head_loss(head, batch, labels, c, 0.5);
        if (!grad.empty()) detail::copy_into(grad, hl.centroid_grads.values());
        return hl.loss;
      };
      const std::vector<double> flat(cent.values().begin(), cent.values().end());
      add("head_centroids/" + hc.activation.name(), finite_diff_check(g, flat, cfg.tolerance, cfg.step));
    }
  }
  return out;
}

}  // namespace scaleface
