#pragma once

// Softmax, ArcFace and ScaleFace losses with analytic gradients.
//
// For sample i with scale s_i, cosines c_ij = <e_i, w_j> and target y_i the
// logits are z_iy = s_i * cos(theta_iy + m) and z_ij = s_i * c_ij otherwise;
// the loss is the batch mean of -log softmax(z_i)[y_i].

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "scaleface/embeddings.hpp"
#include "scaleface/error.hpp"
#include "scaleface/matrix.hpp"

namespace scaleface {

enum class ScaleMode { fixed, per_sample };

struct LossConfig {
  double margin = 0.5;  // radians, [0, pi/2)
  ScaleMode scale_mode = ScaleMode::fixed;
  double scale = 64.0;
  double cos_clamp = 1e-7;

  void validate() const {
    require(margin >= 0.0 && margin < 1.5707963267948966, "margin must lie in [0, pi/2)");
    require(scale_mode != ScaleMode::fixed || scale > 0.0, "fixed scale must be positive");
    require(cos_clamp > 0.0 && cos_clamp < 1.0, "cosine clamp must lie in (0, 1)");
  }
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_sample;  // unaveraged -log p_y
  Matrix grad_embeddings;          // [n x d]
  Matrix grad_centroids;           // [C x d]
  std::vector<double> grad_scales; // [n], empty unless per-sample scales
  Matrix probabilities;            // [n x C]
};

namespace detail {

/// cos(theta + m) from cos(theta) and its derivative with respect to cos(theta).
/// The clamp guards sin(theta) only, so m = 0 returns c unchanged.
struct MarginCos {
  double value;
  double slope;
};

inline MarginCos margin_cos(double c, double margin, double clamp) {
  if (margin == 0.0) return {c, 1.0};
  const double cm = std::cos(margin);
  const double sm = std::sin(margin);
  const double lo = -1.0 + clamp;
  const double hi = 1.0 - clamp;
  const bool clamped = c < lo || c > hi;
  const double cc = std::clamp(c, lo, hi);
  const double sin_t = std::sqrt(1.0 - cc * cc);
  const double value = c * cm - sin_t * sm;
  const double slope = clamped ? cm : cm + sm * cc / sin_t;
  return {value, slope};
}

/// Shared evaluation without input validation. Scales may be zero (a uniform
/// softmax). `want_scale_grad` controls whether grad_scales is populated.
inline LossResult margin_softmax(const Matrix& emb, const Matrix& centroids,
                                 std::span<const Label> labels, std::span<const double> scales,
                                 double margin, double clamp, bool want_scale_grad) {
  const std::size_t n = emb.rows();
  const std::size_t classes = centroids.rows();
  const std::size_t d = emb.cols();
  require(n > 0, "loss needs at least one sample");
  require(centroids.cols() == d, "embedding and centroid widths differ");
  require(labels.size() == n && scales.size() == n, "labels/scales do not match batch size");

  LossResult r;
  r.per_sample.resize(n);
  r.grad_embeddings = Matrix(n, d);
  r.grad_centroids = Matrix(classes, d);
  r.probabilities = Matrix(n, classes);
  if (want_scale_grad) r.grad_scales.assign(n, 0.0);

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> cosines(classes), logits(classes), dcos(classes);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Label y = labels[i];
    require(y < classes, "label " + std::to_string(y) + " out of range");
    const double s = scales[i];
    const auto ei = emb.row(i);
    for (std::size_t j = 0; j < classes; ++j) cosines[j] = dot(ei, centroids.row(j));
    const MarginCos target = margin_cos(cosines[y], margin, clamp);

    double peak = -INFINITY;
    for (std::size_t j = 0; j < classes; ++j) {
      logits[j] = s * (j == y ? target.value : cosines[j]);
      peak = std::max(peak, logits[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(logits[j] - peak);
    const double lse = peak + std::log(sum);
    const double li = lse - logits[y];
    r.per_sample[i] = li;
    total += li;

    double ds = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = std::exp(logits[j] - lse);
      r.probabilities(i, j) = p;
      const double dz = (p - (j == y ? 1.0 : 0.0)) * inv_n;
      const double base = j == y ? target.value : cosines[j];
      ds += dz * base;
      dcos[j] = dz * s * (j == y ? target.slope : 1.0);
    }
    if (want_scale_grad) r.grad_scales[i] = ds;

    auto gei = r.grad_embeddings.row(i);
    for (std::size_t j = 0; j < classes; ++j) {
      const double g = dcos[j];
      if (g == 0.0) continue;
      const auto wj = centroids.row(j);
      auto gwj = r.grad_centroids.row(j);
      for (std::size_t c = 0; c < d; ++c) {
        gei[c] += g * wj[c];
        gwj[c] += g * ei[c];
      }
    }
  }
  r.loss = total * inv_n;
  if (!std::isfinite(r.loss)) fail(ErrorKind::numeric, "loss is not finite");
  return r;
}

inline void require_unit_inputs(const Matrix& emb, const Matrix& centroids) {
  require_unit_rows(emb, 1e-6, "embeddings");
  require_unit_rows(centroids, 1e-6, "centroids");
}

}  // namespace detail

/// Plain softmax cross-entropy over logits <e_i, w_j>; nothing is normalised.
inline LossResult softmax_loss(const Matrix& embeddings, const Matrix& centroids,
                               std::span<const Label> labels) {
  const std::vector<double> ones(embeddings.rows(), 1.0);
  return detail::margin_softmax(embeddings, centroids, labels, ones, 0.0, 1e-7, false);
}

inline LossResult arcface_loss(const Matrix& unit_embeddings, const CentroidMatrix& centroids,
                               std::span<const Label> labels, const LossConfig& config) {
  config.validate();
  require(config.scale_mode == ScaleMode::fixed, "arcface_loss needs a fixed scale");
  detail::require_unit_inputs(unit_embeddings, centroids.centroids);
  const std::vector<double> scales(unit_embeddings.rows(), config.scale);
  return detail::margin_softmax(unit_embeddings, centroids.centroids, labels, scales,
                                config.margin, config.cos_clamp, false);
}

/// ArcFace with a per-sample scale; also returns dL/ds_i.
inline LossResult scaleface_loss(const Matrix& unit_embeddings, const CentroidMatrix& centroids,
                                 std::span<const Label> labels, std::span<const double> scales,
                                 double margin, double cos_clamp = 1e-7) {
  LossConfig cfg{margin, ScaleMode::per_sample, 1.0, cos_clamp};
  cfg.validate();
  for (std::size_t i = 0; i < scales.size(); ++i)
    if (!(scales[i] > 0.0) || !std::isfinite(scales[i]))
      fail(ErrorKind::invalid_argument,
           "scale " + std::to_string(i) + " is not positive: " + std::to_string(scales[i]));
  detail::require_unit_inputs(unit_embeddings, centroids.centroids);
  return detail::margin_softmax(unit_embeddings, centroids.centroids, labels, scales, margin,
                                cos_clamp, true);
}

}  // namespace scaleface
