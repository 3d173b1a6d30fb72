#pragma once

// Scale-as-confidence toy model: x = s * w + eps, eps ~ N(0, sigma^2 I), and
// an error whenever t = <w, x / |x|> falls below a threshold a. The closed
// form linearises t around w; the simulator samples the exact model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <thread>
#include <vector>

#include "scaleface/error.hpp"
#include "scaleface/matrix.hpp"
#include "scaleface/random.hpp"

namespace scaleface {

struct GaussianModelSpec {
  std::size_t dim = 128;
  std::vector<double> direction;  // empty: drawn from direction_seed
  double scale = 10.0;
  double sigma = 1.0;
  double threshold = 0.9;
  std::uint64_t direction_seed = 0;

  void validate() const {
    require(dim >= 2, "model dimension must be at least 2");
    require(scale > 0.0 && std::isfinite(scale), "model scale must be positive");
    require(sigma >= 0.0 && std::isfinite(sigma), "noise sigma must be non-negative");
    require(threshold >= -1.0 && threshold <= 1.0, "threshold must lie in [-1, 1]");
    if (!direction.empty()) {
      require(direction.size() == dim, "direction length differs from the model dimension");
      require(std::abs(l2_norm(direction) - 1.0) <= 1e-12, "direction is not unit-norm");
    }
  }

  std::vector<double> resolved_direction() const {
    if (!direction.empty()) return direction;
    std::vector<double> w(dim);
    Rng rng(mix_seed(direction_seed, 6));
    rng.unit_vector(w);
    return w;
  }
};

struct ErrorProbability {
  double probability = 0.0;
  double log_probability = 0.0;  // stays finite after probability underflows
  bool noiseless_limit = false;  // sigma == 0
};

namespace detail {

/// log(erfc(x)); the asymptotic series takes over where erfc underflows.
inline double log_erfc(double x) {
  if (x < 20.0) return std::log(std::erfc(x));
  const double inv2 = 1.0 / (x * x);
  // 1 - 1/(2x^2) + 3/(2x^2)^2 - 15/(2x^2)^3 + 105/(2x^2)^4 - 945/(2x^2)^5
  const double h = 0.5 * inv2;
  const double series = 1.0 - h * (1.0 - 3.0 * h * (1.0 - 5.0 * h * (1.0 - 7.0 * h * (1.0 - 9.0 * h))));
  return -x * x - std::log(x * std::sqrt(std::numbers::pi)) + std::log(series);
}

}  // namespace detail

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// P(t < a) ~= 2 (1 - Phi(s (1 - a) / sigma)) = erfc(z / sqrt 2).
inline ErrorProbability analytic_error_prob(double s, double sigma, double a) {
  require(s > 0.0 && std::isfinite(s), "scale must be positive");
  require(sigma >= 0.0 && std::isfinite(sigma), "sigma must be non-negative");
  require(a <= 1.0 && a >= -1.0, "threshold must lie in [-1, 1]");
  if (sigma == 0.0) return {0.0, -std::numeric_limits<double>::infinity(), true};
  const double x = s * (1.0 - a) / sigma / std::numbers::sqrt2;
  return {std::erfc(x), detail::log_erfc(x), false};
}

struct SimulationResult {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::uint64_t errors = 0;
  std::uint64_t samples = 0;
};

enum class SimulationMethod {
  /// Draws the component of the noise along w and the squared norm of the
  /// rest (sigma^2 * chi-square with d-1 dof); same law as the full vector.
  projected,
  /// Draws every coordinate of x = s w + eps.
  full_vector,
};

/// Work is cut into this many seeded substreams regardless of thread count,
/// so the estimate depends on the seed only.
inline constexpr std::size_t kSimulationStreams = 64;

inline SimulationResult simulate_error_prob(const GaussianModelSpec& spec, std::uint64_t n_samples,
                                            std::uint64_t seed, unsigned threads = 1,
                                            SimulationMethod method = SimulationMethod::projected) {
  spec.validate();
  require(n_samples >= 1, "simulation needs at least one sample");
  const std::vector<double> w = spec.resolved_direction();
  std::vector<std::uint64_t> counts(kSimulationStreams, 0);

  auto run_stream = [&](std::size_t k) {
    const std::uint64_t n = n_samples / kSimulationStreams + (k < n_samples % kSimulationStreams ? 1 : 0);
    Rng rng(mix_seed(seed, 1000 + k));
    std::uint64_t errors = 0;
    if (method == SimulationMethod::projected) {
      const auto rest_dof = static_cast<double>(spec.dim - 1);
      for (std::uint64_t i = 0; i < n; ++i) {
        const double along = spec.scale + spec.sigma * rng.normal();
        const double rest = spec.sigma * spec.sigma * rng.chi_square(rest_dof);
        if (along < spec.threshold * std::sqrt(along * along + rest)) ++errors;
      }
      counts[k] = errors;
      return;
    }
    for (std::uint64_t i = 0; i < n; ++i) {
      double along = 0.0, norm2 = 0.0;
      for (std::size_t c = 0; c < spec.dim; ++c) {
        const double x = spec.scale * w[c] + spec.sigma * rng.normal();
        along += w[c] * x;
        norm2 += x * x;
      }
      if (along < spec.threshold * std::sqrt(norm2)) ++errors;
    }
    counts[k] = errors;
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, kSimulationStreams);
  if (workers == 1) {
    for (std::size_t k = 0; k < kSimulationStreams; ++k) run_stream(k);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t k = t; k < kSimulationStreams; k += workers) run_stream(k);
      });
    for (auto& th : pool) th.join();
  }

  SimulationResult r;
  r.samples = n_samples;
  for (std::uint64_t c : counts) r.errors += c;
  const auto n = static_cast<double>(n_samples);
  r.estimate = static_cast<double>(r.errors) / n;
  r.standard_error = std::sqrt(r.estimate * (1.0 - r.estimate) / n);
  return r;
}

inline std::vector<ErrorProbability> error_prob_sweep(std::span<const double> scales, double sigma,
                                                      double a) {
  for (std::size_t k = 1; k < scales.size(); ++k)
    require(scales[k] >= scales[k - 1], "scale grid must be sorted ascending");
  std::vector<ErrorProbability> out;
  out.reserve(scales.size());
  for (double s : scales) out.push_back(analytic_error_prob(s, sigma, a));
  return out;
}

}  // namespace scaleface
