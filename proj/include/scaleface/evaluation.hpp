#pragma once

// Verification and retrieval metrics: TAR@FAR, the reject-verification
// protocol, confidence baselines, precision-recall curves and Box-Cox
// confidence histograms.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "scaleface/embeddings.hpp"
#include "scaleface/error.hpp"
#include "scaleface/matrix.hpp"
#include "scaleface/random.hpp"

namespace scaleface {

struct TarResult {
  double tar = 0.0;
  double threshold = 0.0;  // accept iff score >= threshold; may be +inf
};

/// TAR at a false-acceptance budget `far`.
///
/// Candidate thresholds are the minimum observed score (accept everything),
/// every negative score, and the smallest observed score strictly above every
/// negative (+inf if none). The chosen threshold is the smallest candidate
/// whose accepted-negative count k satisfies k <= far * |negatives|.
inline TarResult tar_at_far(std::span<const double> scores, std::span<const int> labels,
                            double far) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  require(far >= 0.0 && far <= 1.0, "FAR target must lie in [0, 1]");
  std::vector<double> pos, neg;
  for (std::size_t k = 0; k < scores.size(); ++k) (labels[k] == 1 ? pos : neg).push_back(scores[k]);
  require(!pos.empty() && !neg.empty(), "TAR@FAR needs at least one positive and one negative");

  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  const double budget = far * static_cast<double>(neg.size());
  const double lowest = std::min(pos.front(), neg.back());

  double tau;
  if (static_cast<double>(neg.size()) <= budget) {
    tau = lowest;
  } else {
    // Walk negatives from the top; the count of negatives >= v is the index
    // just past the last copy of v.
    std::optional<double> best;
    std::size_t k = 0;
    while (k < neg.size()) {
      const double v = neg[k];
      while (k < neg.size() && neg[k] == v) ++k;
      if (static_cast<double>(k) <= budget) best = v;
      else break;
    }
    if (best) {
      tau = *best;
    } else {
      const auto above = std::upper_bound(pos.begin(), pos.end(), neg.front());
      tau = above == pos.end() ? std::numeric_limits<double>::infinity() : *above;
    }
  }
  const auto first_accepted = std::lower_bound(pos.begin(), pos.end(), tau);
  const auto accepted = static_cast<double>(pos.end() - first_accepted);
  return {accepted / static_cast<double>(pos.size()), tau};
}

enum class UncertaintySource { scale, norm, random, oracle };

inline const char* to_string(UncertaintySource s) {
  switch (s) {
    case UncertaintySource::scale: return "scale";
    case UncertaintySource::norm: return "norm";
    case UncertaintySource::random: return "random";
    case UncertaintySource::oracle: return "oracle";
  }
  return "unknown";
}

struct UncertaintyScores {
  std::vector<double> values;  // per pair, aligned with a PairSet
  UncertaintySource provenance = UncertaintySource::scale;
};

/// Geometric mean of the two members' uncertainties.
inline UncertaintyScores pair_uncertainty(std::span<const double> per_image, const PairSet& pairs,
                                          UncertaintySource provenance = UncertaintySource::scale) {
  for (double u : per_image)
    require(u >= 0.0 && std::isfinite(u), "per-image uncertainties must be finite and non-negative");
  UncertaintyScores out;
  out.provenance = provenance;
  out.values.reserve(pairs.size());
  for (const Pair& p : pairs.pairs) {
    require(p.a < per_image.size() && p.b < per_image.size(), "pair index outside uncertainty vector");
    out.values.push_back(std::sqrt(per_image[p.a] * per_image[p.b]));
  }
  return out;
}

/// u(x) = 1 / s(x).
inline std::vector<double> scale_uncertainty(std::span<const double> scales) {
  std::vector<double> u;
  u.reserve(scales.size());
  for (double s : scales) {
    require(s > 0.0, "scale-derived uncertainty needs positive scales");
    u.push_back(1.0 / s);
  }
  return u;
}

/// Confidence = pre-normalisation embedding norm.
inline std::vector<double> norm_confidence(const UnitEmbeddings& unit) { return unit.raw_norms; }

inline std::vector<double> random_confidence(std::size_t n, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 5));
  std::vector<double> out(n);
  for (double& v : out) v = rng.uniform();
  return out;
}

/// 1 for pairs on the wrong side of the full-set threshold, 0 otherwise.
inline std::vector<double> oracle_uncertainty(std::span<const double> scores,
                                              std::span<const int> labels, double far) {
  const double tau = tar_at_far(scores, labels, far).threshold;
  std::vector<double> u(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool accepted = scores[k] >= tau;
    u[k] = (accepted != (labels[k] == 1)) ? 1.0 : 0.0;
  }
  return u;
}

enum class AucNormalization { unit, none };

/// 0, 0.02, ..., 0.5.
inline std::vector<double> default_rejection_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 25; ++k) grid.push_back(0.02 * k);
  return grid;
}

inline void validate_grid(std::span<const double> grid) {
  require(!grid.empty(), "rejection grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    require(grid[k] >= 0.0 && grid[k] <= 0.5, "rejection grid values must lie in [0, 0.5]");
    require(k == 0 || grid[k] >= grid[k - 1], "rejection grid must be sorted");
  }
}

/// Trapezoid area under (grid, values). Unit mode divides by the grid width,
/// i.e. returns the grid-weighted mean; a single point returns its value.
inline double curve_auc(std::span<const double> grid, std::span<const double> values,
                        AucNormalization mode) {
  require(grid.size() == values.size() && !grid.empty(), "curve grid and values differ");
  for (std::size_t k = 1; k < grid.size(); ++k)
    require(grid[k] >= grid[k - 1], "curve grid must be sorted");
  double area = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k)
    area += 0.5 * (values[k] + values[k - 1]) * (grid[k] - grid[k - 1]);
  if (mode == AucNormalization::none) return area;
  const double width = grid.back() - grid.front();
  return width > 0.0 ? area / width : values.front();
}

struct RejectionCurve {
  std::vector<double> grid;
  std::vector<double> tar;
  std::vector<double> thresholds;
  double far = 0.0;
  double auc_raw = 0.0;
  double auc_normalized = 0.0;
  AucNormalization normalization = AucNormalization::unit;
};

/// Number of pairs dropped at rejection share r: ceil(r * n), with a 1e-9
/// slack so grid values like 0.02 * k do not round up an extra pair.
inline std::size_t rejected_count(double r, std::size_t n) {
  const double raw = std::ceil(r * static_cast<double>(n) - 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, raw)));
}

/// At each grid share r drop the ceil(r*n) most uncertain pairs (ties: lower
/// pair index dropped first) and recompute TAR@FAR on the rest.
inline RejectionCurve reject_verification(std::span<const double> scores, std::span<const int> labels,
                                          std::span<const double> uncertainties, double far,
                                          std::span<const double> grid,
                                          AucNormalization mode = AucNormalization::unit) {
  const std::size_t n = scores.size();
  require(labels.size() == n && uncertainties.size() == n, "rejection inputs are not aligned");
  validate_grid(grid);
  for (double u : uncertainties) require(std::isfinite(u), "uncertainties must be finite");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return uncertainties[a] > uncertainties[b];
  });

  RejectionCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  curve.far = far;
  curve.normalization = mode;
  std::vector<char> keep(n);
  std::vector<double> kept_scores;
  std::vector<int> kept_labels;
  for (double r : grid) {
    const std::size_t drop = rejected_count(r, n);
    std::fill(keep.begin(), keep.end(), 1);
    for (std::size_t k = 0; k < drop; ++k) keep[order[k]] = 0;
    kept_scores.clear();
    kept_labels.clear();
    std::size_t npos = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (keep[k]) {
        kept_scores.push_back(scores[k]);
        kept_labels.push_back(labels[k]);
        npos += labels[k] == 1;
      }
    if (npos == 0 || npos == kept_scores.size())
      fail(ErrorKind::invalid_argument, "rejection share " + std::to_string(r) +
                                            " leaves no positive or no negative pairs");
    const TarResult t = tar_at_far(kept_scores, kept_labels, far);
    curve.tar.push_back(t.tar);
    curve.thresholds.push_back(t.threshold);
  }
  curve.auc_raw = curve_auc(curve.grid, curve.tar, AucNormalization::none);
  curve.auc_normalized = curve_auc(curve.grid, curve.tar, mode);
  return curve;
}

inline void write_curve(std::ostream& os, const RejectionCurve& curve) {
  os << "rejection_rate,tar\n" << std::setprecision(17);
  for (std::size_t k = 0; k < curve.grid.size(); ++k) os << curve.grid[k] << ',' << curve.tar[k] << '\n';
}

struct PrPoint {
  double recall = 0.0;
  double precision = 1.0;
  double threshold = std::numeric_limits<double>::infinity();
};

struct PrCurve {
  std::vector<PrPoint> points;  // starts at (recall 0, precision 1)
  double auc = 0.0;
};

struct RetrievalEval {
  Matrix scores;  // [queries x gallery]
  std::vector<std::size_t> relevant;
  PrCurve all;   // every (query, item) pair above threshold is retrieved
  PrCurve top1;  // at most each query's best item is retrieved
};

/// Threshold-swept precision/recall for queries with exactly one relevant
/// gallery item each. With `top1`, only each query's argmax (lowest index on
/// ties) is a candidate. Without explicit thresholds every distinct candidate
/// score is used. Area is the trapezoid over recall.
inline PrCurve precision_recall(const Matrix& scores, std::span<const std::size_t> relevant, bool top1,
                                std::optional<std::vector<double>> thresholds = std::nullopt) {
  require(scores.cols() > 0, "retrieval gallery is empty");
  require(scores.rows() > 0 && relevant.size() == scores.rows(),
          "need one relevant index per query");
  struct Candidate {
    double score;
    bool hit;
  };
  std::vector<Candidate> cands;
  for (std::size_t q = 0; q < scores.rows(); ++q) {
    require(relevant[q] < scores.cols(), "relevant index outside the gallery");
    const auto row = scores.row(q);
    if (top1) {
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      cands.push_back({row[best], best == relevant[q]});
    } else {
      for (std::size_t g = 0; g < row.size(); ++g) cands.push_back({row[g], g == relevant[q]});
    }
  }
  std::sort(cands.begin(), cands.end(),
            [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::vector<double> taus;
  if (thresholds) {
    taus = *thresholds;
    std::sort(taus.begin(), taus.end(), std::greater<>());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  } else {
    for (const Candidate& c : cands)
      if (taus.empty() || c.score != taus.back()) taus.push_back(c.score);
  }

  const auto queries = static_cast<double>(scores.rows());
  PrCurve curve;
  curve.points.push_back({0.0, 1.0, std::numeric_limits<double>::infinity()});
  std::size_t k = 0, retrieved = 0, hits = 0;
  for (double tau : taus) {
    while (k < cands.size() && cands[k].score >= tau) {
      ++retrieved;
      hits += cands[k].hit;
      ++k;
    }
    if (retrieved == 0) continue;
    curve.points.push_back({static_cast<double>(hits) / queries,
                            static_cast<double>(hits) / static_cast<double>(retrieved), tau});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const PrPoint& a = curve.points[i - 1];
    const PrPoint& b = curve.points[i];
    curve.auc += (b.recall - a.recall) * 0.5 * (a.precision + b.precision);
  }
  return curve;
}

inline RetrievalEval evaluate_retrieval(const Matrix& scores, std::span<const std::size_t> relevant) {
  RetrievalEval e;
  e.scores = scores;
  e.relevant.assign(relevant.begin(), relevant.end());
  e.all = precision_recall(scores, relevant, false);
  e.top1 = precision_recall(scores, relevant, true);
  return e;
}

struct BoxCoxHistogram {
  std::vector<std::size_t> counts;
  std::vector<double> edges;       // bins + 1 edges on [0, 1]
  std::vector<double> normalized;  // per input, in [0, 1]
  bool degenerate = false;         // zero range: everything in one bin
};

/// y = (x^lambda - 1) / lambda, min-max scaled to [0, 1], fixed-width bins.
inline double boxcox(double x, double lambda) { return (std::pow(x, lambda) - 1.0) / lambda; }

inline BoxCoxHistogram boxcox_confidence_histogram(std::span<const double> scales, double lambda,
                                                   std::size_t bins) {
  require(!scales.empty(), "histogram needs at least one value");
  require(lambda != 0.0, "Box-Cox lambda must be non-zero");
  require(bins >= 1, "histogram needs at least one bin");
  std::vector<double> y;
  y.reserve(scales.size());
  for (double s : scales) {
    require(s > 0.0, "Box-Cox needs positive inputs");
    y.push_back(boxcox(s, lambda));
  }
  const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
  const double lo = *lo_it, hi = *hi_it;
  BoxCoxHistogram h;
  if (!(hi > lo)) {
    h.degenerate = true;
    h.counts = {scales.size()};
    h.edges = {0.0, 1.0};
    h.normalized.assign(scales.size(), 0.0);
    return h;
  }
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
  for (double v : y) {
    const double t = (v - lo) / (hi - lo);
    h.normalized.push_back(t);
    const auto b = std::min(bins - 1, static_cast<std::size_t>(t * static_cast<double>(bins)));
    ++h.counts[b];
  }
  return h;
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, "spearman needs two aligned samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  require(saa > 0.0 && sbb > 0.0, "spearman is undefined for a constant sample", ErrorKind::numeric);
  return sab / std::sqrt(saa * sbb);
}

}  // namespace scaleface
