#pragma once

// Pair and template similarities, optionally confidence-weighted and shifted
// by a class-separating threshold mu:  sqrt(s_a * s_b) * (cos - mu).

#include <cmath>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "scaleface/embeddings.hpp"
#include "scaleface/error.hpp"
#include "scaleface/matrix.hpp"

namespace scaleface {

enum class SimilarityMode { cosine, scaled, mu_scaled };

struct SimilarityConfig {
  SimilarityMode mode = SimilarityMode::cosine;
  double mu = 0.0;  // only read in mu_scaled mode

  double shift() const { return mode == SimilarityMode::mu_scaled ? mu : 0.0; }
};

struct PairScores {
  std::vector<double> scores;
  SimilarityConfig config;

  std::size_t size() const noexcept { return scores.size(); }
};

struct TemplateSet {
  Matrix fused;  // [k x d], unit rows
  std::vector<std::size_t> counts;
};

inline PairScores cosine_pairs(const UnitEmbeddings& unit, const PairSet& pairs) {
  PairScores out;
  out.scores.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Pair& p = pairs.pairs[k];
    if (p.a >= unit.size() || p.b >= unit.size())
      fail(ErrorKind::invalid_argument, "pair " + std::to_string(k) + " index out of range");
    out.scores.push_back(dot(unit.unit.row(p.a), unit.unit.row(p.b)));
  }
  return out;
}

/// Geometric mean of two positive scales.
inline double pair_scale(double s1, double s2) {
  if (!(s1 > 0.0) || !(s2 > 0.0))
    fail(ErrorKind::invalid_argument, "pair_scale needs positive scales");
  return std::sqrt(s1 * s2);
}

/// Per-pair sqrt(s_a s_b) (cos - mu). Side scales may come from different
/// heads (e.g. one per modality); they are aligned with `pairs`.
inline PairScores modified_similarity(const UnitEmbeddings& unit, const PairSet& pairs,
                                      std::span<const double> scales_a,
                                      std::span<const double> scales_b, double mu) {
  require(scales_a.size() == pairs.size() && scales_b.size() == pairs.size(),
          "scale vectors must align with the pair set");
  PairScores out = cosine_pairs(unit, pairs);
  out.config = {mu == 0.0 ? SimilarityMode::scaled : SimilarityMode::mu_scaled, mu};
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double s = pair_scale(scales_a[k], scales_b[k]);
    out.scores[k] = s * (out.scores[k] - mu);
  }
  return out;
}

/// Convenience: per-image scales gathered through the pair indices.
inline PairScores modified_similarity(const UnitEmbeddings& unit, const PairSet& pairs,
                                      std::span<const double> per_image_scales, double mu) {
  std::vector<double> sa, sb;
  sa.reserve(pairs.size());
  sb.reserve(pairs.size());
  for (const Pair& p : pairs.pairs) {
    require(p.a < per_image_scales.size() && p.b < per_image_scales.size(),
            "pair index outside the scale vector");
    sa.push_back(per_image_scales[p.a]);
    sb.push_back(per_image_scales[p.b]);
  }
  return modified_similarity(unit, pairs, sa, sb, mu);
}

/// s * (<e, u> - mu) for a query against a fused template.
inline double template_similarity(std::span<const double> query, double scale,
                                  std::span<const double> templ, double mu) {
  require(query.size() == templ.size(), "query and template widths differ");
  require(std::abs(l2_norm(query) - 1.0) <= 1e-6, "query is not unit-norm");
  require(std::abs(l2_norm(templ) - 1.0) <= 1e-6, "template is not unit-norm");
  require(scale > 0.0, "template similarity needs a positive scale");
  return scale * (dot(query, templ) - mu);
}

/// Normalised arithmetic mean of the member rows.
inline std::vector<double> fuse_template(const Matrix& members) {
  require(members.rows() >= 1, "a template needs at least one member");
  std::vector<double> mean(members.cols(), 0.0);
  for (std::size_t i = 0; i < members.rows(); ++i) {
    const auto row = members.row(i);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(members.rows());
  const double n = l2_norm(mean);
  if (!(n >= 1e-12)) fail(ErrorKind::numeric, "template members average to a zero vector");
  for (double& v : mean) v /= n;
  return mean;
}

/// One fused template per group of member indices.
inline TemplateSet build_templates(const UnitEmbeddings& unit,
                                   const std::vector<std::vector<std::size_t>>& groups) {
  TemplateSet out;
  out.fused = Matrix(groups.size(), unit.dim());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Matrix members(groups[g].size(), unit.dim());
    for (std::size_t k = 0; k < groups[g].size(); ++k) {
      require(groups[g][k] < unit.size(), "template member index out of range");
      const auto src = unit.unit.row(groups[g][k]);
      std::copy(src.begin(), src.end(), members.row(k).begin());
    }
    const auto fused = fuse_template(members);
    std::copy(fused.begin(), fused.end(), out.fused.row(g).begin());
    out.counts.push_back(groups[g].size());
  }
  return out;
}

/// mu = (mean positive score + mean negative score) / 2.
inline double calibrate_mu(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  double pos = 0.0, neg = 0.0;
  std::size_t np = 0, nn = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (labels[k] == 1) {
      pos += scores[k];
      ++np;
    } else {
      neg += scores[k];
      ++nn;
    }
  }
  require(np > 0 && nn > 0, "calibrating mu needs both positive and negative pairs");
  return 0.5 * (pos / static_cast<double>(np) + neg / static_cast<double>(nn));
}

// Scores file: header "index_a,index_b,label,score", then one row per pair.
inline void write_scores(std::ostream& os, const PairSet& pairs, const PairScores& scores) {
  require(pairs.size() == scores.size(), "scores do not align with pairs");
  os << "index_a,index_b,label,score\n";
  os << std::setprecision(17);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Pair& p = pairs.pairs[k];
    os << p.a << ',' << p.b << ',' << p.label << ',' << scores.scores[k] << '\n';
  }
}

struct ScoredPairs {
  PairSet pairs;
  PairScores scores;
};

inline ScoredPairs read_scores(std::istream& is) {
  ScoredPairs out;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "index_a,index_b,label,score")
        fail(ErrorKind::format, "scores file: missing header 'index_a,index_b,label,score'");
      header_seen = true;
      continue;
    }
    const auto f = detail::split_csv(line);
    if (f.size() != 4)
      fail(ErrorKind::format, "scores line " + std::to_string(lineno) + ": expected 4 fields");
    try {
      Pair p;
      p.a = std::stoull(f[0]);
      p.b = std::stoull(f[1]);
      p.label = std::stoi(f[2]);
      const double s = std::stod(f[3]);
      if ((p.label != 0 && p.label != 1) || !std::isfinite(s)) throw std::invalid_argument(line);
      out.pairs.pairs.push_back(p);
      out.scores.scores.push_back(s);
    } catch (const std::logic_error&) {
      fail(ErrorKind::format, "scores line " + std::to_string(lineno) + ": malformed field");
    }
  }
  if (!header_seen) fail(ErrorKind::format, "scores file: empty");
  return out;
}

inline void write_scores(const std::string& path, const PairSet& pairs, const PairScores& scores) {
  auto os = detail::open_out(path);
  write_scores(os, pairs, scores);
}

inline ScoredPairs read_scores(const std::string& path) {
  auto is = detail::open_in(path);
  return read_scores(is);
}

}  // namespace scaleface
