#pragma once

// End-to-end scenarios on synthetic data: heteroscedastic verification with
// rejection, mu-shifted similarity against plain cosine, and two-view
// retrieval with one scale head per view.

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scaleface/embeddings.hpp"
#include "scaleface/evaluation.hpp"
#include "scaleface/scale_head.hpp"
#include "scaleface/similarity.hpp"

namespace scaleface {

struct ExperimentReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  double wall_clock_seconds = 0.0;
};

struct VerificationSetup {
  SyntheticSpec data;  // per split; data.seed is replaced by the scenario seed
  std::size_t positive_pairs = 5000;
  std::size_t negative_pairs = 5000;
  ScaleHeadConfig head;
  TrainConfig train;  // train.seed is replaced by the scenario seed
  double margin = 0.5;
};

/// Train / validation / test splits drawn around the same class directions.
struct VerificationData {
  SyntheticData train, val, test;
  UnitEmbeddings train_unit, val_unit, test_unit;
  PairSet val_pairs, test_pairs;
};

inline VerificationData make_verification_data(const VerificationSetup& setup, std::uint64_t seed) {
  SyntheticSpec spec = setup.data;
  spec.seed = seed;
  spec.validate();
  const Matrix dirs = synthetic_directions(spec.classes, spec.dim, seed);
  VerificationData v;
  v.train = sample_synthetic(spec, dirs, mix_seed(seed, 10));
  v.val = sample_synthetic(spec, dirs, mix_seed(seed, 11));
  v.test = sample_synthetic(spec, dirs, mix_seed(seed, 12));
  v.train_unit = normalize(v.train.set);
  v.val_unit = normalize(v.val.set);
  v.test_unit = normalize(v.test.set);
  v.val_pairs = make_pairs(v.val.set.labels, setup.positive_pairs, setup.negative_pairs, mix_seed(seed, 13));
  v.test_pairs =
      make_pairs(v.test.set.labels, setup.positive_pairs, setup.negative_pairs, mix_seed(seed, 14));
  return v;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::string far_tag(double far) {
  const int pct = static_cast<int>(std::lround(far * 100.0));
  return "far" + std::string(pct < 10 ? "0" : "") + std::to_string(pct);
}

}  // namespace detail

/// Rejection curves on cosine test scores for scale / norm / random / oracle
/// uncertainties, plus the rank correlation between predicted and generator
/// scales on the test split. Also reports the mu-shifted TAR comparison.
inline ExperimentReport exp_heteroscedastic_verification(std::uint64_t seed,
                                                         const VerificationSetup& setup = {}) {
  const auto t0 = detail::Clock::now();
  ExperimentReport rep{"heteroscedastic", seed, {}, 0.0};
  const VerificationData v = make_verification_data(setup, seed);

  TrainConfig tc = setup.train;
  tc.seed = seed;
  const TrainReport trained = train_head(v.train_unit, setup.head, setup.margin, tc);
  const std::vector<double> scales = head_forward(trained.head, v.test_unit.unit);
  rep.metrics["spearman_scale"] = spearman(scales, v.test.true_scales);
  rep.metrics["spearman_norm"] = spearman(v.test_unit.raw_norms, v.test.true_scales);
  rep.metrics["train_loss_first"] = trained.epoch_losses.front();
  rep.metrics["train_loss_last"] = trained.epoch_losses.back();

  const PairScores cos = cosine_pairs(v.test_unit, v.test_pairs);
  const std::vector<int> labels = v.test_pairs.labels();
  const auto u_scale = pair_uncertainty(scale_uncertainty(scales), v.test_pairs).values;
  const auto u_norm = pair_uncertainty(scale_uncertainty(v.test_unit.raw_norms), v.test_pairs).values;
  const auto u_random = random_confidence(v.test_pairs.size(), mix_seed(seed, 15));
  const auto grid = default_rejection_grid();

  for (double far : {0.01, 0.05}) {
    const std::string tag = detail::far_tag(far);
    const auto u_oracle = oracle_uncertainty(cos.scores, labels, far);
    const auto auc = [&](const std::vector<double>& u) {
      return reject_verification(cos.scores, labels, u, far, grid).auc_normalized;
    };
    rep.metrics["auc_scale_" + tag] = auc(u_scale);
    rep.metrics["auc_norm_" + tag] = auc(u_norm);
    rep.metrics["auc_random_" + tag] = auc(u_random);
    rep.metrics["auc_oracle_" + tag] = auc(u_oracle);
    rep.metrics["tar_r0_" + tag] = tar_at_far(cos.scores, labels, far).tar;
  }

  // mu-shifted similarity, mu calibrated on validation cosines.
  const PairScores val_cos = cosine_pairs(v.val_unit, v.val_pairs);
  const double mu = calibrate_mu(val_cos.scores, v.val_pairs.labels());
  const PairScores shifted = modified_similarity(v.test_unit, v.test_pairs, scales, mu);
  rep.metrics["mu"] = mu;
  rep.metrics["tar_cosine_far05"] = tar_at_far(cos.scores, labels, 0.05).tar;
  rep.metrics["tar_mu_scaled_far05"] = tar_at_far(shifted.scores, labels, 0.05).tar;

  rep.wall_clock_seconds = detail::seconds_since(t0);
  return rep;
}

/// TAR@FAR=0.05 of mu-shifted similarity against plain cosine.
inline ExperimentReport exp_mu_improvement(std::uint64_t seed, const VerificationSetup& setup = {}) {
  const auto t0 = detail::Clock::now();
  ExperimentReport rep{"mu_improvement", seed, {}, 0.0};
  const VerificationData v = make_verification_data(setup, seed);
  TrainConfig tc = setup.train;
  tc.seed = seed;
  const TrainReport trained = train_head(v.train_unit, setup.head, setup.margin, tc);
  const std::vector<double> scales = head_forward(trained.head, v.test_unit.unit);

  const PairScores val_cos = cosine_pairs(v.val_unit, v.val_pairs);
  const double mu = calibrate_mu(val_cos.scores, v.val_pairs.labels());
  const std::vector<int> labels = v.test_pairs.labels();
  const PairScores cos = cosine_pairs(v.test_unit, v.test_pairs);
  const PairScores shifted = modified_similarity(v.test_unit, v.test_pairs, scales, mu);
  rep.metrics["mu"] = mu;
  rep.metrics["tar_cosine_far05"] = tar_at_far(cos.scores, labels, 0.05).tar;
  rep.metrics["tar_mu_scaled_far05"] = tar_at_far(shifted.scores, labels, 0.05).tar;
  rep.wall_clock_seconds = detail::seconds_since(t0);
  return rep;
}

struct CrossViewSetup {
  std::size_t dim = 256;
  std::size_t classes = 20;
  std::size_t train_per_class = 50;
  std::size_t queries_per_class = 10;
  double sigma = 1.0;
  double s_min_a = 1.0, s_max_a = 20.0;
  double s_min_b = 1.0, s_max_b = 20.0;
  std::size_t calibration_pairs = 5000;  // per label
  ScaleHeadConfig head;
  TrainConfig train;
  double margin = 0.5;
};

/// Query-by-gallery retrieval scores; queries from view A, one gallery item
/// per class from view B.
struct CrossViewScores {
  Matrix cosine;
  Matrix mu_scaled;
  std::vector<std::size_t> relevant;
  double mu = 0.0;
};

namespace detail {

inline std::vector<double> head_scales(const TrainReport& r, const UnitEmbeddings& u) {
  return head_forward(r.head, u.unit);
}

}  // namespace detail

inline CrossViewScores crossview_scores(const CrossViewSetup& setup, std::uint64_t seed) {
  const Matrix dirs = synthetic_directions(setup.classes, setup.dim, seed);
  auto view_spec = [&](double lo, double hi, std::size_t per_class) {
    SyntheticSpec s;
    s.dim = setup.dim;
    s.classes = setup.classes;
    s.per_class = per_class;
    s.s_min = lo;
    s.s_max = hi;
    s.sigma = setup.sigma;
    s.seed = seed;
    s.validate();
    return s;
  };
  const auto spec_a = view_spec(setup.s_min_a, setup.s_max_a, setup.train_per_class);
  const auto spec_b = view_spec(setup.s_min_b, setup.s_max_b, setup.train_per_class);
  const UnitEmbeddings train_a = normalize(sample_synthetic(spec_a, dirs, mix_seed(seed, 20)).set);
  const UnitEmbeddings train_b = normalize(sample_synthetic(spec_b, dirs, mix_seed(seed, 21)).set);
  const UnitEmbeddings query =
      normalize(sample_synthetic(view_spec(setup.s_min_a, setup.s_max_a, setup.queries_per_class), dirs,
                                 mix_seed(seed, 22))
                    .set);
  const UnitEmbeddings gallery =
      normalize(sample_synthetic(view_spec(setup.s_min_b, setup.s_max_b, 1), dirs, mix_seed(seed, 23)).set);

  TrainConfig tc = setup.train;
  tc.seed = mix_seed(seed, 24);
  const TrainReport head_a = train_head(train_a, setup.head, setup.margin, tc);
  tc.seed = mix_seed(seed, 25);
  const TrainReport head_b = train_head(train_b, setup.head, setup.margin, tc);

  // mu from cross-view cosines of training pairs.
  std::vector<std::vector<std::size_t>> by_class(setup.classes);
  for (std::size_t i = 0; i < train_b.size(); ++i) by_class[train_b.labels[i]].push_back(i);
  Rng rng(mix_seed(seed, 26));
  std::vector<double> cal_scores;
  std::vector<int> cal_labels;
  for (std::size_t k = 0; k < 2 * setup.calibration_pairs; ++k) {
    const auto i = static_cast<std::size_t>(rng.index(train_a.size()));
    const Label y = train_a.labels[i];
    const bool positive = k % 2 == 0;
    Label other = y;
    if (!positive) {
      other = static_cast<Label>(rng.index(setup.classes - 1));
      if (other >= y) ++other;
    }
    const auto& pool = by_class[other];
    const std::size_t j = pool[static_cast<std::size_t>(rng.index(pool.size()))];
    cal_scores.push_back(dot(train_a.unit.row(i), train_b.unit.row(j)));
    cal_labels.push_back(positive ? 1 : 0);
  }

  CrossViewScores out;
  out.mu = calibrate_mu(cal_scores, cal_labels);
  const auto sq = detail::head_scales(head_a, query);
  const auto sg = detail::head_scales(head_b, gallery);
  out.cosine = Matrix(query.size(), gallery.size());
  out.mu_scaled = Matrix(query.size(), gallery.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    out.relevant.push_back(query.labels[q]);
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const double c = dot(query.unit.row(q), gallery.unit.row(g));
      out.cosine(q, g) = c;
      out.mu_scaled(q, g) = std::sqrt(sq[q] * sg[g]) * (c - out.mu);
    }
  }
  // Gallery rows follow label order i % C with one item per class.
  for (std::size_t g = 0; g < gallery.size(); ++g)
    require(gallery.labels[g] == g, "gallery must hold one item per class in label order");
  return out;
}

inline ExperimentReport exp_crossview_retrieval(std::uint64_t seed, const CrossViewSetup& setup = {}) {
  const auto t0 = detail::Clock::now();
  ExperimentReport rep{"crossview", seed, {}, 0.0};
  const CrossViewScores s = crossview_scores(setup, seed);
  const RetrievalEval cos = evaluate_retrieval(s.cosine, s.relevant);
  const RetrievalEval mu = evaluate_retrieval(s.mu_scaled, s.relevant);
  rep.metrics["mu"] = s.mu;
  rep.metrics["prre_auc_cosine"] = cos.all.auc;
  rep.metrics["prre_auc_mu_scaled"] = mu.all.auc;
  rep.metrics["prre_auc1_cosine"] = cos.top1.auc;
  rep.metrics["prre_auc1_mu_scaled"] = mu.top1.auc;
  rep.wall_clock_seconds = detail::seconds_since(t0);
  return rep;
}

}  // namespace scaleface
