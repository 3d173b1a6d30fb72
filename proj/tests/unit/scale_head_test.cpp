#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "scaleface/evaluation.hpp"
#include "scaleface/scale_head.hpp"
#include "support.hpp"

using namespace scaleface;
using scaleface::fixture::unit_matrix;

namespace {

ScaleHead zero_head(ScaleActivation act) {
  ScaleHeadConfig hc;
  hc.hidden_layers = 2;
  hc.hidden_width = 8;
  hc.activation = act;
  ScaleHead head = make_scale_head(hc, 6, 1);
  head.net.set_flat_parameters(std::vector<double>(head.net.parameter_count(), 0.0));
  return head;
}

UnitEmbeddings synthetic_unit(double sigma, std::uint64_t seed, std::size_t per_class = 200) {
  SyntheticSpec spec;
  spec.sigma = sigma;
  spec.per_class = per_class;
  spec.seed = seed;
  return normalize(generate_synthetic(spec).set);
}

}  // namespace

TEST(ScaleHead, ZeroNetActivationValues) {
  Rng rng(1);
  const Matrix x = unit_matrix(4, 6, rng);
  for (double s : head_forward(zero_head(ScaleActivation::sigm(64.0)), x)) EXPECT_EQ(s, 32.0);
  for (double s : head_forward(zero_head(ScaleActivation::exponential()), x)) EXPECT_EQ(s, 1.0);
  for (double s : head_forward(zero_head(ScaleActivation::shifted_sigm(32.0, 64.0)), x)) EXPECT_EQ(s, 48.0);
}

TEST(ScaleActivation, DerivativesMatchCentralDifferences) {
  for (const auto& act : {ScaleActivation::exponential(), ScaleActivation::sigm(32.0),
                          ScaleActivation::shifted_sigm(1.0, 16.0), ScaleActivation::relu(8.0)}) {
    for (double a : {-3.0, -0.7, 0.4, 2.5}) {
      const double h = 1e-6;
      EXPECT_NEAR(act.derivative(a), (act(a + h) - act(a - h)) / (2 * h), 1e-5 * std::max(1.0, act(a)))
          << act.name() << " at " << a;
    }
  }
}

TEST(ScaleActivation, SigmoidIsStableForLargeInputs) {
  const auto act = ScaleActivation::sigm(64.0);
  EXPECT_EQ(act(-1000.0), 0.0);
  EXPECT_EQ(act(1000.0), 64.0);
  EXPECT_EQ(act.derivative(1000.0), 0.0);
}

TEST(ScaleActivation, ParseAndName) {
  for (const std::string text : {"exp", "sigm:64", "shifted_sigm:32:64", "relu:8"})
    EXPECT_EQ(ScaleActivation::parse(text).name(), text);
  EXPECT_THROW(ScaleActivation::parse("sigm"), Error);
  EXPECT_THROW(ScaleActivation::parse("sigm:-1"), Error);
  EXPECT_THROW(ScaleActivation::parse("shifted_sigm:5:2"), Error);
  EXPECT_THROW(ScaleActivation::parse("tanh:1"), Error);
  EXPECT_THROW(ScaleActivation::parse("relu:8x"), Error);
}

TEST(ScaleHeadConfig, DepthOutsideRangeRejected) {
  ScaleHeadConfig hc;
  hc.hidden_layers = 5;
  EXPECT_THROW(make_scale_head(hc, 4, 0), Error);
  hc.hidden_layers = 0;
  EXPECT_THROW(make_scale_head(hc, 4, 0), Error);
}

TEST(TrainHead, ZeroEpochsIsANoOp) {
  const UnitEmbeddings u = synthetic_unit(1.0, 2, 10);
  ScaleHeadConfig hc;
  hc.hidden_width = 16;
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 3;
  const TrainReport r = train_head(u, hc, 0.5, tc);
  EXPECT_TRUE(r.epoch_losses.empty());
  EXPECT_EQ(r.head, make_scale_head(hc, u.dim(), mix_seed(3, 4)));
  EXPECT_EQ(r.centroids.centroids, init_centroids(u).centroids);
}

TEST(TrainHead, SeparableDataLossDescends) {
  const UnitEmbeddings u = synthetic_unit(0.1, 4);
  ScaleHeadConfig hc;
  hc.hidden_width = 32;
  TrainConfig tc;
  tc.epochs = 5;
  const TrainReport r = train_head(u, hc, 0.5, tc);
  ASSERT_EQ(r.epoch_losses.size(), 5u);
  EXPECT_LT(r.epoch_losses[4], r.epoch_losses[0]);
}

TEST(TrainHead, DeterministicPerSeed) {
  const UnitEmbeddings u = synthetic_unit(1.0, 5, 30);
  ScaleHeadConfig hc;
  hc.hidden_width = 16;
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 8;
  EXPECT_EQ(train_head(u, hc, 0.5, tc), train_head(u, hc, 0.5, tc));
}

TEST(TrainHead, FrozenCentroidsStayPut) {
  const UnitEmbeddings u = synthetic_unit(1.0, 6, 30);
  ScaleHeadConfig hc;
  hc.hidden_width = 16;
  TrainConfig tc;
  tc.epochs = 2;
  tc.freeze_centroids = true;
  const TrainReport r = train_head(u, hc, 0.5, tc);
  EXPECT_EQ(r.centroids.centroids, init_centroids(u).centroids);
  EXPECT_TRUE(r.centroids.frozen);
}

TEST(TrainHead, CentroidsStayUnitNorm) {
  const UnitEmbeddings u = synthetic_unit(1.0, 7, 30);
  ScaleHeadConfig hc;
  hc.hidden_width = 16;
  TrainConfig tc;
  tc.epochs = 2;
  const TrainReport r = train_head(u, hc, 0.5, tc);
  for (std::size_t j = 0; j < r.centroids.classes(); ++j)
    EXPECT_NEAR(l2_norm(r.centroids.centroids.row(j)), 1.0, 1e-12);
}

TEST(PredictScales, ConstantHeadTiesKeepIndexOrder) {
  Rng rng(9);
  const ScalePrediction p = predict_scales(zero_head(ScaleActivation::sigm(64.0)), unit_matrix(5, 6, rng));
  EXPECT_EQ(p.ranking, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(PredictScales, MonotoneReactivationKeepsRanking) {
  Rng rng(10);
  ScaleHeadConfig hc;
  hc.hidden_width = 8;
  hc.activation = ScaleActivation::sigm(32.0);
  ScaleHead head = make_scale_head(hc, 6, 11);
  const Matrix x = unit_matrix(40, 6, rng);
  const auto before = predict_scales(head, x).ranking;
  head.activation = ScaleActivation::sigm(64.0);
  EXPECT_EQ(predict_scales(head, x).ranking, before);
}

TEST(PredictScales, TrainedHeadTracksGeneratorScale) {
  SyntheticSpec spec;
  spec.seed = 12;
  const Matrix dirs = synthetic_directions(spec.classes, spec.dim, spec.seed);
  const SyntheticData train = sample_synthetic(spec, dirs, 1);
  const SyntheticData test = sample_synthetic(spec, dirs, 2);
  ScaleHeadConfig hc;
  TrainConfig tc;
  tc.seed = 12;
  const TrainReport r = train_head(normalize(train.set), hc, 0.5, tc);
  const auto scales = head_forward(r.head, normalize(test.set).unit);
  EXPECT_GE(spearman(scales, test.true_scales), 0.5);
}

TEST(HeadIo, RoundTripIsExact) {
  ScaleHeadConfig hc;
  hc.hidden_layers = 3;
  hc.hidden_width = 5;
  hc.activation = ScaleActivation::shifted_sigm(1.0, 16.0);
  const ScaleHead head = make_scale_head(hc, 7, 13);
  std::stringstream ss;
  write_head(ss, head);
  const std::string bytes = ss.str();
  const ScaleHead back = read_head(ss);
  EXPECT_EQ(back, head);
  std::stringstream again;
  write_head(again, back);
  EXPECT_EQ(again.str(), bytes);
}

TEST(HeadIo, FormatErrors) {
  const ScaleHead head = make_scale_head({}, 4, 0);
  std::stringstream ss;
  write_head(ss, head);
  const std::string good = ss.str();
  auto kind = [](const std::string& bytes) {
    std::istringstream is(bytes);
    try {
      read_head(is);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::numeric;
  };
  EXPECT_EQ(kind("SFH2" + good.substr(4)), ErrorKind::format);
  EXPECT_EQ(kind(good.substr(0, good.size() - 1)), ErrorKind::format);
  EXPECT_EQ(kind(good + "x"), ErrorKind::format);
  std::string bad_family = good;
  bad_family[16] = 9;
  EXPECT_EQ(kind(bad_family), ErrorKind::format);
}
