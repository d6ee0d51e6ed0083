#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "sirenpose/gradcheck.hpp"
#include "sirenpose/losses.hpp"

namespace sp = sirenpose;
namespace ad = sirenpose::ad;
using sp::Tensor;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = u(rng);
  return t;
}

// chain 0-1-2-3
sp::SkeletonGraph chain4() { return {4, {{0, 1}, {1, 2}, {2, 3}}, {0.3, 0.3, 0.3}}; }

// Direct double loop over batch, edges and axes.
double geo_reference(const Tensor& pred, const Tensor& gt, const sp::SkeletonGraph& g, double w,
                     const Tensor& mask) {
  double s = 0.0;
  for (std::size_t b = 0; b < pred.rows(); ++b) {
    for (const auto& e : g.edges) {
      if (mask.at(b, e.i) == 0.0 || mask.at(b, e.j) == 0.0) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = std::sin(w * (pred.at(b, 3 * e.i + c) - pred.at(b, 3 * e.j + c))) -
                         std::sin(w * (gt.at(b, 3 * e.i + c) - gt.at(b, 3 * e.j + c)));
        s += d * d;
      }
    }
  }
  return s;
}

double geo_value(const Tensor& pred, const Tensor& gt, const sp::SkeletonGraph& g, double w,
                 const Tensor& mask) {
  ad::Tape tape;
  return sp::loss_geo(tape.leaf(pred), gt, g, w, mask).value().item();
}

}  // namespace

TEST(LossPos, HandExample) {
  ad::Tape tape;
  auto pred = tape.leaf(Tensor::matrix({{1, 2, 3, 0, 0, 1}}));
  Tensor gt = Tensor::matrix({{0, 0, 0, 0, 0, 0}});
  EXPECT_DOUBLE_EQ(sp::loss_pos(pred, gt, sp::all_visible(1, 2)).value().item(), 15.0);
  EXPECT_DOUBLE_EQ(sp::loss_pos(pred, gt, Tensor::matrix({{0, 1}})).value().item(), 1.0);
}

TEST(LossGeo, HandExampleAndReference) {
  sp::SkeletonGraph g{2, {{0, 1}}, {1.0}};
  Tensor pred = Tensor::matrix({{0.1, 0.2, 0.0, 0.0, 0.0, 0.0}});
  Tensor gt({1, 6}, 0.0);
  const double expect = std::pow(std::sin(3.0), 2) + std::pow(std::sin(6.0), 2);
  EXPECT_NEAR(geo_value(pred, gt, g, 30.0, sp::all_visible(1, 2)), expect, 1e-14);

  const auto g4 = chain4();
  Tensor p = random_matrix(5, 12, 1), q = random_matrix(5, 12, 2);
  Tensor mask = sp::all_visible(5, 4);
  mask.at(2, 1) = 0.0;
  mask.at(4, 3) = 0.0;
  EXPECT_NEAR(geo_value(p, q, g4, 30.0, mask), geo_reference(p, q, g4, 30.0, mask), 1e-12);
}

TEST(LossGeo, InvariantToGlobalTranslation) {
  const auto g = chain4();
  Tensor p = random_matrix(8, 12, 3), q = random_matrix(8, 12, 4);
  const auto mask = sp::all_visible(8, 4);
  const double base = geo_value(p, q, g, 30.0, mask);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor shifted = p;
    for (std::size_t b = 0; b < 8; ++b) {
      const double t[3] = {u(rng), u(rng), u(rng)};
      for (std::size_t k = 0; k < 12; ++k) shifted.at(b, k) += t[k % 3];
    }
    EXPECT_NEAR(geo_value(shifted, q, g, 30.0, mask), base, 1e-12);
  }
}

TEST(LossGeo, PeriodicInRelativeOffset) {
  // Moving keypoint 3 (a leaf) shifts only edge (2, 3).
  const auto g = chain4();
  const double w = 30.0;
  Tensor p = random_matrix(3, 12, 6), q = random_matrix(3, 12, 7);
  const auto mask = sp::all_visible(3, 4);
  const double base = geo_value(p, q, g, w, mask);
  for (std::size_t c = 0; c < 3; ++c) {
    Tensor moved = p;
    for (std::size_t b = 0; b < 3; ++b) moved.at(b, 9 + c) += 2.0 * std::numbers::pi / w;
    EXPECT_NEAR(geo_value(moved, q, g, w, mask), base, 1e-10);
    for (std::size_t b = 0; b < 3; ++b) moved.at(b, 9 + c) += 0.5 * std::numbers::pi / w;
    EXPECT_GT(std::abs(geo_value(moved, q, g, w, mask) - base), 1e-3);
  }
}

TEST(LossGeo, NoEdgesGivesZero) {
  sp::SkeletonGraph g{1, {}, {}};
  Tensor p = random_matrix(2, 3, 8);
  EXPECT_EQ(geo_value(p, Tensor({2, 3}, 0.0), g, 30.0, sp::all_visible(2, 1)), 0.0);
}

TEST(LossGeo, GradientMatchesFiniteDifferences) {
  const auto g = chain4();
  const Tensor gt = random_matrix(3, 12, 9, 0.1);
  Tensor mask = sp::all_visible(3, 4);
  mask.at(1, 2) = 0.0;
  sp::ScalarBuilder f = [&](ad::Tape&, std::span<const ad::Var> p) {
    return sp::loss_geo(p[0], gt, g, 30.0, mask);
  };
  auto r = sp::finite_difference_check(f, {random_matrix(3, 12, 10, 0.1)}, 1e-6, 4);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(LossSirenPose, ZeroLambdaReducesToPositionLoss) {
  const auto g = chain4();
  const Tensor p = random_matrix(4, 12, 11), q = random_matrix(4, 12, 12);
  const auto mask = sp::all_visible(4, 4);
  sp::LossWeights w;
  w.lambda_geo = 0.0;
  ad::Tape t1, t2;
  auto v1 = t1.leaf(p), v2 = t2.leaf(p);
  auto total = sp::loss_sirenpose(v1, q, g, w, mask).total;
  auto pos = sp::loss_pos(v2, q, mask);
  EXPECT_EQ(total.value().item(), pos.value().item());
  t1.backward(total);
  t2.backward(pos);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(v1.grad()[i], v2.grad()[i]);
}

TEST(LossSirenPose, HiddenKeypointGetsNoGradient) {
  const auto g = chain4();
  const Tensor p = random_matrix(4, 12, 13), q = random_matrix(4, 12, 14);
  Tensor mask = sp::all_visible(4, 4);
  for (std::size_t b = 0; b < 4; ++b) mask.at(b, 2) = 0.0;
  ad::Tape tape;
  auto v = tape.leaf(p);
  tape.backward(sp::loss_sirenpose(v, q, g, sp::LossWeights{}, mask).total);
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(v.grad().at(b, 6 + c), 0.0);
      EXPECT_NE(v.grad().at(b, 0 + c), 0.0);
    }
  }
}

TEST(LossSirenPose, AutomaticGeoScale) {
  sp::LossWeights w;
  sp::SkeletonGraph g{3, {{0, 1}, {1, 2}}, {0.5, 0.8}};
  EXPECT_DOUBLE_EQ(sp::geo_scale_for(w, g), std::numbers::pi / (2.0 * 30.0 * 0.8));
  w.geo_scale = 2.5;
  EXPECT_EQ(sp::geo_scale_for(w, g), 2.5);
  EXPECT_EQ(sp::geo_scale_for(sp::LossWeights{}, sp::SkeletonGraph{1, {}, {}}), 1.0);
}

TEST(LossSirenPose, ScaledGeoEqualsRawGeoOnScaledCoordinates) {
  const auto g = chain4();
  const Tensor p = random_matrix(4, 12, 15), q = random_matrix(4, 12, 16);
  const auto mask = sp::all_visible(4, 4);
  sp::LossWeights w;
  const double k = sp::geo_scale_for(w, g);
  Tensor ps = p, qs = q;
  for (double& v : ps.values()) v *= k;
  for (double& v : qs.values()) v *= k;
  ad::Tape tape;
  sp::LossBreakdown br;
  sp::loss_sirenpose(tape.leaf(p), q, g, w, mask, &br);
  EXPECT_NEAR(br.l_geo, geo_reference(ps, qs, g, 30.0, mask), 1e-12);
  EXPECT_NEAR(br.l_sirenpose, br.l_pos + w.lambda_geo * br.l_geo, 1e-12);
}

TEST(LossTotal, WeightedSumOfTerms) {
  const auto g = chain4();
  const Tensor p = random_matrix(6, 12, 17), q = random_matrix(6, 12, 18);
  const Tensor fs = random_matrix(6, 5, 19), ft = random_matrix(6, 5, 20);
  const auto mask = sp::all_visible(6, 4);
  for (double lsp : {0.0, 0.5, 3.0}) {
    for (double lgeo : {0.0, 0.1, 2.0}) {
      sp::LossWeights w;
      w.lambda_sp = lsp;
      w.lambda_geo = lgeo;
      w.geo_scale = 1.0;
      ad::Tape tape;
      sp::LossBreakdown br;
      auto sirenpose = sp::loss_sirenpose(tape.leaf(p), q, g, w, mask, &br);
      auto recon = sp::loss_recon(tape.leaf(fs), ft);
      const double total = sp::loss_total(recon, sirenpose.total, w, &br).value().item();
      double pos = 0.0, rec = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) pos += (p[i] - q[i]) * (p[i] - q[i]);
      for (std::size_t i = 0; i < fs.size(); ++i) rec += (fs[i] - ft[i]) * (fs[i] - ft[i]);
      const double geo = geo_reference(p, q, g, 30.0, mask);
      EXPECT_NEAR(total, rec + lsp * (pos + lgeo * geo), 1e-10);
      EXPECT_NEAR(br.l_total, total, 0.0);
      EXPECT_NEAR(br.l_recon, rec, 1e-12);
    }
  }
}

TEST(Losses, ShapeAndWeightValidation) {
  const auto g = chain4();
  ad::Tape tape;
  auto p = tape.leaf(Tensor({2, 12}));
  EXPECT_THROW(sp::loss_pos(p, Tensor({2, 9}), sp::all_visible(2, 4)), sp::ValidationError);
  EXPECT_THROW(sp::loss_pos(p, Tensor({2, 12}), sp::all_visible(2, 3)), sp::ValidationError);
  EXPECT_THROW(sp::loss_geo(p, Tensor({2, 12}), sp::SkeletonGraph{4, {{0, 4}}, {1.0}}, 30.0,
                            sp::all_visible(2, 4)),
               sp::ValidationError);
  EXPECT_THROW(sp::loss_recon(p, Tensor({2, 11})), sp::ValidationError);
  sp::LossWeights w;
  w.lambda_geo = -1.0;
  EXPECT_THROW(w.validate(), sp::ValidationError);
  w = {};
  w.omega0_loss = 0.0;
  EXPECT_THROW(w.validate(), sp::ValidationError);
  w = {};
  w.geo_scale = std::nan("");
  EXPECT_THROW(w.validate(), sp::ValidationError);
}

TEST(Losses, FrameMatrices) {
  std::vector<sp::KeypointFrame> frames(2);
  frames[0] = {0.0, {{1, 2, 3}, {4, 5, 6}}, {true, false}};
  frames[1] = {0.1, {{7, 8, 9}, {10, 11, 12}}, {true, true}};
  const Tensor k = sp::keypoint_matrix(frames);
  EXPECT_EQ(k.at(1, 4), 11.0);
  const Tensor v = sp::visibility_matrix(frames);
  EXPECT_EQ(v.at(0, 1), 0.0);
  EXPECT_EQ(v.at(1, 1), 1.0);
}
