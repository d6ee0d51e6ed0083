#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "sirenpose/gradcheck.hpp"

namespace sp = sirenpose;
namespace ad = sirenpose::ad;
using sp::Tensor;

namespace {

// sin with a deliberately wrong backward rule (derivative scaled by 1.01).
ad::Var broken_sin(const ad::Var& a) {
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(a.value()[i]);
  ad::Tape& tape = a.tape();
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [&tape, ia](const Tensor& g, std::span<Tensor* const> pg) {
    const Tensor& x = tape.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += 1.01 * g[i] * std::cos(x[i]);
  });
}

}  // namespace

TEST(Gradcheck, QuadraticIsExact) {
  sp::ScalarBuilder f = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(ad::square(p[0])); };
  auto r = sp::finite_difference_check(f, {Tensor::vector({1.0, -2.0, 0.5})}, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_DOUBLE_EQ(r.analytic[1], -4.0);
}

TEST(Gradcheck, FourthOrderStencilBeatsSecondOrder) {
  sp::ScalarBuilder f = [](ad::Tape&, std::span<const ad::Var> p) {
    return ad::sum(ad::sin(ad::scale(p[0], 30.0)));
  };
  const std::vector<Tensor> x{Tensor::vector({0.3, -0.7})};
  auto r2 = sp::finite_difference_check(f, x, 1e-3, 2);
  auto r4 = sp::finite_difference_check(f, x, 1e-3, 4);
  EXPECT_LT(r4.max_rel_error, r2.max_rel_error / 100);
}

TEST(Gradcheck, DetectsCorruptedBackwardRule) {
  sp::ScalarBuilder f = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(broken_sin(p[0])); };
  auto r = sp::finite_difference_check(f, {Tensor::vector({0.1, 0.2, 1.0})}, 1e-6);
  EXPECT_GT(r.max_rel_error, 1e-3);
}

TEST(Gradcheck, RejectsBadStep) {
  sp::ScalarBuilder f = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum(p[0]); };
  EXPECT_THROW(sp::finite_difference_check(f, {Tensor::vector({1.0})}, 0.0), sp::ValidationError);
  EXPECT_THROW(sp::finite_difference_check(f, {Tensor::vector({1.0})}, 1e-6, 3), sp::ValidationError);
}

TEST(Gradcheck, NonFiniteProbeIsNumericError) {
  // value jumps to +inf just above x = 1
  sp::ScalarBuilder f = [](ad::Tape& tape, std::span<const ad::Var> p) {
    const double x = p[0].value().item();
    const double v = x > 1.0 ? std::numeric_limits<double>::infinity() : x;
    return ad::add(ad::scale(p[0], 0.0), tape.constant(Tensor::scalar(v)));
  };
  EXPECT_THROW(sp::finite_difference_check(f, {Tensor::scalar(1.0)}, 1e-3), sp::NumericError);
}
