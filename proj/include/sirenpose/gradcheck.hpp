#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sirenpose/autodiff.hpp"
#include "sirenpose/errors.hpp"
#include "sirenpose/tensor.hpp"

namespace sirenpose {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat index across all parameter tensors
  std::size_t num_params = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Builds a scalar expression on `tape` from parameter leaves.
using ScalarBuilder = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

namespace detail {

inline double evaluate_builder(const ScalarBuilder& f, const std::vector<Tensor>& params) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  return f(tape, leaves).value().item();
}

}  // namespace detail

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h`. `order` 2 uses (f(x+h) - f(x-h)) / 2h; order 4 uses the
/// five-point stencil, whose O(h^4) truncation error matters for omega0 = 30
/// stacks where third derivatives are large. Error per parameter is
/// |analytic - numeric| / max(1, |analytic|); the maximum is returned.
inline GradCheckResult finite_difference_check(const ScalarBuilder& f,
                                               std::vector<Tensor> params, double h,
                                               int order = 2) {
  if (!(h > 0.0)) throw ValidationError("finite difference step must be positive");
  if (order != 2 && order != 4) throw ValidationError("finite difference order must be 2 or 4");

  GradCheckResult result;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    ad::Var root = f(tape, leaves);
    if (!root.value().all_finite()) {
      throw NumericError("gradcheck: non-finite value at unperturbed parameters");
    }
    tape.backward(root);
    for (const auto& leaf : leaves) {
      for (double g : leaf.grad().values()) result.analytic.push_back(g);
    }
  }
  result.num_params = result.analytic.size();
  result.numeric.resize(result.num_params);

  std::size_t flat = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i, ++flat) {
      const double orig = params[t][i];
      auto probe = [&](double offset) {
        params[t][i] = orig + offset;
        const double v = detail::evaluate_builder(f, params);
        params[t][i] = orig;
        if (!std::isfinite(v)) {
          throw NumericError("gradcheck: non-finite value at probe " + std::to_string(flat));
        }
        return v;
      };
      double numeric = 0.0;
      if (order == 2) {
        numeric = (probe(h) - probe(-h)) / (2.0 * h);
      } else {
        numeric = (8.0 * (probe(h) - probe(-h)) - (probe(2.0 * h) - probe(-2.0 * h))) / (12.0 * h);
      }
      result.numeric[flat] = numeric;
      const double a = result.analytic[flat];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_index = flat;
      }
    }
  }
  return result;
}

}  // namespace sirenpose
