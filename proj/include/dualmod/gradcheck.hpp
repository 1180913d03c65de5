#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dualmod/tensor.hpp"

namespace dualmod {

struct GradCheckResult {
  bool pass = true;
  double max_rel_err = 0.0;  // over entries with magnitude >= small_mag
  double max_abs_err = 0.0;  // over entries below small_mag (absolute fallback)
  std::string worst;
  std::string failure;  // set when the check could not run (non-finite loss)
};

// Central-difference gradient oracle. `f` rebuilds the forward pass from the
// parameters' current values and returns the scalar loss; analytic gradients
// come from one recorded pass, numeric ones from (f(p+eps)-f(p-eps))/(2 eps)
// per entry. Entries whose analytic and numeric magnitudes are both below
// `small_mag` are compared absolutely against `abs_tol` instead.
inline GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::vector<Parameter> params,
                                         double eps = 1e-5, double rel_tol = 1e-4, double abs_tol = 1e-8,
                                         double small_mag = 1e-6) {
  GradCheckResult res;
  for (Parameter& p : params) p.zero_grad();

  Tensor loss = f();
  if (loss.size() != 1) throw ContractError("finite_diff_check: f must return a scalar");
  if (!std::isfinite(loss[0])) {
    res.pass = false;
    res.failure = "loss is not finite: " + std::to_string(loss[0]);
    return res;
  }
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter& p : params) analytic.push_back(p.grad());

  NoGradGuard ng;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& v = params[pi].value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double fp = f()[0];
      v[i] = saved - eps;
      const double fm = f()[0];
      v[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        res.pass = false;
        res.failure = "non-finite loss while perturbing " + params[pi].name();
        return res;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double mag = std::max(std::abs(a), std::abs(numeric));
      const double err = std::abs(a - numeric);
      bool bad;
      if (mag < small_mag) {
        res.max_abs_err = std::max(res.max_abs_err, err);
        bad = err > abs_tol;
      } else {
        const double rel = err / mag;
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          std::ostringstream os;
          os << params[pi].name() << "[" << i << "]: analytic=" << a << " numeric=" << numeric
             << " rel=" << rel;
          res.worst = os.str();
        }
        bad = rel > rel_tol;
      }
      if (bad) res.pass = false;
    }
  }
  return res;
}

}  // namespace dualmod
