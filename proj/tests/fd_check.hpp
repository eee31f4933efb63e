#pragma once

// Central finite-difference gradient checking used across the test suites.
// The analytic path runs once through the tape; the numeric path re-evaluates
// the same builder on perturbed constant inputs.

#include <cmath>
#include <functional>
#include <vector>

#include "cgrl/core/autodiff.hpp"

namespace cgrl_test {

struct FdReport {
  double max_rel = 0.0;   // worst relative error over all checked components
  double max_abs = 0.0;   // worst absolute error
  bool ok = true;
  std::size_t checked = 0;
};

using LossBuilder = std::function<cgrl::Var(cgrl::Tape&, const std::vector<cgrl::Var>&)>;

inline double eval_loss(const LossBuilder& build, const std::vector<cgrl::Tensor>& inputs) {
  cgrl::Tape tape;
  std::vector<cgrl::Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, false));
  return build(tape, vars).val().value();
}

/// Compares analytic gradients of `build` against central differences for
/// every element of every input. A component passes when the relative error
/// is below `rel_tol` or the absolute error is below `abs_tol`.
inline FdReport fd_check(const LossBuilder& build, const std::vector<cgrl::Tensor>& inputs,
                         double rel_tol = 1e-4, double h = 1e-5, double abs_tol = 1e-8) {
  std::vector<cgrl::Tensor> analytic;
  {
    cgrl::Tape tape;
    std::vector<cgrl::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    cgrl::Var loss = build(tape, vars);
    auto grads = tape.backward(loss);
    for (const auto& v : vars) {
      const cgrl::Tensor& g = grads[v.id];
      analytic.push_back(g.size() ? g : cgrl::Tensor(v.val().shape()));
    }
  }

  FdReport report;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    for (std::size_t idx = 0; idx < inputs[which].size(); ++idx) {
      std::vector<cgrl::Tensor> plus = inputs, minus = inputs;
      plus[which][idx] += h;
      minus[which][idx] -= h;
      const double fd = (eval_loss(build, plus) - eval_loss(build, minus)) / (2.0 * h);
      const double an = analytic[which][idx];
      const double abs_err = std::fabs(an - fd);
      const double rel = abs_err / std::max(std::fabs(an), std::fabs(fd));
      report.max_abs = std::max(report.max_abs, abs_err);
      if (abs_err > abs_tol) {
        report.max_rel = std::max(report.max_rel, rel);
        if (rel > rel_tol) report.ok = false;
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace cgrl_test
