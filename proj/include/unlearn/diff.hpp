#pragma once

#include "unlearn/core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace unlearn::diff {

enum class Mode { analytic, finite_difference };

struct Options {
  double fd_step = 1e-5;            // central-difference step on unit-scaled parameters
  int dense_hessian_max_dim = 2000;  // above this, only the HVP oracle is provided
};

/// Hard-constraint linearization at theta_bar.
struct ConstraintLin {
  double value = 0.0;
  Vector grad;
};

/// Derivatives of the weighted Lagrangian at (eta=1, theta_bar, lambda_bar).
struct DerivativeBundle {
  Vector grad_theta;                     // nabla_theta L
  std::optional<Matrix> hess_dense;      // nabla^2_theta L when materialized
  std::function<Vector(const Vector&)> hvp;  // v -> nabla^2_theta L * v
  double hvp_fd_step = 0.0;              // > 0 when hvp differentiates the gradient
  Matrix mixed_theta_eta;                // nabla^2_{theta eta_K} L, dim x |K|
  std::vector<ConstraintLin> hard_ineq;  // aligned with WeightedProblem::hard_inequalities()
  std::vector<ConstraintLin> hard_eq;

  int dim() const { return static_cast<int>(grad_theta.size()); }
};

/// Assembles the bundle either from the model family's registered
/// closed-form derivatives or from central differences of the Lagrangian.
/// Analytic mode throws if a required callback is missing.
DerivativeBundle lagrangian_derivatives(const WeightedProblem& wp, const KktPoint& kkt,
                                        Mode mode, const Options& opts = {});

/// nabla^2_theta L * v; exact when the Hessian is materialized.
Vector hessian_vector_product(const DerivativeBundle& bundle, const Vector& v);

struct FdCheckBlock {
  std::string name;
  double max_rel_diff = 0.0;
  double max_abs_diff = 0.0;
  bool pass = true;
};

struct FdCheckReport {
  std::vector<FdCheckBlock> blocks;
  bool all_pass = true;
};

/// Elementwise comparison per block (grad, hess, mixed). Entries whose
/// magnitude stays below 1e-8 on both sides are compared absolutely.
FdCheckReport finite_difference_check(const DerivativeBundle& analytic,
                                      const DerivativeBundle& numeric, double rtol);

// Central-difference helpers shared with the model-family test oracles.
Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h);
Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& x, double h);

}  // namespace unlearn::diff
