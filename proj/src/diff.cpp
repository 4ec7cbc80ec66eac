#include "unlearn/diff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace unlearn::diff {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("diff: ") + what);
}

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw std::runtime_error(std::string("diff: non-finite ") + what);
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::runtime_error(std::string("diff: non-finite ") + what);
}

/// Gradient of a folded penalty block w.r.t. theta: phi' * grad for an
/// inequality, (phi'(h) - phi'(-h)) * grad for an equality pair.
struct PenaltyChain {
  double first = 0.0;   // d(penalty block)/d(constraint value)
  double second = 0.0;  // d^2(penalty block)/d(constraint value)^2
};

PenaltyChain ineq_chain(const PenaltyConfig& pen, double g) {
  return {penalty_deriv(pen, pen.c_g, g), penalty_deriv2(pen, pen.c_g, g)};
}

PenaltyChain eq_chain(const PenaltyConfig& pen, double h) {
  return {penalty_deriv(pen, pen.c_h, h) - penalty_deriv(pen, pen.c_h, -h),
          penalty_deriv2(pen, pen.c_h, h) + penalty_deriv2(pen, pen.c_h, -h)};
}

DerivativeBundle analytic_bundle(const WeightedProblem& wp, const KktPoint& kkt,
                                 const Options& opts) {
  const ConstrainedProgram& prog = wp.program();
  require(static_cast<bool>(prog.loss_grad), "model family lacks analytic loss gradients");
  require(static_cast<bool>(prog.loss_hess), "model family lacks analytic loss Hessians");

  const int dim = prog.dim_theta;
  const int n_removed = wp.removed_count();
  const Vector eta_k = Vector::Ones(n_removed);
  const Vector eta = wp.full_eta(eta_k);
  const Vector& theta = kkt.theta;

  DerivativeBundle b;
  b.grad_theta = Vector::Zero(dim);
  Matrix hess = Matrix::Zero(dim, dim);
  b.mixed_theta_eta = Matrix::Zero(dim, n_removed);

  for (int i = 0; i < prog.n_points; ++i) {
    b.grad_theta += eta[i] * prog.loss_grad(i, theta);
    hess += eta[i] * prog.loss_hess(i, theta);
  }
  for (int k = 0; k < n_removed; ++k) {
    b.mixed_theta_eta.col(k) = prog.loss_grad(wp.request().removed_indices[k], theta);
  }

  auto folded_terms = [&](const ConstraintFn& con, const PenaltyChain& chain) {
    const Vector g = con.grad ? con.grad(theta, eta)
                              : fd_gradient([&](const Vector& th) { return con.value(th, eta); },
                                            theta, opts.fd_step);
    b.grad_theta += chain.first * g;
    hess += chain.second * (g * g.transpose());
    if (con.hess) hess += chain.first * con.hess(theta, eta);
    for (int k = 0; k < n_removed; ++k) {
      const int pk = wp.request().removed_indices[k];
      if (!con.touches(pk)) continue;
      require(static_cast<bool>(con.value_deta) && static_cast<bool>(con.grad_deta),
              "folded constraint lacks analytic eta derivatives");
      const double dv = con.value_deta(theta, eta, k);
      b.mixed_theta_eta.col(k) += chain.second * dv * g + chain.first * con.grad_deta(theta, eta, k);
    }
  };

  for (int j : wp.folded_inequalities()) {
    const ConstraintFn& con = prog.inequalities[j];
    folded_terms(con, ineq_chain(wp.penalty(), con.value(theta, eta)));
  }
  for (int t : wp.folded_equalities()) {
    const ConstraintFn& con = prog.equalities[t];
    folded_terms(con, eq_chain(wp.penalty(), con.value(theta, eta)));
  }

  // Hard constraints: multiplier terms plus the linearizations the
  // auxiliary problem needs. Untouched constraints carry no eta_K
  // dependence, so they add nothing to the mixed block.
  auto hard_block = [&](const std::vector<int>& slots, const std::vector<ConstraintFn>& cons,
                        const Vector& lambda, std::vector<ConstraintLin>* out) {
    require(lambda.size() == static_cast<Eigen::Index>(slots.size()),
            "multiplier size does not match hard constraint count");
    for (int s = 0; s < static_cast<int>(slots.size()); ++s) {
      const ConstraintFn& con = cons[slots[s]];
      ConstraintLin lin;
      lin.value = con.value(theta, eta);
      lin.grad = con.grad ? con.grad(theta, eta)
                          : fd_gradient([&](const Vector& th) { return con.value(th, eta); },
                                        theta, opts.fd_step);
      b.grad_theta += lambda[s] * lin.grad;
      if (con.hess) hess += lambda[s] * con.hess(theta, eta);
      out->push_back(std::move(lin));
    }
  };
  hard_block(wp.hard_inequalities(), prog.inequalities, kkt.lambda_g, &b.hard_ineq);
  hard_block(wp.hard_equalities(), prog.equalities, kkt.lambda_h, &b.hard_eq);

  hess = 0.5 * (hess + hess.transpose());
  check_finite(b.grad_theta, "gradient");
  check_finite(hess, "Hessian");
  check_finite(b.mixed_theta_eta, "mixed partial");

  if (dim > opts.dense_hessian_max_dim) {
    // Large matrix-free models (the PINN family) assemble their own
    // bundles with a gradient-based HVP oracle.
    throw std::invalid_argument(
        "diff: generic analytic path materializes the Hessian and requires "
        "dim(theta) <= dense_hessian_max_dim");
  }
  b.hess_dense = hess;
  Matrix h = hess;
  b.hvp = [h](const Vector& v) { return Vector(h * v); };
  return b;
}

/// Analytic gradient of the Lagrangian at an arbitrary (theta, eta_K)
/// point, used by the finite-difference mode as the inner function for
/// second-derivative differencing. Falls back to nullopt when the model
/// family has no registered gradients.
std::optional<Vector> gradient_via_callbacks(const WeightedProblem& wp, const KktPoint& kkt,
                                             const Vector& theta, const Vector& eta_k,
                                             const Options& opts) {
  const ConstrainedProgram& prog = wp.program();
  if (!prog.loss_grad) return std::nullopt;
  const Vector eta = wp.full_eta(eta_k);
  Vector grad = Vector::Zero(prog.dim_theta);
  for (int i = 0; i < prog.n_points; ++i) grad += eta[i] * prog.loss_grad(i, theta);
  auto con_grad = [&](const ConstraintFn& con) {
    return con.grad ? con.grad(theta, eta)
                    : fd_gradient([&](const Vector& th) { return con.value(th, eta); }, theta,
                                  opts.fd_step);
  };
  for (int j : wp.folded_inequalities()) {
    const ConstraintFn& con = prog.inequalities[j];
    grad += ineq_chain(wp.penalty(), con.value(theta, eta)).first * con_grad(con);
  }
  for (int t : wp.folded_equalities()) {
    const ConstraintFn& con = prog.equalities[t];
    grad += eq_chain(wp.penalty(), con.value(theta, eta)).first * con_grad(con);
  }
  for (int s = 0; s < static_cast<int>(wp.hard_inequalities().size()); ++s) {
    grad += kkt.lambda_g[s] * con_grad(prog.inequalities[wp.hard_inequalities()[s]]);
  }
  for (int s = 0; s < static_cast<int>(wp.hard_equalities().size()); ++s) {
    grad += kkt.lambda_h[s] * con_grad(prog.equalities[wp.hard_equalities()[s]]);
  }
  return grad;
}

DerivativeBundle fd_bundle(const WeightedProblem& wp, const KktPoint& kkt, const Options& opts) {
  const int dim = wp.dim_theta();
  const int n_removed = wp.removed_count();
  const double h = opts.fd_step;
  const Vector ones = Vector::Ones(n_removed);
  const Vector& theta = kkt.theta;

  auto lag_at = [&](const Vector& th, const Vector& ek) {
    return wp.lagrangian(ek, th, kkt.lambda_g, kkt.lambda_h);
  };
  auto lag_theta = [&](const Vector& th) { return lag_at(th, ones); };

  DerivativeBundle b;
  // The gradient always comes from objective values; second derivatives
  // difference the registered gradient when one exists (value-based
  // second differences carry an eps/h^2 noise floor).
  b.grad_theta = fd_gradient(lag_theta, theta, h);
  const bool have_grad = static_cast<bool>(wp.program().loss_grad);

  Matrix hess(dim, dim);
  b.mixed_theta_eta = Matrix::Zero(dim, n_removed);
  if (have_grad) {
    for (int i = 0; i < dim; ++i) {
      Vector tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      hess.col(i) = (*gradient_via_callbacks(wp, kkt, tp, ones, opts) -
                     *gradient_via_callbacks(wp, kkt, tm, ones, opts)) /
                    (2.0 * h);
    }
    for (int k = 0; k < n_removed; ++k) {
      Vector ep = ones, em = ones;
      ep[k] += h;
      em[k] -= h;
      b.mixed_theta_eta.col(k) = (*gradient_via_callbacks(wp, kkt, theta, ep, opts) -
                                  *gradient_via_callbacks(wp, kkt, theta, em, opts)) /
                                 (2.0 * h);
    }
  } else {
    hess = fd_hessian(lag_theta, theta, h);
    for (int k = 0; k < n_removed; ++k) {
      for (int i = 0; i < dim; ++i) {
        Vector tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        Vector ep = ones, em = ones;
        ep[k] += h;
        em[k] -= h;
        b.mixed_theta_eta(i, k) =
            (lag_at(tp, ep) - lag_at(tp, em) - lag_at(tm, ep) + lag_at(tm, em)) /
            (4.0 * h * h);
      }
    }
  }
  hess = 0.5 * (hess + hess.transpose());

  const ConstrainedProgram& prog = wp.program();
  const Vector eta = wp.full_eta(ones);
  auto hard_block = [&](const std::vector<int>& slots, const std::vector<ConstraintFn>& cons,
                        std::vector<ConstraintLin>* out) {
    for (int slot : slots) {
      const ConstraintFn& con = cons[slot];
      ConstraintLin lin;
      lin.value = con.value(theta, eta);
      lin.grad = fd_gradient([&](const Vector& th) { return con.value(th, eta); }, theta, h);
      out->push_back(std::move(lin));
    }
  };
  hard_block(wp.hard_inequalities(), prog.inequalities, &b.hard_ineq);
  hard_block(wp.hard_equalities(), prog.equalities, &b.hard_eq);

  check_finite(b.grad_theta, "gradient");
  check_finite(hess, "Hessian");
  check_finite(b.mixed_theta_eta, "mixed partial");

  b.hess_dense = hess;
  b.hvp = [hess](const Vector& v) { return Vector(hess * v); };
  b.hvp_fd_step = h;
  return b;
}

}  // namespace

DerivativeBundle lagrangian_derivatives(const WeightedProblem& wp, const KktPoint& kkt,
                                        Mode mode, const Options& opts) {
  require(kkt.theta.size() == wp.dim_theta(), "theta dimension mismatch");
  switch (mode) {
    case Mode::analytic: return analytic_bundle(wp, kkt, opts);
    case Mode::finite_difference: return fd_bundle(wp, kkt, opts);
  }
  throw std::invalid_argument("diff: unknown mode");
}

Vector hessian_vector_product(const DerivativeBundle& bundle, const Vector& v) {
  if (v.size() != bundle.dim()) {
    throw std::invalid_argument("hessian_vector_product: dimension mismatch");
  }
  if (bundle.hess_dense) return *bundle.hess_dense * v;
  if (!bundle.hvp) throw std::invalid_argument("hessian_vector_product: no HVP oracle");
  return bundle.hvp(v);
}

namespace {

void compare_block(const char* name, const Vector& a, const Vector& n, double rtol,
                   FdCheckReport* report) {
  FdCheckBlock block;
  block.name = name;
  if (a.size() != n.size()) {
    block.pass = false;
    block.max_rel_diff = block.max_abs_diff = std::numeric_limits<double>::infinity();
  } else {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double diff = std::abs(a[i] - n[i]);
      const double mag = std::max(std::abs(a[i]), std::abs(n[i]));
      block.max_abs_diff = std::max(block.max_abs_diff, diff);
      // Entries below 1e-8 compare absolutely; disagreements below 1e-8
      // never fail (that is the noise floor of the differencing oracle).
      double effective = 0.0;
      if (diff > 1e-8) effective = mag < 1e-8 ? diff : diff / mag;
      block.max_rel_diff = std::max(block.max_rel_diff, effective);
      if (effective > rtol) block.pass = false;
    }
  }
  report->all_pass = report->all_pass && block.pass;
  report->blocks.push_back(std::move(block));
}

Vector flatten(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

}  // namespace

FdCheckReport finite_difference_check(const DerivativeBundle& analytic,
                                      const DerivativeBundle& numeric, double rtol) {
  FdCheckReport report;
  compare_block("grad", analytic.grad_theta, numeric.grad_theta, rtol, &report);
  if (analytic.hess_dense && numeric.hess_dense) {
    compare_block("hess", flatten(*analytic.hess_dense), flatten(*numeric.hess_dense), rtol,
                  &report);
  }
  compare_block("mixed", flatten(analytic.mixed_theta_eta), flatten(numeric.mixed_theta_eta),
                rtol, &report);
  return report;
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  const Eigen::Index n = x.size();
  Matrix hess(n, n);
  Vector xx = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      xx[i] += h;
      xx[j] += h;
      const double fpp = f(xx);
      xx[j] -= 2.0 * h;
      const double fpm = f(xx);
      xx[i] -= 2.0 * h;
      const double fmm = f(xx);
      xx[j] += 2.0 * h;
      const double fmp = f(xx);
      xx[i] = x[i];
      xx[j] = x[j];
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  return hess;
}

}  // namespace unlearn::diff
