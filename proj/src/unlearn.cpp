#include "unlearn/unlearn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unlearn {

namespace {

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

bool IndexPartition::is_weakly_active(int slot) const { return contains(weakly_active, slot); }
bool IndexPartition::is_inactive(int slot) const { return contains(inactive, slot); }

const char* to_string(UnlearnMethod m) {
  switch (m) {
    case UnlearnMethod::aux_qp: return "aux_qp";
    case UnlearnMethod::influence: return "influence";
    case UnlearnMethod::matrix_free: return "matrix_free";
  }
  return "unknown";
}

IndexPartition classify_index_sets(const KktPoint& kkt, const WeightedProblem& wp,
                                   double eps_act) {
  IndexPartition part;
  part.activity_tol = eps_act;
  const Vector ones = Vector::Ones(wp.removed_count());
  const int n = static_cast<int>(wp.hard_inequalities().size());
  if (kkt.lambda_g.size() != n) {
    throw std::invalid_argument("classify_index_sets: lambda_g size mismatch");
  }
  for (int s = 0; s < n; ++s) {
    const double g = wp.hard_inequality_value(s, ones, kkt.theta);
    const double lam = kkt.lambda_g[s];
    if (std::abs(g) <= eps_act) {
      part.active.push_back(s);
      if (lam <= eps_act) part.weakly_active.push_back(s);
    } else if (g < -eps_act) {
      part.inactive.push_back(s);
      if (lam > eps_act) {
        part.warnings.push_back("complementarity violated at hard inequality slot " +
                                std::to_string(s) + " (g=" + std::to_string(g) +
                                ", lambda=" + std::to_string(lam) + ")");
      }
    } else {
      // g > eps_act: the trained point is infeasible here; treat as active
      // and report the inconsistency.
      part.active.push_back(s);
      part.warnings.push_back("hard inequality slot " + std::to_string(s) +
                              " violated at theta_bar (g=" + std::to_string(g) + ")");
    }
  }
  return part;
}

qp::AuxiliaryQp assemble_auxiliary(const diff::DerivativeBundle& bundle,
                                   const IndexPartition& part, const RemovalRequest& req,
                                   const UnlearnOptions& opts,
                                   std::vector<std::string>* warnings, double* carryover) {
  if (!bundle.hess_dense) {
    throw std::invalid_argument("assemble_auxiliary: dense Hessian required for the QP path");
  }
  if (bundle.mixed_theta_eta.cols() != req.count()) {
    throw std::invalid_argument("assemble_auxiliary: mixed block does not match |K|");
  }
  qp::AuxiliaryQp aux;
  aux.H = *bundle.hess_dense;
  aux.c = bundle.mixed_theta_eta * req.direction();

  // At an exact KKT point the stationarity term vanishes; trained models
  // are only approximately stationary, so small residuals are dropped
  // (recorded), large ones are kept in the linear term.
  const double grad_norm = bundle.grad_theta.lpNorm<Eigen::Infinity>();
  if (carryover) *carryover = grad_norm;
  if (grad_norm > opts.stationarity_carryover_tol) {
    aux.c += bundle.grad_theta;
    if (warnings) {
      warnings->push_back("stationarity residual " + std::to_string(grad_norm) +
                          " exceeds tolerance; kept in the QP linear term");
    }
  }

  for (int s = 0; s < static_cast<int>(bundle.hard_ineq.size()); ++s) {
    qp::Row row;
    row.a = bundle.hard_ineq[s].grad;
    row.b = bundle.hard_ineq[s].value;
    if (part.is_inactive(s)) {
      row.kind = qp::RowKind::free_row;
    } else if (part.is_weakly_active(s)) {
      row.kind = qp::RowKind::inequality;
    } else {
      row.kind = qp::RowKind::equality;
    }
    aux.rows.push_back(std::move(row));
  }
  for (const diff::ConstraintLin& lin : bundle.hard_eq) {
    aux.rows.push_back(qp::Row{lin.grad, lin.value, qp::RowKind::equality});
  }
  return aux;
}

double vi_residual(const diff::DerivativeBundle& bundle, const IndexPartition& part,
                   const RemovalRequest& req, const Vector& delta_theta,
                   const Vector& gamma_g, const Vector& gamma_h, bool* sign_ok) {
  Vector r = diff::hessian_vector_product(bundle, delta_theta);
  r += bundle.mixed_theta_eta * req.direction();
  for (int s = 0; s < static_cast<int>(bundle.hard_ineq.size()); ++s) {
    r += gamma_g[s] * bundle.hard_ineq[s].grad;
  }
  for (int s = 0; s < static_cast<int>(bundle.hard_eq.size()); ++s) {
    r += gamma_h[s] * bundle.hard_eq[s].grad;
  }
  if (sign_ok) {
    *sign_ok = true;
    const double tol = 1e-8;
    for (int s = 0; s < static_cast<int>(bundle.hard_ineq.size()); ++s) {
      if (part.is_weakly_active(s)) {
        if (gamma_g[s] < -tol) *sign_ok = false;
        const double gbar = bundle.hard_ineq[s].value + bundle.hard_ineq[s].grad.dot(delta_theta);
        if (gbar < -tol && std::abs(gamma_g[s]) > tol) *sign_ok = false;
      } else if (part.is_inactive(s)) {
        if (std::abs(gamma_g[s]) > tol) *sign_ok = false;
      }
    }
  }
  return r.lpNorm<Eigen::Infinity>();
}

namespace {

/// Damped dense solve of (H + rho I) x = -rhs, escalating rho until the
/// factorization succeeds.
Vector damped_dense_solve(const Matrix& hess, const Vector& rhs, double initial_damping,
                          double* damping_used) {
  const double scale = std::max(1.0, hess.diagonal().cwiseAbs().mean());
  double rho = initial_damping;
  for (int attempt = 0; attempt < 40; ++attempt) {
    Matrix g = hess;
    g.diagonal().array() += rho;
    Eigen::LLT<Matrix> llt(g);
    if (llt.info() == Eigen::Success) {
      const Vector diag = llt.matrixLLT().diagonal();
      if (diag.minCoeff() > 1e-12 * std::max(1.0, diag.maxCoeff())) {
        *damping_used = rho;
        return llt.solve(-rhs);
      }
    }
    rho = rho == 0.0 ? 1e-8 * scale : rho * 100.0;
    if (rho > 1e10 * scale) break;
  }
  throw std::runtime_error("influence_unconstrained: damping exhausted");
}

/// Conjugate gradients on (H + rho I) x = -rhs through the HVP oracle.
/// Restarts with stronger damping when negative curvature shows up or the
/// iteration stalls.
Vector damped_cg_solve(const diff::DerivativeBundle& bundle, const Vector& rhs,
                       const UnlearnOptions& opts, double* damping_used) {
  const int dim = static_cast<int>(rhs.size());
  const int max_iter = opts.cg_max_iter > 0 ? opts.cg_max_iter : 10 * dim;
  double rho = opts.initial_damping;
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    *damping_used = rho;
    return Vector::Zero(dim);
  }
  for (int attempt = 0; attempt < 8; ++attempt) {
    Vector x = Vector::Zero(dim);
    Vector r = -rhs;  // residual of (H + rho I) x = -rhs at x = 0
    Vector p = r;
    double rs = r.squaredNorm();
    bool failed = false;
    for (int it = 0; it < max_iter; ++it) {
      if (std::sqrt(rs) <= opts.cg_tol * rhs_norm) {
        *damping_used = rho;
        return x;
      }
      Vector hp = bundle.hvp(p) + rho * p;
      const double php = p.dot(hp);
      if (!(php > 1e-14 * p.squaredNorm())) {
        failed = true;  // negative or vanishing curvature
        break;
      }
      const double alpha = rs / php;
      x += alpha * p;
      r -= alpha * hp;
      const double rs_next = r.squaredNorm();
      p = r + (rs_next / rs) * p;
      rs = rs_next;
    }
    if (!failed && std::sqrt(rs) <= opts.cg_tol * rhs_norm) {
      *damping_used = rho;
      return x;
    }
    rho = rho == 0.0 ? 1e-8 : rho * 10.0;
  }
  throw std::runtime_error("influence_unconstrained: conjugate gradients failed to converge");
}

}  // namespace

UnlearnResult influence_unconstrained(const diff::DerivativeBundle& bundle,
                                      const RemovalRequest& req, const UnlearnOptions& opts) {
  if (!bundle.hard_ineq.empty() || !bundle.hard_eq.empty()) {
    throw std::invalid_argument("influence_unconstrained: hard constraints remain");
  }
  UnlearnResult res;
  const Vector rhs = bundle.mixed_theta_eta * req.direction();
  if (bundle.hess_dense && bundle.dim() <= opts.dense_dim_max) {
    res.method = UnlearnMethod::influence;
    res.delta_theta =
        damped_dense_solve(*bundle.hess_dense, rhs, opts.initial_damping, &res.damping_used);
  } else {
    res.method = UnlearnMethod::matrix_free;
    res.delta_theta = damped_cg_solve(bundle, rhs, opts, &res.damping_used);
  }
  res.theta_updated = Vector();  // caller adds theta_bar; filled by unlearn()
  res.stationarity_carryover = bundle.grad_theta.lpNorm<Eigen::Infinity>();
  if (res.stationarity_carryover > opts.stationarity_carryover_tol) {
    res.warnings.push_back("influence update taken at a point with stationarity residual " +
                           std::to_string(res.stationarity_carryover));
  }
  res.delta_lambda_g = Vector();
  res.delta_lambda_h = Vector();
  IndexPartition empty_part;
  res.vi_residual = vi_residual(bundle, empty_part, req, res.delta_theta, res.delta_lambda_g,
                                res.delta_lambda_h, &res.vi_sign_ok);
  return res;
}

Certificate certify(const UnlearnResult& result, const WeightedProblem& wp,
                    const diff::DerivativeBundle& bundle) {
  Certificate cert;
  const Vector target = Vector::Constant(wp.removed_count(), wp.request().target_weight);
  const Vector& theta = result.theta_updated;
  for (int s = 0; s < static_cast<int>(wp.hard_inequalities().size()); ++s) {
    const double v = wp.hard_inequality_value(s, target, theta);
    cert.entries.push_back({"inequality", s, v, std::max(0.0, v)});
    cert.max_violation = std::max(cert.max_violation, std::max(0.0, v));
  }
  for (int s = 0; s < static_cast<int>(wp.hard_equalities().size()); ++s) {
    const double v = wp.hard_equality_value(s, target, theta);
    cert.entries.push_back({"equality", s, v, std::abs(v)});
    cert.max_violation = std::max(cert.max_violation, std::abs(v));
  }
  cert.vi_residual = vi_residual(bundle, result.partition, wp.request(), result.delta_theta,
                                 result.delta_lambda_g, result.delta_lambda_h, &cert.vi_sign_ok);
  return cert;
}

UnlearnResult unlearn(const WeightedProblem& wp, const KktPoint& kkt,
                      const UnlearnOptions& opts) {
  const diff::DerivativeBundle bundle =
      diff::lagrangian_derivatives(wp, kkt, opts.derivative_mode, opts.diff_opts);

  UnlearnResult res;
  const int n_gi = static_cast<int>(wp.hard_inequalities().size());
  const int n_ge = static_cast<int>(wp.hard_equalities().size());

  if (n_gi == 0 && n_ge == 0) {
    res = influence_unconstrained(bundle, wp.request(), opts);
  } else {
    res.partition = classify_index_sets(kkt, wp, opts.activity_tol);
    res.warnings = res.partition.warnings;
    const qp::AuxiliaryQp aux = assemble_auxiliary(bundle, res.partition, wp.request(), opts,
                                                   &res.warnings, &res.stationarity_carryover);
    qp::QpSolution sol = qp::solve(aux, opts.qp_opts);
    res.qp_status = sol.status;
    res.damping_used = sol.damping_used;
    if (sol.status != qp::SolveStatus::optimal) {
      throw std::runtime_error(std::string("unlearn: auxiliary QP solve failed with status ") +
                               qp::to_string(sol.status));
    }
    res.method = UnlearnMethod::aux_qp;
    res.delta_theta = sol.delta_theta;
    res.delta_lambda_g = sol.multipliers.head(n_gi);
    res.delta_lambda_h = sol.multipliers.tail(n_ge);
    res.vi_residual = vi_residual(bundle, res.partition, wp.request(), res.delta_theta,
                                  res.delta_lambda_g, res.delta_lambda_h, &res.vi_sign_ok);
  }

  res.theta_updated = kkt.theta + res.delta_theta;
  if (res.delta_lambda_g.size() == 0) res.delta_lambda_g = Vector::Zero(n_gi);
  if (res.delta_lambda_h.size() == 0) res.delta_lambda_h = Vector::Zero(n_ge);

  const Certificate cert = certify(res, wp, bundle);
  res.feasibility = cert.entries;
  return res;
}

}  // namespace unlearn
