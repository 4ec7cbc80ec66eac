#pragma once

#include "unlearn/core.hpp"
#include "unlearn/diff.hpp"
#include "unlearn/qp.hpp"

#include <string>
#include <vector>

namespace unlearn {

/// Active / weakly-active / inactive split of the hard inequality
/// constraints at the trained solution. Entries are slots into
/// WeightedProblem::hard_inequalities().
struct IndexPartition {
  std::vector<int> active;         // I:  |g_j| <= eps_act
  std::vector<int> weakly_active;  // I0: additionally lambda_j <= eps_act
  std::vector<int> inactive;       // I1: g_j < -eps_act
  double activity_tol = 1e-6;
  std::vector<std::string> warnings;  // complementarity / feasibility inconsistencies

  bool is_weakly_active(int slot) const;
  bool is_inactive(int slot) const;
};

struct UnlearnOptions {
  double activity_tol = 1e-6;
  // ||grad L||_inf above this is kept in the QP linear term instead of
  // being dropped, with a warning.
  double stationarity_carryover_tol = 1e-6;
  int dense_dim_max = 2000;
  double cg_tol = 1e-10;
  int cg_max_iter = 0;            // 0 -> 10 * dim
  double initial_damping = 0.0;   // 0 -> escalate only if the solve fails
  diff::Mode derivative_mode = diff::Mode::analytic;
  diff::Options diff_opts;
  qp::SolverOptions qp_opts;
};

enum class UnlearnMethod { aux_qp, influence, matrix_free };

const char* to_string(UnlearnMethod m);

struct FeasibilityEntry {
  std::string kind;  // "inequality" | "equality"
  int index = 0;     // hard-constraint slot
  double value = 0.0;
  double violation = 0.0;
};

struct UnlearnResult {
  Vector delta_theta;
  Vector delta_lambda_g;  // one per hard inequality slot
  Vector delta_lambda_h;  // one per hard equality slot
  Vector theta_updated;
  UnlearnMethod method = UnlearnMethod::aux_qp;
  qp::SolveStatus qp_status = qp::SolveStatus::optimal;
  IndexPartition partition;
  double vi_residual = 0.0;
  bool vi_sign_ok = true;
  double damping_used = 0.0;
  double stationarity_carryover = 0.0;  // ||grad L||_inf at theta_bar
  std::vector<FeasibilityEntry> feasibility;
  std::vector<std::string> warnings;
};

IndexPartition classify_index_sets(const KktPoint& kkt, const WeightedProblem& wp,
                                   double eps_act = 1e-6);

/// Builds the auxiliary QP: H from the Lagrangian Hessian, linear term
/// from the mixed theta/eta block times the perturbation direction, rows
/// from the hard-constraint linearizations per the index partition.
qp::AuxiliaryQp assemble_auxiliary(const diff::DerivativeBundle& bundle,
                                   const IndexPartition& part, const RemovalRequest& req,
                                   const UnlearnOptions& opts = {},
                                   std::vector<std::string>* warnings = nullptr,
                                   double* carryover = nullptr);

/// Full pipeline: derivatives, index classification, auxiliary solve,
/// update, certification. Dispatches to the influence fast path when no
/// hard constraints remain.
UnlearnResult unlearn(const WeightedProblem& wp, const KktPoint& kkt,
                      const UnlearnOptions& opts = {});

/// Influence-function special case: delta_theta = -H^{-1} (mixed * q),
/// damped when H is singular, conjugate-gradient when the bundle has no
/// dense Hessian.
UnlearnResult influence_unconstrained(const diff::DerivativeBundle& bundle,
                                      const RemovalRequest& req,
                                      const UnlearnOptions& opts = {});

/// Residual of the auxiliary VI stationarity identity
/// H*dtheta + sum gamma_r a_r + mixed*q at the returned point, plus the
/// sign/zero structure of the inequality multipliers.
double vi_residual(const diff::DerivativeBundle& bundle, const IndexPartition& part,
                   const RemovalRequest& req, const Vector& delta_theta,
                   const Vector& gamma_g, const Vector& gamma_h, bool* sign_ok = nullptr);

struct Certificate {
  std::vector<FeasibilityEntry> entries;
  double max_violation = 0.0;
  double vi_residual = 0.0;
  bool vi_sign_ok = true;
};

/// Evaluates every remaining hard constraint at theta_updated and
/// recomputes the VI residual.
Certificate certify(const UnlearnResult& result, const WeightedProblem& wp,
                    const diff::DerivativeBundle& bundle);

}  // namespace unlearn
