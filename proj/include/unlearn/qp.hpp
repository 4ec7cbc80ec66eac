#pragma once

#include "unlearn/core.hpp"

#include <string>
#include <vector>

namespace unlearn::qp {

enum class RowKind { equality, inequality, free_row };

/// One linearized constraint row: a^T x + b (kind decides how it binds).
/// Free rows impose nothing and are retained only for reporting.
struct Row {
  Vector a;
  double b = 0.0;
  RowKind kind = RowKind::equality;
};

/// min 0.5 x^T H x + c^T x subject to the rows.
struct AuxiliaryQp {
  Matrix H;
  Vector c;
  std::vector<Row> rows;

  int dim() const { return static_cast<int>(c.size()); }
  void validate() const;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iter };

const char* to_string(SolveStatus s);

/// Multiplier sign convention: the QP Lagrangian adds +gamma_r (a_r^T x + b_r),
/// so stationarity reads H x + c + sum gamma_r a_r = 0 and inequality
/// multipliers are >= 0 at optimality.
struct QpSolution {
  Vector delta_theta;
  Vector multipliers;  // one per row, aligned with AuxiliaryQp::rows; 0 on free rows
  SolveStatus status = SolveStatus::optimal;
  double kkt_residual = 0.0;
  double damping_used = 0.0;  // rho actually added to H
  int iterations = 0;
};

struct SolverOptions {
  double feasibility_tol = 1e-9;
  double zero_tol = 1e-12;      // degenerate-direction / multiplier threshold
  int max_iter = 0;             // 0 -> 30 * (dim + #rows) + 50
  double initial_damping = 0.0; // first rho tried when the reduced Hessian is not PD
  double damping_growth = 100.0;
  double max_damping = 1e8;
};

/// Active-set solve. Equality rows are eliminated through a nullspace
/// basis; inequality rows are handled by a dual active-set iteration
/// (ties broken toward the lowest row index). If the reduced Hessian is
/// indefinite the QP is damped with H + rho I and rho is reported.
QpSolution solve(const AuxiliaryQp& qp, const SolverOptions& opts = {});

/// Brute-force oracle: tries every subset of inequality rows as active,
/// solves the equality-constrained KKT system, and returns the best
/// feasible candidate with nonnegative inequality multipliers. Requires
/// at most 12 inequality rows.
QpSolution enumerate_oracle(const AuxiliaryQp& qp, const SolverOptions& opts = {});

/// Max of stationarity, primal feasibility, dual feasibility and
/// complementarity residuals, evaluated against H + sol.damping_used * I.
double kkt_residual(const AuxiliaryQp& qp, const QpSolution& sol);

/// 0.5 x^T H x + c^T x on the undamped H.
double objective_value(const AuxiliaryQp& qp, const Vector& x);

/// Debug dump of (H, c, rows) for offline inspection.
void dump_json(const AuxiliaryQp& qp, const std::string& path);

}  // namespace unlearn::qp
