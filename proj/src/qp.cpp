#include "unlearn/qp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace unlearn::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix symmetrized(const Matrix& h) {
  const double scale = 1.0 + h.cwiseAbs().maxCoeff();
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6 * scale) {
    throw std::invalid_argument("qp: H is not symmetric (asymmetry " + std::to_string(asym) +
                                ")");
  }
  return 0.5 * (h + h.transpose());
}

struct EqualityReduction {
  Vector x0;  // particular solution of the equality rows
  Matrix Z;   // orthonormal nullspace basis, dim x nz
  Matrix A;   // stacked equality normals, m x dim
  Vector b;   // stacked offsets
  bool consistent = true;
};

EqualityReduction reduce_equalities(const AuxiliaryQp& qp, double feas_tol) {
  EqualityReduction red;
  const int dim = qp.dim();
  int m = 0;
  for (const Row& r : qp.rows) {
    if (r.kind == RowKind::equality) ++m;
  }
  red.A.resize(m, dim);
  red.b.resize(m);
  int k = 0;
  for (const Row& r : qp.rows) {
    if (r.kind != RowKind::equality) continue;
    red.A.row(k) = r.a.transpose();
    red.b[k] = r.b;
    ++k;
  }
  if (m == 0) {
    red.x0 = Vector::Zero(dim);
    red.Z = Matrix::Identity(dim, dim);
    return red;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(red.A);
  qr.setThreshold(1e-10);
  red.x0 = qr.solve(-red.b);
  const double resid = (red.A * red.x0 + red.b).lpNorm<Eigen::Infinity>();
  if (resid > feas_tol * (1.0 + red.b.lpNorm<Eigen::Infinity>())) {
    red.consistent = false;
    return red;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr_t(red.A.transpose());
  qr_t.setThreshold(1e-10);
  const int rank = static_cast<int>(qr_t.rank());
  Matrix q = qr_t.householderQ();
  red.Z = q.rightCols(dim - rank);
  return red;
}

/// Smallest rho in the escalation schedule with Hr + rho I positive definite.
double select_damping(const Matrix& hr, const SolverOptions& opts, Eigen::LLT<Matrix>* llt) {
  if (hr.rows() == 0) return 0.0;
  const double scale = std::max(1.0, hr.diagonal().cwiseAbs().mean());
  double rho = 0.0;
  for (;;) {
    Matrix g = hr;
    g.diagonal().array() += rho;
    llt->compute(g);
    bool ok = llt->info() == Eigen::Success;
    if (ok) {
      // A marginally successful factorization (pivot ratio ~ sqrt(eps))
      // still produces garbage directions; insist on a real margin.
      const Vector diag = llt->matrixLLT().diagonal();
      ok = diag.minCoeff() > 1e-7 * std::max(1.0, diag.maxCoeff());
    }
    if (ok) return rho;
    if (rho == 0.0) {
      rho = opts.initial_damping > 0.0 ? opts.initial_damping : 1e-8 * scale;
    } else {
      rho *= opts.damping_growth;
    }
    if (rho > opts.max_damping * scale) {
      throw std::runtime_error("qp: damping exhausted without a positive definite reduced Hessian");
    }
  }
}

struct ReducedIneq {
  Vector a;       // Z^T a
  double b;       // b + a^T x0
  int row_index;  // position in AuxiliaryQp::rows
  bool degenerate = false;  // vanishes in the reduced space
};

Vector recover_equality_multipliers(const EqualityReduction& red, const Vector& grad_residual) {
  if (red.A.rows() == 0) return Vector();
  Eigen::ColPivHouseholderQR<Matrix> qr(red.A.transpose());
  qr.setThreshold(1e-10);
  return qr.solve(-grad_residual);
}

}  // namespace

void AuxiliaryQp::validate() const {
  if (H.rows() != H.cols()) throw std::invalid_argument("qp: H must be square");
  if (H.rows() != c.size()) throw std::invalid_argument("qp: H and c dimensions differ");
  for (const Row& r : rows) {
    if (r.a.size() != c.size()) {
      throw std::invalid_argument("qp: constraint row dimension != dim(theta)");
    }
  }
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

namespace {

/// One dual active-set run at fixed damping. Returns the primal point in
/// reduced coordinates plus the active inequality multipliers.
struct ActiveSetRun {
  SolveStatus status = SolveStatus::optimal;
  Vector y;
  std::vector<int> active;           // indices into the reduced rows
  std::vector<double> gamma_active;
  int iterations = 0;
};

ActiveSetRun run_active_set(const Eigen::LLT<Matrix>& llt, const Vector& c_r,
                            const std::vector<ReducedIneq>& ineqs, int nz, int max_iter,
                            const SolverOptions& opts) {
  ActiveSetRun run;
  const int n_ineq = static_cast<int>(ineqs.size());
  run.y = nz > 0 ? Vector(-llt.solve(c_r)) : Vector();
  std::vector<char> in_active(static_cast<size_t>(n_ineq), 0);

  auto value_of = [&](const ReducedIneq& ri) { return ri.a.dot(run.y) + ri.b; };

  for (;;) {
    // Most violated inequality; lowest index wins ties.
    int p = -1;
    double worst = opts.feasibility_tol;
    for (int i = 0; i < n_ineq; ++i) {
      if (in_active[i] || ineqs[i].degenerate) continue;
      const double s = value_of(ineqs[i]);
      if (s > worst + 1e-15) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) return run;  // feasible and dual-satisfied

    double gamma_p = 0.0;
    for (;;) {
      if (++run.iterations > max_iter) {
        run.status = SolveStatus::max_iter;
        return run;
      }
      const double s_p = value_of(ineqs[p]);
      if (s_p <= opts.feasibility_tol) {
        // Satisfied while dropping blockers; keep it active with its
        // accumulated multiplier if that multiplier is positive.
        if (gamma_p > opts.zero_tol) {
          run.active.push_back(p);
          run.gamma_active.push_back(gamma_p);
          in_active[p] = 1;
        }
        break;
      }

      const Vector gi_ap = llt.solve(ineqs[p].a);
      Vector r;
      Vector z;
      const int n_act = static_cast<int>(run.active.size());
      if (n_act == 0) {
        z = gi_ap;
      } else {
        Matrix n_mat(nz, n_act);
        for (int k = 0; k < n_act; ++k) n_mat.col(k) = ineqs[run.active[k]].a;
        const Matrix gi_n = llt.solve(n_mat);
        const Matrix m = n_mat.transpose() * gi_n;
        Eigen::LDLT<Matrix> m_ldlt(m);
        if (m_ldlt.info() != Eigen::Success) {
          throw std::runtime_error("qp: singular working-set system");
        }
        r = m_ldlt.solve(n_mat.transpose() * gi_ap);
        z = gi_ap - gi_n * r;
      }
      const double apz = ineqs[p].a.dot(z);

      // Dual blocking step; ties leave the lowest original row index.
      double t1 = kInf;
      int blocker = -1;
      for (int k = 0; k < n_act; ++k) {
        if (r[k] > opts.zero_tol) {
          const double cand = run.gamma_active[k] / r[k];
          const bool tie = blocker >= 0 && std::abs(cand - t1) <= 1e-15 &&
                           ineqs[run.active[k]].row_index < ineqs[run.active[blocker]].row_index;
          if (cand < t1 - 1e-15 || tie) {
            t1 = std::min(t1, cand);
            blocker = k;
          }
        }
      }

      const bool degenerate_dir =
          apz <= opts.zero_tol * std::max(1.0, ineqs[p].a.norm() * z.norm());
      if (degenerate_dir) {
        if (blocker < 0) {
          run.status = SolveStatus::infeasible;
          return run;
        }
        for (int k = 0; k < n_act; ++k) run.gamma_active[k] -= t1 * r[k];
        gamma_p += t1;
        in_active[run.active[blocker]] = 0;
        run.active.erase(run.active.begin() + blocker);
        run.gamma_active.erase(run.gamma_active.begin() + blocker);
        continue;
      }

      const double t2 = s_p / apz;
      const double t = std::min(t1, t2);
      run.y -= t * z;
      for (int k = 0; k < n_act; ++k) run.gamma_active[k] -= t * r[k];
      gamma_p += t;
      if (t2 <= t1) {
        run.active.push_back(p);
        run.gamma_active.push_back(gamma_p);
        in_active[p] = 1;
        break;
      }
      in_active[run.active[blocker]] = 0;
      run.active.erase(run.active.begin() + blocker);
      run.gamma_active.erase(run.gamma_active.begin() + blocker);
    }
  }
}

/// Joint least-squares refinement of all multipliers (equality rows plus
/// the active inequalities) at the final point. Adopted only when it
/// keeps the inequality signs and is actually used to fill the result.
Vector refine_multipliers(const AuxiliaryQp& qp, const Matrix& h_eff, const Vector& x,
                          const std::vector<int>& active_rows, const Vector& fallback) {
  std::vector<int> cols;
  for (int i = 0; i < static_cast<int>(qp.rows.size()); ++i) {
    if (qp.rows[i].kind == RowKind::equality) cols.push_back(i);
  }
  const size_t n_eq = cols.size();
  for (int i : active_rows) cols.push_back(i);
  Vector refined = Vector::Zero(static_cast<Eigen::Index>(qp.rows.size()));
  if (cols.empty()) return refined;

  Matrix a_t(qp.dim(), static_cast<Eigen::Index>(cols.size()));
  for (size_t k = 0; k < cols.size(); ++k) {
    a_t.col(static_cast<Eigen::Index>(k)) = qp.rows[static_cast<size_t>(cols[k])].a;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(a_t);
  qr.setThreshold(1e-10);
  const Vector gamma = qr.solve(-(h_eff * x + qp.c));
  for (size_t k = n_eq; k < cols.size(); ++k) {
    if (gamma[static_cast<Eigen::Index>(k)] < -1e-9) return fallback;  // wrong sign split
  }
  for (size_t k = 0; k < cols.size(); ++k) {
    refined[cols[k]] = gamma[static_cast<Eigen::Index>(k)];
  }
  return refined;
}

}  // namespace

QpSolution solve(const AuxiliaryQp& qp, const SolverOptions& opts) {
  qp.validate();
  const int dim = qp.dim();
  const int n_rows = static_cast<int>(qp.rows.size());
  const Matrix hs = symmetrized(qp.H);

  QpSolution sol;
  sol.multipliers = Vector::Zero(n_rows);

  EqualityReduction red = reduce_equalities(qp, opts.feasibility_tol);
  if (!red.consistent) {
    sol.status = SolveStatus::infeasible;
    sol.delta_theta = Vector::Zero(dim);
    sol.kkt_residual = kInf;
    return sol;
  }
  const int nz = static_cast<int>(red.Z.cols());

  // Reduced inequality rows (independent of damping).
  std::vector<ReducedIneq> ineqs;
  for (int i = 0; i < n_rows; ++i) {
    if (qp.rows[i].kind != RowKind::inequality) continue;
    ReducedIneq ri;
    ri.a = red.Z.transpose() * qp.rows[i].a;
    ri.b = qp.rows[i].b + qp.rows[i].a.dot(red.x0);
    ri.row_index = i;
    if (ri.a.norm() <= 1e-12 * (1.0 + qp.rows[i].a.norm())) {
      if (ri.b > opts.feasibility_tol) {
        sol.status = SolveStatus::infeasible;
        sol.delta_theta = red.x0;
        sol.kkt_residual = kInf;
        return sol;
      }
      ri.degenerate = true;
    }
    ineqs.push_back(ri);
  }

  // Damping is chosen on the reduced Hessian, then applied as H + rho I;
  // with an orthonormal Z both views agree. When the active-set pass
  // comes back with a poor KKT residual, the conditioning was too harsh
  // for the chosen rho: escalate and rerun.
  Matrix hr = red.Z.transpose() * hs * red.Z;
  Eigen::LLT<Matrix> llt;
  double rho = select_damping(hr, opts, &llt);
  const double diag_scale = nz > 0 ? std::max(1.0, hr.diagonal().cwiseAbs().mean()) : 1.0;
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 30 * (dim + n_rows) + 50;
  const double accept_scale =
      1.0 + qp.c.lpNorm<Eigen::Infinity>() + hs.cwiseAbs().maxCoeff();

  QpSolution best;
  best.status = SolveStatus::max_iter;
  best.kkt_residual = kInf;
  for (int attempt = 0; attempt < 5; ++attempt) {
    if (attempt > 0) {
      rho = std::max(rho * 100.0, 1e-8 * diag_scale);
      Matrix g = hr;
      g.diagonal().array() += rho;
      llt.compute(g);
      if (llt.info() != Eigen::Success) continue;
    }
    Matrix h_eff = hs;
    h_eff.diagonal().array() += rho;
    const Vector c_r = red.Z.transpose() * (h_eff * red.x0 + qp.c);

    const ActiveSetRun run = run_active_set(llt, c_r, ineqs, nz, max_iter, opts);
    if (run.status == SolveStatus::infeasible) {
      sol.status = SolveStatus::infeasible;
      sol.delta_theta = red.x0 + (nz > 0 ? Vector(red.Z * run.y) : Vector::Zero(dim));
      sol.damping_used = rho;
      sol.kkt_residual = kInf;
      return sol;
    }

    QpSolution cand;
    cand.damping_used = rho;
    cand.iterations = run.iterations;
    cand.multipliers = Vector::Zero(n_rows);
    cand.delta_theta = red.x0 + (nz > 0 ? Vector(red.Z * run.y) : Vector::Zero(dim));
    std::vector<int> active_rows;
    for (size_t k = 0; k < run.active.size(); ++k) {
      const int row = ineqs[static_cast<size_t>(run.active[k])].row_index;
      active_rows.push_back(row);
      cand.multipliers[row] = run.gamma_active[k];
    }
    Vector fallback = cand.multipliers;
    {
      // fill equality multipliers of the fallback by least squares given
      // the iteration's inequality multipliers
      Vector grad_residual = h_eff * cand.delta_theta + qp.c;
      for (int i = 0; i < n_rows; ++i) {
        if (qp.rows[i].kind == RowKind::inequality) {
          grad_residual += fallback[i] * qp.rows[i].a;
        }
      }
      const Vector gamma_eq = recover_equality_multipliers(red, grad_residual);
      int k = 0;
      for (int i = 0; i < n_rows; ++i) {
        if (qp.rows[i].kind == RowKind::equality) fallback[i] = gamma_eq[k++];
      }
    }
    cand.multipliers = refine_multipliers(qp, h_eff, cand.delta_theta, active_rows, fallback);
    cand.status = run.status;
    cand.kkt_residual = kkt_residual(qp, cand);
    {
      QpSolution with_fallback = cand;
      with_fallback.multipliers = fallback;
      const double fb_resid = kkt_residual(qp, with_fallback);
      if (fb_resid < cand.kkt_residual) {
        cand.multipliers = fallback;
        cand.kkt_residual = fb_resid;
      }
    }

    if (cand.kkt_residual < best.kkt_residual) best = cand;
    if (run.status == SolveStatus::optimal && cand.kkt_residual <= 1e-7 * accept_scale) {
      best = cand;
      break;
    }
  }
  if (best.status == SolveStatus::optimal && best.kkt_residual > 1e-4 * accept_scale) {
    // Primal feasibility or stationarity never settled; report honestly.
    best.status = SolveStatus::max_iter;
  }
  return best;
}

QpSolution enumerate_oracle(const AuxiliaryQp& qp, const SolverOptions& opts) {
  qp.validate();
  const int dim = qp.dim();
  const int n_rows = static_cast<int>(qp.rows.size());
  std::vector<int> ineq_rows;
  for (int i = 0; i < n_rows; ++i) {
    if (qp.rows[i].kind == RowKind::inequality) ineq_rows.push_back(i);
  }
  const int n_ineq = static_cast<int>(ineq_rows.size());
  if (n_ineq > 12) {
    throw std::invalid_argument("enumerate_oracle: more than 12 inequality rows");
  }
  const Matrix hs = symmetrized(qp.H);

  EqualityReduction base = reduce_equalities(qp, opts.feasibility_tol);
  QpSolution best;
  best.multipliers = Vector::Zero(n_rows);
  best.delta_theta = Vector::Zero(dim);
  if (!base.consistent) {
    best.status = SolveStatus::infeasible;
    best.kkt_residual = kInf;
    return best;
  }
  Matrix hr = base.Z.transpose() * hs * base.Z;
  Eigen::LLT<Matrix> llt;
  const double rho = select_damping(hr, opts, &llt);
  Matrix h_eff = hs;
  h_eff.diagonal().array() += rho;

  const int n_eq = static_cast<int>(base.A.rows());
  bool found = false;
  double best_obj = kInf;
  int tried = 0;

  for (int mask = 0; mask < (1 << n_ineq); ++mask) {
    ++tried;
    const int n_act = n_eq + __builtin_popcount(static_cast<unsigned>(mask));
    Matrix a_full(n_act, dim);
    Vector b_full(n_act);
    a_full.topRows(n_eq) = base.A;
    b_full.head(n_eq) = base.b;
    int row = n_eq;
    for (int s = 0; s < n_ineq; ++s) {
      if (!(mask & (1 << s))) continue;
      a_full.row(row) = qp.rows[ineq_rows[s]].a.transpose();
      b_full[row] = qp.rows[ineq_rows[s]].b;
      ++row;
    }

    Vector x, gamma;
    if (n_act == 0) {
      x = -Eigen::LLT<Matrix>(h_eff).solve(qp.c);
      gamma = Vector();
    } else {
      Eigen::ColPivHouseholderQR<Matrix> qr(a_full);
      qr.setThreshold(1e-10);
      const Vector x0 = qr.solve(-b_full);
      if ((a_full * x0 + b_full).lpNorm<Eigen::Infinity>() >
          opts.feasibility_tol * (1.0 + b_full.lpNorm<Eigen::Infinity>())) {
        continue;  // inconsistent active set
      }
      Eigen::ColPivHouseholderQR<Matrix> qr_t(a_full.transpose());
      qr_t.setThreshold(1e-10);
      const int rank = static_cast<int>(qr_t.rank());
      Matrix q = qr_t.householderQ();
      const Matrix z = q.rightCols(dim - rank);
      if (z.cols() == 0) {
        x = x0;
      } else {
        const Matrix hz = z.transpose() * h_eff * z;
        Eigen::LLT<Matrix> llt_z(hz);
        if (llt_z.info() != Eigen::Success) continue;
        const Vector yz = -llt_z.solve(z.transpose() * (h_eff * x0 + qp.c));
        x = x0 + z * yz;
      }
      gamma = qr_t.solve(-(h_eff * x + qp.c));
    }

    // Primal feasibility over every row.
    bool feasible = true;
    for (int i = 0; i < n_rows && feasible; ++i) {
      const double v = qp.rows[i].a.dot(x) + qp.rows[i].b;
      if (qp.rows[i].kind == RowKind::equality && std::abs(v) > opts.feasibility_tol) {
        feasible = false;
      }
      if (qp.rows[i].kind == RowKind::inequality && v > opts.feasibility_tol) feasible = false;
    }
    if (!feasible) continue;
    // Dual feasibility on the chosen active subset.
    bool dual_ok = true;
    for (int s = 0, rr = n_eq; s < n_ineq; ++s) {
      if (!(mask & (1 << s))) continue;
      if (gamma[rr] < -1e-9) dual_ok = false;
      ++rr;
    }
    if (!dual_ok) continue;

    const double obj = 0.5 * x.dot(h_eff * x) + qp.c.dot(x);
    if (obj < best_obj - 1e-14) {
      best_obj = obj;
      best.delta_theta = x;
      best.multipliers = Vector::Zero(n_rows);
      int rr = 0;
      for (int i = 0; i < n_rows; ++i) {
        if (qp.rows[i].kind == RowKind::equality) best.multipliers[i] = gamma[rr++];
      }
      for (int s = 0; s < n_ineq; ++s) {
        if (mask & (1 << s)) best.multipliers[ineq_rows[s]] = gamma[rr++];
      }
      found = true;
    }
  }

  best.iterations = tried;
  best.damping_used = rho;
  if (!found) {
    best.status = SolveStatus::infeasible;
    best.kkt_residual = kInf;
    return best;
  }
  best.status = SolveStatus::optimal;
  best.kkt_residual = kkt_residual(qp, best);
  return best;
}

double kkt_residual(const AuxiliaryQp& qp, const QpSolution& sol) {
  const Matrix hs = symmetrized(qp.H);
  const Vector& x = sol.delta_theta;
  Vector stat = hs * x + qp.c;
  stat += sol.damping_used * x;
  double feas = 0.0, dual = 0.0, comp = 0.0;
  for (int i = 0; i < static_cast<int>(qp.rows.size()); ++i) {
    const Row& r = qp.rows[i];
    const double v = r.a.dot(x) + r.b;
    const double g = sol.multipliers[i];
    switch (r.kind) {
      case RowKind::equality:
        stat += g * r.a;
        feas = std::max(feas, std::abs(v));
        break;
      case RowKind::inequality:
        stat += g * r.a;
        feas = std::max(feas, std::max(0.0, v));
        dual = std::max(dual, std::max(0.0, -g));
        comp = std::max(comp, std::abs(g * v));
        break;
      case RowKind::free_row:
        break;
    }
  }
  return std::max({stat.lpNorm<Eigen::Infinity>(), feas, dual, comp});
}

double objective_value(const AuxiliaryQp& qp, const Vector& x) {
  return 0.5 * x.dot(symmetrized(qp.H) * x) + qp.c.dot(x);
}

void dump_json(const AuxiliaryQp& qp, const std::string& path) {
  nlohmann::json j;
  j["dim"] = qp.dim();
  j["H"] = std::vector<std::vector<double>>();
  for (int i = 0; i < qp.H.rows(); ++i) {
    std::vector<double> row(qp.H.cols());
    for (int k = 0; k < qp.H.cols(); ++k) row[k] = qp.H(i, k);
    j["H"].push_back(row);
  }
  j["c"] = std::vector<double>(qp.c.data(), qp.c.data() + qp.c.size());
  j["rows"] = nlohmann::json::array();
  for (const Row& r : qp.rows) {
    nlohmann::json jr;
    jr["a"] = std::vector<double>(r.a.data(), r.a.data() + r.a.size());
    jr["b"] = r.b;
    jr["kind"] = r.kind == RowKind::equality      ? "equality"
                 : r.kind == RowKind::inequality  ? "inequality"
                                                  : "free";
    j["rows"].push_back(jr);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace unlearn::qp
