#include "unlearn/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace unlearn::svm {

namespace {

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double softplus(double beta, double u) {
  const double bu = beta * u;
  if (bu > 30.0) return u + std::log1p(std::exp(-bu)) / beta;
  return std::log1p(std::exp(bu)) / beta;
}

bool contains(const std::vector<int>& v, int i) {
  return std::find(v.begin(), v.end(), i) != v.end();
}

}  // namespace

void Dataset::validate() const {
  if (x.rows() != y.size()) throw std::invalid_argument("svm: feature/label count mismatch");
  if (x.rows() == 0) throw std::invalid_argument("svm: empty dataset");
  bool pos = false, neg = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      pos = true;
    } else if (y[i] == -1.0) {
      neg = true;
    } else {
      throw std::invalid_argument("svm: label must be +1 or -1");
    }
  }
  if (!pos || !neg) throw std::invalid_argument("svm: degenerate data, single class");
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(indices.size()));
  for (size_t k = 0; k < indices.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(indices[k]);
    out.y[static_cast<Eigen::Index>(k)] = y[indices[k]];
  }
  return out;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("svm: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) {
      try {
        row.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw std::invalid_argument("svm: line " + std::to_string(line_no) +
                                    ": non-numeric field '" + tok + "'");
      }
    }
    if (rows.empty() || row.size() == rows.front().size()) {
      rows.push_back(std::move(row));
    } else {
      throw std::invalid_argument("svm: line " + std::to_string(line_no) +
                                  ": inconsistent column count");
    }
  }
  if (rows.empty()) throw std::invalid_argument("svm: empty dataset file " + path);
  const int d = static_cast<int>(rows.front().size()) - 1;
  if (d < 1) throw std::invalid_argument("svm: need at least one feature column");
  Dataset data;
  data.x.resize(static_cast<Eigen::Index>(rows.size()), d);
  data.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) data.x(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<size_t>(j)];
    data.y[static_cast<Eigen::Index>(i)] = rows[i].back();
  }
  data.validate();
  return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svm: cannot open " + path);
  out.precision(17);
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) out << data.x(i, j) << ",";
    out << data.y[i] << "\n";
  }
}

Vector SvmModel::theta() const {
  Vector th(n_theta());
  th.head(dim()) = w;
  th[dim()] = b;
  th.tail(xi.size()) = xi;
  return th;
}

void SvmModel::set_theta(const Vector& th) {
  if (th.size() != n_theta()) throw std::invalid_argument("SvmModel: theta size mismatch");
  w = th.head(dim());
  b = th[dim()];
  xi = th.tail(xi.size());
}

namespace {

struct SmoothObjective {
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

/// 0.5 ||w||^2 + C sum xi + eta C softplus_beta(1 - y_N (w x_N + b)).
SmoothObjective eval_objective(const Dataset& data, const SvmModel& m, double eta_n) {
  const int d = m.dim();
  const int mk = static_cast<int>(m.xi.size());
  const int n_theta = m.n_theta();
  SmoothObjective out;
  out.grad = Vector::Zero(n_theta);
  out.hess = Matrix::Zero(n_theta, n_theta);

  out.value = 0.5 * m.w.squaredNorm() + m.c * m.xi.sum();
  out.grad.head(d) = m.w;
  out.grad.segment(d + 1, mk).setConstant(m.c);
  out.hess.topLeftCorner(d, d) = Matrix::Identity(d, d);

  if (m.removed_index >= 0 && eta_n != 0.0) {
    const Vector xn = data.x.row(m.removed_index).transpose();
    const double yn = data.y[m.removed_index];
    const double u = 1.0 - yn * (m.w.dot(xn) + m.b);
    const double s = logistic(m.beta * u);
    out.value += eta_n * m.c * softplus(m.beta, u);
    Vector dir(d + 1);
    dir.head(d) = xn;
    dir[d] = 1.0;
    out.grad.head(d + 1) += eta_n * m.c * s * (-yn) * dir;
    out.hess.topLeftCorner(d + 1, d + 1) +=
        eta_n * m.c * m.beta * s * (1.0 - s) * (dir * dir.transpose());
  }
  return out;
}

/// Margin and slack constraint rows at theta; all inequalities.
std::vector<qp::Row> constraint_rows(const Dataset& data, const SvmModel& m) {
  const int d = m.dim();
  const int mk = static_cast<int>(m.xi.size());
  std::vector<qp::Row> rows;
  rows.reserve(2 * static_cast<size_t>(mk));
  for (int i = 0; i < mk; ++i) {
    const int orig = m.kept[static_cast<size_t>(i)];
    qp::Row row;
    row.a = Vector::Zero(m.n_theta());
    row.a.head(d) = -data.y[orig] * data.x.row(orig).transpose();
    row.a[d] = -data.y[orig];
    row.a[d + 1 + i] = -1.0;
    row.b = 1.0 - m.xi[i] - data.y[orig] * m.decision(data.x.row(orig).transpose());
    row.kind = qp::RowKind::inequality;
    rows.push_back(std::move(row));
  }
  for (int i = 0; i < mk; ++i) {
    qp::Row row;
    row.a = Vector::Zero(m.n_theta());
    row.a[d + 1 + i] = -1.0;
    row.b = -m.xi[i];
    row.kind = qp::RowKind::inequality;
    rows.push_back(std::move(row));
  }
  return rows;
}

double train_kkt_residual(const SmoothObjective& obj, const std::vector<qp::Row>& rows,
                          const Vector& gamma) {
  Vector stat = obj.grad;
  double comp = 0.0, feas = 0.0, dual = 0.0;
  for (size_t r = 0; r < rows.size(); ++r) {
    const double g = gamma[static_cast<Eigen::Index>(r)];
    stat += g * rows[r].a;
    comp = std::max(comp, std::abs(g * rows[r].b));
    feas = std::max(feas, rows[r].b);
    dual = std::max(dual, -g);
  }
  return std::max({stat.lpNorm<Eigen::Infinity>(), comp, feas, dual});
}

}  // namespace

TrainResult train(const Dataset& data, double c, double beta, int removed_index, double eta_n,
                  const TrainOptions& opts) {
  data.validate();
  if (!(c > 0.0) || !(beta > 0.0)) throw std::invalid_argument("svm: C and beta must be positive");
  if (removed_index >= data.size()) throw std::invalid_argument("svm: removed_index out of range");
  if (!(eta_n >= 0.0 && eta_n <= 1.0)) throw std::invalid_argument("svm: eta_N outside [0,1]");

  TrainResult tr;
  SvmModel& m = tr.model;
  m.c = c;
  m.beta = beta;
  m.removed_index = removed_index < 0 ? -1 : removed_index;
  for (int i = 0; i < data.size(); ++i) {
    if (i != m.removed_index) m.kept.push_back(i);
  }
  const int mk = static_cast<int>(m.kept.size());
  m.w = Vector::Zero(data.dim());
  m.b = 0.0;
  m.xi = Vector::Ones(mk);

  Vector gamma = Vector::Zero(2 * mk);
  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const SmoothObjective obj = eval_objective(data, m, eta_n);
    qp::AuxiliaryQp step;
    step.H = obj.hess;
    step.c = obj.grad;
    step.rows = constraint_rows(data, m);

    const qp::QpSolution sol = qp::solve(step, opts.qp_opts);
    if (sol.status != qp::SolveStatus::optimal) {
      throw std::runtime_error(std::string("svm train: step QP failed with status ") +
                               qp::to_string(sol.status));
    }
    gamma = sol.multipliers;
    residual = train_kkt_residual(obj, step.rows, gamma);
    if (residual <= opts.tol) break;

    // Armijo backtracking; linear constraints keep full steps feasible.
    const Vector delta = sol.delta_theta;
    const double slope = obj.grad.dot(delta);
    double t = 1.0;
    const Vector theta0 = m.theta();
    const double f0 = obj.value;
    double f_new = f0;
    for (int ls = 0; ls < 60; ++ls) {
      m.set_theta(theta0 + t * delta);
      f_new = eval_objective(data, m, eta_n).value;
      if (f_new <= f0 + 1e-4 * t * slope) break;
      t *= 0.5;
    }
    if (f0 - f_new <= 1e-14 * (1.0 + std::abs(f0))) {
      break;  // at the damped fixed point; the polish phase takes over
    }
  }

  // Active-set polish: pin the detected active rows as equalities and
  // take exact Newton-KKT steps. With the slack directions pinned the
  // reduced Hessian is positive definite, so no damping enters and the
  // residual drops to solver precision.
  std::vector<char> excluded(static_cast<size_t>(2 * mk), 0);
  for (int polish = 0; polish < 6; ++polish) {
    if (residual <= opts.tol) break;
    const SmoothObjective obj = eval_objective(data, m, eta_n);
    const std::vector<qp::Row> rows = constraint_rows(data, m);
    std::vector<int> active;
    for (int r = 0; r < 2 * mk; ++r) {
      if (excluded[static_cast<size_t>(r)]) continue;
      if (gamma[r] > 1e-9 || rows[static_cast<size_t>(r)].b > -1e-9) active.push_back(r);
    }
    qp::AuxiliaryQp eq_step;
    eq_step.H = obj.hess;
    eq_step.c = obj.grad;
    for (int r : active) {
      qp::Row row = rows[static_cast<size_t>(r)];
      row.kind = qp::RowKind::equality;
      eq_step.rows.push_back(std::move(row));
    }
    const qp::QpSolution ps = qp::solve(eq_step, opts.qp_opts);
    if (ps.status != qp::SolveStatus::optimal) break;

    SvmModel trial = m;
    trial.set_theta(m.theta() + ps.delta_theta);
    Vector gamma_trial = Vector::Zero(2 * mk);
    bool dual_ok = true;
    for (size_t k = 0; k < active.size(); ++k) {
      gamma_trial[active[k]] = ps.multipliers[static_cast<Eigen::Index>(k)];
      if (ps.multipliers[static_cast<Eigen::Index>(k)] < -1e-9) {
        excluded[static_cast<size_t>(active[k])] = 1;
        dual_ok = false;
      }
    }
    const SmoothObjective obj_trial = eval_objective(data, trial, eta_n);
    const double resid_trial =
        train_kkt_residual(obj_trial, constraint_rows(data, trial), gamma_trial);
    if (resid_trial < residual) {
      m = trial;
      gamma = gamma_trial;
      residual = resid_trial;
    } else if (dual_ok) {
      break;  // no further improvement available from this active set
    }
  }

  if (residual > std::max(opts.tol, 1e-8)) {
    throw std::runtime_error("svm train: no convergence after " + std::to_string(iter) +
                             " iterations (residual " + std::to_string(residual) + ")");
  }

  tr.iterations = iter + 1;
  tr.kkt_residual = residual;
  tr.objective = eval_objective(data, m, eta_n).value;
  tr.partition = partition_vectors(m, data, gamma.head(mk), gamma.tail(mk), 1e-6);

  tr.kkt.theta = m.theta();
  tr.kkt.lambda_g = gamma;
  tr.kkt.lambda_h = Vector();
  tr.kkt.stationarity_tol = residual;
  tr.kkt.feasibility_tol = residual;
  tr.kkt.complementarity_tol = residual;
  return tr;
}

SupportPartition partition_vectors(const SvmModel& model, const Dataset& data,
                                   const Vector& alpha, const Vector& mu, double tol) {
  const int mk = static_cast<int>(model.kept.size());
  if (alpha.size() != mk || mu.size() != mk) {
    throw std::invalid_argument("partition_vectors: multiplier size mismatch");
  }
  SupportPartition part;
  part.alpha = alpha;
  part.mu = mu;
  part.tol = tol;
  for (int i = 0; i < mk; ++i) {
    const int orig = model.kept[static_cast<size_t>(i)];
    const double margin_gap =
        data.y[orig] * model.decision(data.x.row(orig).transpose()) - 1.0;
    const double a = alpha[i];
    if (a < -tol || a > model.c + tol) {
      throw std::runtime_error("partition_vectors: multiplier outside [0, C] at slot " +
                               std::to_string(i));
    }
    if (a <= tol) {
      if (std::abs(margin_gap) <= tol) {
        part.reserve_at.push_back(i);
      } else if (margin_gap > tol) {
        part.reserve_out.push_back(i);
      } else {
        throw std::runtime_error("partition_vectors: reserve point inside margin at slot " +
                                 std::to_string(i));
      }
    } else if (a >= model.c - tol) {
      if (std::abs(margin_gap) <= tol) {
        part.error_at.push_back(i);
      } else if (margin_gap < -tol) {
        part.error_in.push_back(i);
      } else {
        throw std::runtime_error("partition_vectors: error vector outside margin at slot " +
                                 std::to_string(i));
      }
    } else {
      part.margin_sv.push_back(i);
    }
  }
  return part;
}

SmoothedHingeTerms smoothed_hinge_terms(const SvmModel& model, const Dataset& data,
                                        const AuxSvmOptions& opts) {
  if (model.removed_index < 0) {
    throw std::invalid_argument("smoothed_hinge_terms: model has no removed point");
  }
  const Vector xn = data.x.row(model.removed_index).transpose();
  const double yn = data.y[model.removed_index];
  const double u = 1.0 - yn * model.decision(xn);
  const double bu = model.beta * u;

  SmoothedHingeTerms terms;
  if (opts.softplus_ratio_sigma) {
    // exp(bu) / (1 + ln(1 + exp(bu))); ill-behaved for bu >> 0.
    const double log1p_e = bu > 30.0 ? bu + std::log1p(std::exp(-bu)) : std::log1p(std::exp(bu));
    terms.sigma = std::exp(bu - std::log1p(log1p_e));
    if (!std::isfinite(terms.sigma)) {
      throw std::runtime_error(
          "smoothed_hinge_terms: the softplus-ratio sigma diverges for this margin; use the logistic form");
    }
  } else {
    terms.sigma = logistic(bu);
  }
  terms.big_m = terms.sigma * (1.0 - terms.sigma);

  const int d = model.dim();
  terms.gamma = Vector::Zero(model.n_theta());
  terms.gamma.head(d) = opts.q * model.c * yn * terms.sigma * xn;
  terms.gamma[d] = opts.q * model.c * terms.sigma * yn;
  return terms;
}

qp::AuxiliaryQp assemble_aux_svm(const SvmModel& model, const Dataset& data,
                                 const SupportPartition& part, const SmoothedHingeTerms& terms,
                                 const AuxSvmOptions& opts) {
  if (model.removed_index < 0) {
    throw std::invalid_argument("assemble_aux_svm: model has no removed point");
  }
  const int d = model.dim();
  const int mk = static_cast<int>(model.kept.size());
  const int n_theta = model.n_theta();
  const Vector xn = data.x.row(model.removed_index).transpose();
  const double k = model.c * model.beta * terms.big_m;  // eta_bar = 1

  qp::AuxiliaryQp aux;
  aux.H = Matrix::Zero(n_theta, n_theta);
  aux.H.topLeftCorner(d, d) = Matrix::Identity(d, d) + k * (xn * xn.transpose());
  aux.H.block(0, d, d, 1) = k * xn;
  aux.H.block(d, 0, 1, d) = k * xn.transpose();
  aux.H(d, d) = k;
  aux.c = -terms.gamma;

  const auto margin_kind = [&](int slot) {
    if (contains(part.reserve_out, slot)) return qp::RowKind::free_row;
    if (contains(part.reserve_at, slot)) return qp::RowKind::inequality;
    if (contains(part.error_in, slot) && !opts.e1_margin_rows_equality) {
      return qp::RowKind::free_row;
    }
    return qp::RowKind::equality;  // S, E0 and (by default) E1
  };
  const auto slack_kind = [&](int slot) {
    if (contains(part.error_in, slot)) return qp::RowKind::free_row;
    if (contains(part.error_at, slot)) return qp::RowKind::inequality;
    return qp::RowKind::equality;  // S, R0, R1
  };

  for (int i = 0; i < mk; ++i) {
    const int orig = model.kept[static_cast<size_t>(i)];
    qp::Row row;
    row.a = Vector::Zero(n_theta);
    row.a.head(d) = -data.y[orig] * data.x.row(orig).transpose();
    row.a[d] = -data.y[orig];
    row.a[d + 1 + i] = -1.0;
    row.b = 1.0 - model.xi[i] - data.y[orig] * model.decision(data.x.row(orig).transpose());
    row.kind = margin_kind(i);
    aux.rows.push_back(std::move(row));
  }
  for (int i = 0; i < mk; ++i) {
    qp::Row row;
    row.a = Vector::Zero(n_theta);
    row.a[d + 1 + i] = -1.0;
    row.b = -model.xi[i];
    row.kind = slack_kind(i);
    aux.rows.push_back(std::move(row));
  }
  return aux;
}

SvmUnlearnOutcome unlearn_svm(const SvmModel& model, const Dataset& data,
                              const SupportPartition& part, const AuxSvmOptions& opts,
                              const qp::SolverOptions& qp_opts) {
  const SmoothedHingeTerms terms = smoothed_hinge_terms(model, data, opts);
  const qp::AuxiliaryQp aux = assemble_aux_svm(model, data, part, terms, opts);
  const qp::QpSolution sol = qp::solve(aux, qp_opts);
  if (sol.status != qp::SolveStatus::optimal) {
    throw std::runtime_error(std::string("unlearn_svm: auxiliary QP failed with status ") +
                             qp::to_string(sol.status));
  }
  const int mk = static_cast<int>(model.kept.size());

  SvmUnlearnOutcome out;
  out.result.method = UnlearnMethod::aux_qp;
  out.result.qp_status = sol.status;
  out.result.delta_theta = sol.delta_theta;
  out.result.delta_lambda_g = sol.multipliers;
  out.result.delta_lambda_h = Vector();
  out.result.theta_updated = model.theta() + sol.delta_theta;
  out.result.vi_residual = sol.kkt_residual;
  out.result.damping_used = sol.damping_used;
  // Index-set view of the partition: margin rows first, slack rows after.
  for (int i : part.reserve_at) out.result.partition.weakly_active.push_back(i);
  for (int i : part.error_at) out.result.partition.weakly_active.push_back(mk + i);
  for (int i : part.reserve_out) out.result.partition.inactive.push_back(i);
  for (int i : part.error_in) out.result.partition.inactive.push_back(mk + i);

  out.model = model;
  out.model.set_theta(out.result.theta_updated);
  return out;
}

double predict_accuracy(const SvmModel& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("predict_accuracy: empty dataset");
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    if (data.y[i] * model.decision(data.x.row(i).transpose()) > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double decision_agreement(const SvmModel& a, const SvmModel& b, const Dataset& data,
                          int grid_n) {
  if (data.dim() != 2) throw std::invalid_argument("decision_agreement: 2-d data required");
  const double x_lo = data.x.col(0).minCoeff(), x_hi = data.x.col(0).maxCoeff();
  const double y_lo = data.x.col(1).minCoeff(), y_hi = data.x.col(1).maxCoeff();
  int agree = 0;
  Vector p(2);
  for (int i = 0; i < grid_n; ++i) {
    for (int j = 0; j < grid_n; ++j) {
      p[0] = x_lo + (x_hi - x_lo) * (i + 0.5) / grid_n;
      p[1] = y_lo + (y_hi - y_lo) * (j + 0.5) / grid_n;
      if ((a.decision(p) > 0.0) == (b.decision(p) > 0.0)) ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(grid_n * grid_n);
}

GenericView make_program(const Dataset& data, double c, double beta, int removed_index) {
  data.validate();
  if (removed_index < 0 || removed_index >= data.size()) {
    throw std::invalid_argument("make_program: removed_index out of range");
  }
  const int n = data.size();
  const int d = data.dim();
  std::vector<int> kept;
  for (int i = 0; i < n; ++i) {
    if (i != removed_index) kept.push_back(i);
  }
  const int mk = static_cast<int>(kept.size());
  const int n_theta = d + 1 + mk;
  std::vector<int> slot_of(static_cast<size_t>(n), -1);
  for (int s = 0; s < mk; ++s) slot_of[static_cast<size_t>(kept[static_cast<size_t>(s)])] = s;

  GenericView view;
  ConstrainedProgram& prog = view.program;
  prog.dim_theta = n_theta;
  prog.n_points = n;

  const Matrix x = data.x;
  const Vector y = data.y;
  prog.loss = [=](int i, const Vector& th) {
    if (i == removed_index) {
      const double u = 1.0 - y[i] * (th.head(d).dot(x.row(i).transpose()) + th[d]);
      return c * softplus(beta, u);
    }
    return 0.5 * th.head(d).squaredNorm() / mk + c * th[d + 1 + slot_of[static_cast<size_t>(i)]];
  };
  prog.loss_grad = [=](int i, const Vector& th) {
    Vector g = Vector::Zero(n_theta);
    if (i == removed_index) {
      const double u = 1.0 - y[i] * (th.head(d).dot(x.row(i).transpose()) + th[d]);
      const double s = logistic(beta * u);
      g.head(d) = c * s * (-y[i]) * x.row(i).transpose();
      g[d] = c * s * (-y[i]);
    } else {
      g.head(d) = th.head(d) / mk;
      g[d + 1 + slot_of[static_cast<size_t>(i)]] = c;
    }
    return g;
  };
  prog.loss_hess = [=](int i, const Vector& th) {
    Matrix h = Matrix::Zero(n_theta, n_theta);
    if (i == removed_index) {
      const double u = 1.0 - y[i] * (th.head(d).dot(x.row(i).transpose()) + th[d]);
      const double s = logistic(beta * u);
      Vector dir = Vector::Zero(d + 1);
      dir.head(d) = x.row(i).transpose();
      dir[d] = 1.0;
      h.topLeftCorner(d + 1, d + 1) = c * beta * s * (1.0 - s) * (dir * dir.transpose());
    } else {
      h.topLeftCorner(d, d) = Matrix::Identity(d, d) / mk;
    }
    return h;
  };

  for (int s = 0; s < mk; ++s) {
    const int orig = kept[static_cast<size_t>(s)];
    ConstraintFn margin;
    margin.data_indices = {orig};
    margin.value = [=](const Vector& th, const Vector&) {
      return 1.0 - th[d + 1 + s] - y[orig] * (th.head(d).dot(x.row(orig).transpose()) + th[d]);
    };
    margin.grad = [=](const Vector&, const Vector&) {
      Vector a = Vector::Zero(n_theta);
      a.head(d) = -y[orig] * x.row(orig).transpose();
      a[d] = -y[orig];
      a[d + 1 + s] = -1.0;
      return a;
    };
    prog.inequalities.push_back(std::move(margin));
  }
  for (int s = 0; s < mk; ++s) {
    ConstraintFn slack;
    slack.data_indices = {kept[static_cast<size_t>(s)]};
    slack.value = [=](const Vector& th, const Vector&) { return -th[d + 1 + s]; };
    slack.grad = [=](const Vector&, const Vector&) {
      Vector a = Vector::Zero(n_theta);
      a[d + 1 + s] = -1.0;
      return a;
    };
    prog.inequalities.push_back(std::move(slack));
  }

  std::vector<Vector> payloads;
  payloads.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vector z(d + 1);
    z.head(d) = x.row(i).transpose();
    z[d] = y[i];
    payloads.push_back(std::move(z));
  }
  view.dataset = WeightedDataset::uniform(std::move(payloads));
  view.request.removed_indices = {removed_index};
  view.request.target_weight = 0.0;
  return view;
}

void save_model(const SvmModel& model, const std::string& path) {
  nlohmann::json j;
  j["type"] = "svm";
  j["w"] = std::vector<double>(model.w.data(), model.w.data() + model.w.size());
  j["b"] = model.b;
  j["xi"] = std::vector<double>(model.xi.data(), model.xi.data() + model.xi.size());
  j["kept"] = model.kept;
  j["removed_index"] = model.removed_index;
  j["C"] = model.c;
  j["beta"] = model.beta;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << j.dump(2) << "\n";
}

SvmModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("type", "") != "svm") throw std::invalid_argument("load_model: not an svm model");
  SvmModel m;
  const std::vector<double> w = j.at("w").get<std::vector<double>>();
  const std::vector<double> xi = j.at("xi").get<std::vector<double>>();
  m.w = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  m.xi = Eigen::Map<const Vector>(xi.data(), static_cast<Eigen::Index>(xi.size()));
  m.b = j.at("b").get<double>();
  m.kept = j.at("kept").get<std::vector<int>>();
  m.removed_index = j.at("removed_index").get<int>();
  m.c = j.at("C").get<double>();
  m.beta = j.at("beta").get<double>();
  return m;
}

}  // namespace unlearn::svm
