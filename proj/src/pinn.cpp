#include "unlearn/pinn.hpp"

#include "unlearn/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <cmath>
#include <stdexcept>

namespace unlearn::pinn {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

double lwr_residual(const MlpModel& model, const GreenshieldsParams& params, double x,
                    double t) {
  const MlpModel::PointEval e = model.value_with_derivs(x, t);
  if (!std::isfinite(e.v) || !std::isfinite(e.v_x) || !std::isfinite(e.v_t)) {
    throw std::runtime_error("lwr_residual: non-finite network output");
  }
  return e.v_t + (2.0 * e.v - params.v_f) * e.v_x;
}

PinnObjective::PinnObjective(BinnedVelocityField field, GreenshieldsParams params,
                             double lambda_phys)
    : field_(std::move(field)), params_(params), lambda_phys_(lambda_phys) {
  params_.validate();
  field_.validate();
  if (field_.observed.empty()) throw std::invalid_argument("PinnObjective: observed set is empty");
  if (field_.auxiliary.empty()) {
    throw std::invalid_argument("PinnObjective: auxiliary set is empty");
  }
  if (!(lambda_phys_ >= 0.0)) throw std::invalid_argument("PinnObjective: negative lambda_phys");
}

double PinnObjective::data_loss(const MlpModel& m, double eta) const {
  MlpModel::Workspace ws;
  double sum = 0.0;
  for (int p : field_.observed) {
    const double x = field_.grid.x_center(field_.grid.ix_of(p));
    const double t = field_.grid.t_center(field_.grid.it_of(p));
    const double v = m.forward_point(x, t, false, ws).v;
    const double vw = weighted_bin_speed(field_.bins[static_cast<size_t>(p)], eta);
    sum += (v - vw) * (v - vw);
  }
  return sum;
}

double PinnObjective::physics_sq_sum(const MlpModel& m) const {
  MlpModel::Workspace ws;
  double sum = 0.0;
  for (int p : field_.auxiliary) {
    const double x = field_.grid.x_center(field_.grid.ix_of(p));
    const double t = field_.grid.t_center(field_.grid.it_of(p));
    const MlpModel::PointEval e = m.forward_point(x, t, true, ws);
    const double res = e.v_t + (2.0 * e.v - params_.v_f) * e.v_x;
    sum += res * res;
  }
  return sum;
}

double PinnObjective::loss(const MlpModel& m, double eta) const {
  const double value = data_loss(m, eta) + lambda_phys_ * physics_sq_sum(m);
  if (!std::isfinite(value)) throw std::runtime_error("PinnObjective: non-finite loss");
  return value;
}

Vector PinnObjective::gradient(const MlpModel& m, double eta) const {
  Vector grad = Vector::Zero(m.n_params());
  MlpModel::Workspace ws;
  for (int p : field_.observed) {
    const double x = field_.grid.x_center(field_.grid.ix_of(p));
    const double t = field_.grid.t_center(field_.grid.it_of(p));
    const double v = m.forward_point(x, t, false, ws).v;
    const double vw = weighted_bin_speed(field_.bins[static_cast<size_t>(p)], eta);
    m.backprop_into(2.0 * (v - vw), 0.0, 0.0, ws, grad);
  }
  for (int p : field_.auxiliary) {
    const double x = field_.grid.x_center(field_.grid.ix_of(p));
    const double t = field_.grid.t_center(field_.grid.it_of(p));
    const MlpModel::PointEval e = m.forward_point(x, t, true, ws);
    const double res = e.v_t + (2.0 * e.v - params_.v_f) * e.v_x;
    const double c = 2.0 * lambda_phys_ * res;
    m.backprop_into(c * 2.0 * e.v_x, c * (2.0 * e.v - params_.v_f), c, ws, grad);
  }
  if (!grad.allFinite()) throw std::runtime_error("PinnObjective: non-finite gradient");
  return grad;
}

Vector PinnObjective::mixed_column(const MlpModel& m, double eta) const {
  Vector col = Vector::Zero(m.n_params());
  MlpModel::Workspace ws;
  for (int p : field_.observed) {
    const Bin& bin = field_.bins[static_cast<size_t>(p)];
    if (bin.removed_count == 0) continue;
    const double dvw = weighted_bin_speed_deta(bin, eta);
    if (dvw == 0.0) continue;
    const double x = field_.grid.x_center(field_.grid.ix_of(p));
    const double t = field_.grid.t_center(field_.grid.it_of(p));
    m.forward_point(x, t, false, ws);
    m.backprop_into(-2.0 * dvw, 0.0, 0.0, ws, col);
  }
  return col;
}

Vector PinnObjective::hvp(const MlpModel& m, double eta, const Vector& v, double step) const {
  if (v.size() != m.params().size()) throw std::invalid_argument("PinnObjective::hvp: size");
  const double nv = v.norm();
  if (nv == 0.0) return Vector::Zero(v.size());
  const double h = step / nv;
  MlpModel shifted = m;
  shifted.set_params(m.params() + h * v);
  const Vector gp = gradient(shifted, eta);
  shifted.set_params(m.params() - h * v);
  const Vector gm = gradient(shifted, eta);
  return (gp - gm) / (2.0 * h);
}

Matrix PinnObjective::dense_hessian(const MlpModel& m, double eta, double step) const {
  const int n = m.n_params();
  Matrix h(n, n);
  Vector e = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    e[i] = 1.0;
    h.col(i) = hvp(m, eta, e, step);
    e[i] = 0.0;
  }
  return 0.5 * (h + h.transpose());
}

PinnObjective build_objective(BinnedVelocityField field, GreenshieldsParams params,
                              double lambda_phys) {
  return PinnObjective(std::move(field), params, lambda_phys);
}

BinnedVelocityField strip_removed(const BinnedVelocityField& field) {
  BinnedVelocityField out = field;
  for (Bin& b : out.bins) {
    b.removed_sum = 0.0;
    b.removed_count = 0;
  }
  out.observed.clear();
  for (int p : field.observed) {
    if (field.bins[static_cast<size_t>(p)].kept_count > 0) out.observed.push_back(p);
  }
  return out;
}

TrainLog train_pinn(const PinnObjective& obj, MlpModel& model, const TrainConfig& cfg) {
  if (cfg.iterations <= 0) throw std::invalid_argument("train_pinn: iterations must be positive");
  const double t0 = now_seconds();
  const int n = model.n_params();
  Vector m1 = Vector::Zero(n), m2 = Vector::Zero(n);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double lr_min = cfg.lr * cfg.lr_min_factor;

  TrainLog log;
  Vector theta = model.params();
  double loss_value = 0.0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    const Vector g = obj.gradient(model, cfg.eta);
    m1 = beta1 * m1 + (1.0 - beta1) * g;
    m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1, it);
    const double bc2 = 1.0 - std::pow(beta2, it);
    const double lr =
        lr_min + 0.5 * (cfg.lr - lr_min) *
                     (1.0 + std::cos(M_PI * static_cast<double>(it) / cfg.iterations));
    theta = model.params() -
            (lr * (m1 / bc1).array() / ((m2 / bc2).array().sqrt() + eps)).matrix();
    model.set_params(theta);
    if (it % std::max(1, cfg.log_every) == 0 || it == cfg.iterations) {
      loss_value = obj.loss(model, cfg.eta);
      if (!std::isfinite(loss_value)) throw std::runtime_error("train_pinn: loss diverged");
      log.history.emplace_back(it, loss_value);
    }
  }
  log.final_loss = obj.loss(model, cfg.eta);
  log.iterations = cfg.iterations;
  log.seconds = now_seconds() - t0;
  if (cfg.target_loss > 0.0 && log.final_loss > cfg.target_loss) {
    throw std::runtime_error("train_pinn: iteration budget exhausted at loss " +
                             std::to_string(log.final_loss));
  }
  return log;
}

std::pair<MlpModel, TrainLog> train_pinn_fresh(const PinnObjective& obj, const TrainConfig& cfg) {
  const GridSpec& grid = obj.field().grid;
  MlpModel model(cfg.layer_sizes, obj.params().v_f, 0.0, grid.length, 0.0, grid.horizon);
  model.init_random(cfg.seed);
  TrainLog log = train_pinn(obj, model, cfg);
  return {std::move(model), std::move(log)};
}

PinnUnlearnOutcome unlearn_pinn(const MlpModel& model, const PinnObjective& obj,
                                const PinnUnlearnConfig& cfg) {
  const double t0 = now_seconds();
  const int n = model.n_params();

  diff::DerivativeBundle bundle;
  bundle.grad_theta = obj.gradient(model, 1.0);
  bundle.mixed_theta_eta = obj.mixed_column(model, 1.0);

  UnlearnOptions opts;
  opts.dense_dim_max = cfg.dense_dim_max;
  opts.cg_tol = cfg.cg_tol;
  opts.cg_max_iter = cfg.cg_max_iter;

  PinnUnlearnOutcome out;
  if (n <= cfg.dense_dim_max) {
    const double h0 = now_seconds();
    Matrix hess = obj.dense_hessian(model, 1.0, cfg.hvp_step);
    out.hessian_seconds = now_seconds() - h0;
    opts.initial_damping = cfg.damping_abs >= 0.0
                               ? cfg.damping_abs
                               : cfg.damping_rel * hess.diagonal().cwiseAbs().mean();
    bundle.hess_dense = std::move(hess);
    bundle.hvp = [&obj, &model](const Vector& v) { return obj.hvp(model, 1.0, v, 1e-4); };
  } else {
    if (cfg.damping_abs >= 0.0) {
      opts.initial_damping = cfg.damping_abs;
    } else {
      // Rayleigh-quotient probes stand in for the diagonal mean.
      rng::Stream probe(0x9e3779b97f4a7c15ull, "pinn-damping");
      double est = 0.0;
      for (int k = 0; k < 3; ++k) {
        Vector z(n);
        for (int i = 0; i < n; ++i) z[i] = probe.uniform() < 0.5 ? -1.0 : 1.0;
        est += std::abs(z.dot(obj.hvp(model, 1.0, z, cfg.hvp_step))) / z.squaredNorm();
      }
      opts.initial_damping = cfg.damping_rel * std::max(est / 3.0, 1e-8);
    }
    const double step = cfg.hvp_step;
    const PinnObjective* obj_ptr = &obj;
    const MlpModel* model_ptr = &model;
    bundle.hvp = [obj_ptr, model_ptr, step](const Vector& v) {
      return obj_ptr->hvp(*model_ptr, 1.0, v, step);
    };
  }

  RemovalRequest req;
  req.removed_indices = {0};
  req.target_weight = cfg.target_weight;
  out.result = influence_unconstrained(bundle, req, opts);
  out.result.theta_updated = model.params() + out.result.delta_theta;

  out.model = model;
  out.model.set_params(out.result.theta_updated);
  out.total_seconds = now_seconds() - t0;
  return out;
}

FieldMetrics field_metrics(const MlpModel& model, const PinnObjective& obj,
                           const std::vector<double>& truth, double eta) {
  const BinnedVelocityField& field = obj.field();
  if (static_cast<int>(truth.size()) != field.grid.n_points()) {
    throw std::invalid_argument("field_metrics: truth size != grid size");
  }
  FieldMetrics metrics;
  MlpModel::Workspace ws;
  double abs_sum = 0.0;
  int used = 0;
  for (int p : field.observed) {
    const Bin& bin = field.bins[static_cast<size_t>(p)];
    const double denom = bin.kept_count + eta * bin.removed_count;
    if (!(denom > 0.0)) continue;
    const double x = field.grid.x_center(field.grid.ix_of(p));
    const double t = field.grid.t_center(field.grid.it_of(p));
    abs_sum += std::abs(model.value(x, t) - weighted_bin_speed(bin, eta));
    ++used;
  }
  metrics.observed_used = used;
  metrics.data_mae = used > 0 ? abs_sum / used : 0.0;

  double phys_sum = 0.0;
  for (int p : field.auxiliary) {
    const double x = field.grid.x_center(field.grid.ix_of(p));
    const double t = field.grid.t_center(field.grid.it_of(p));
    const MlpModel::PointEval e = model.forward_point(x, t, true, ws);
    phys_sum += std::abs(e.v_t + (2.0 * e.v - obj.params().v_f) * e.v_x);
  }
  metrics.physics_mae =
      field.auxiliary.empty() ? 0.0 : phys_sum / static_cast<double>(field.auxiliary.size());

  double num = 0.0, den = 0.0;
  for (int p = 0; p < field.grid.n_points(); ++p) {
    const double x = field.grid.x_center(field.grid.ix_of(p));
    const double t = field.grid.t_center(field.grid.it_of(p));
    const double v = model.value(x, t);
    const double tr = truth[static_cast<size_t>(p)];
    num += (v - tr) * (v - tr);
    den += tr * tr;
  }
  metrics.rel_l2 = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return metrics;
}

std::vector<double> predict_grid(const MlpModel& model, const GridSpec& grid) {
  std::vector<double> out(static_cast<size_t>(grid.n_points()));
  MlpModel::Workspace ws;
  for (int p = 0; p < grid.n_points(); ++p) {
    const double x = grid.x_center(grid.ix_of(p));
    const double t = grid.t_center(grid.it_of(p));
    out[static_cast<size_t>(p)] = model.forward_point(x, t, false, ws).v;
  }
  return out;
}

void save_model(const MlpModel& model, const std::string& path) {
  nlohmann::json j;
  j["type"] = "mlp";
  j["layers"] = model.layer_sizes();
  j["params"] = std::vector<double>(model.params().data(),
                                    model.params().data() + model.params().size());
  j["v_f"] = model.v_f();
  j["x_lo"] = model.x_lo();
  j["x_hi"] = model.x_hi();
  j["t_lo"] = model.t_lo();
  j["t_hi"] = model.t_hi();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("pinn save_model: cannot open " + path);
  out << j.dump(2) << "\n";
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("pinn load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("type", "") != "mlp") throw std::invalid_argument("pinn load_model: not an mlp model");
  MlpModel model(j.at("layers").get<std::vector<int>>(), j.at("v_f").get<double>(),
                 j.at("x_lo").get<double>(), j.at("x_hi").get<double>(),
                 j.at("t_lo").get<double>(), j.at("t_hi").get<double>());
  const std::vector<double> p = j.at("params").get<std::vector<double>>();
  model.set_params(Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size())));
  return model;
}

}  // namespace unlearn::pinn
