#pragma once

#include "unlearn/field.hpp"
#include "unlearn/mlp.hpp"
#include "unlearn/unlearn.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace unlearn::pinn {

/// Velocity-form LWR residual v_t + (2 v - v_f) v_x at one point,
/// obtained from Greenshields rho = rho_m (1 - v / v_f) substituted into
/// rho_t + (rho v)_x = 0. Partials are exact through the network.
double lwr_residual(const MlpModel& model, const GreenshieldsParams& params, double x, double t);

/// Data-fit plus physics-penalty objective over a binned field:
///   sum_O (v(o;theta) - v_w(o;eta))^2 + lambda_phys * sum_A N(a;theta)^2.
class PinnObjective {
 public:
  PinnObjective(BinnedVelocityField field, GreenshieldsParams params, double lambda_phys);

  double loss(const MlpModel& m, double eta) const;
  double data_loss(const MlpModel& m, double eta) const;
  double physics_sq_sum(const MlpModel& m) const;  // sum N^2 without lambda
  Vector gradient(const MlpModel& m, double eta) const;

  /// d/d eta of the gradient: the analytic mixed block, one column since
  /// all removed trajectories share the scalar weight.
  Vector mixed_column(const MlpModel& m, double eta) const;

  /// Central difference of the analytic gradient along v.
  Vector hvp(const MlpModel& m, double eta, const Vector& v, double step) const;
  Matrix dense_hessian(const MlpModel& m, double eta, double step) const;

  const BinnedVelocityField& field() const { return field_; }
  const GreenshieldsParams& params() const { return params_; }
  double lambda_phys() const { return lambda_phys_; }

 private:
  BinnedVelocityField field_;
  GreenshieldsParams params_;
  double lambda_phys_ = 1.0;
};

/// Spec'd entry point; the objective object is the returned loss function.
PinnObjective build_objective(BinnedVelocityField field, GreenshieldsParams params,
                              double lambda_phys);

/// Kept-only view: removed sums dropped, observed bins that lose all
/// their data are removed from O.
BinnedVelocityField strip_removed(const BinnedVelocityField& field);

struct TrainConfig {
  std::vector<int> layer_sizes = {2, 32, 32, 1};
  int iterations = 6000;
  double lr = 8e-3;
  double lr_min_factor = 0.02;  // cosine anneal floor
  std::uint64_t seed = 1;
  double eta = 1.0;
  int log_every = 500;
  double target_loss = 0.0;  // 0 disables the budget check
};

struct TrainLog {
  std::vector<std::pair<int, double>> history;
  double final_loss = 0.0;
  double seconds = 0.0;
  int iterations = 0;
};

/// Full-batch Adam with cosine-annealed step size; deterministic given
/// (config, seed) on one platform. Throws on NaN loss and, when
/// target_loss is set, on an exhausted budget.
TrainLog train_pinn(const PinnObjective& obj, MlpModel& model, const TrainConfig& cfg);

/// Fresh model trained from scratch (init + train).
std::pair<MlpModel, TrainLog> train_pinn_fresh(const PinnObjective& obj, const TrainConfig& cfg);

struct PinnUnlearnConfig {
  double damping_rel = 1e-4;  // rho = damping_rel * mean |diag H|
  double damping_abs = -1.0;  // >= 0 overrides the relative estimate
  int dense_dim_max = 2000;
  double hvp_step = 1e-4;
  double cg_tol = 1e-8;
  int cg_max_iter = 0;
  double target_weight = 0.0;  // eta the removal moves toward
};

struct PinnUnlearnOutcome {
  MlpModel model;         // theta_bar + delta_theta
  UnlearnResult result;
  double hessian_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Hessian-based unlearning of the marked removal set: solves
/// (H + rho I) delta = -mixed * q, dense below dense_dim_max, conjugate
/// gradients on HVPs above it.
PinnUnlearnOutcome unlearn_pinn(const MlpModel& model, const PinnObjective& obj,
                                const PinnUnlearnConfig& cfg = {});

struct FieldMetrics {
  double data_mae = 0.0;     // vs kept-data bin means over O
  double physics_mae = 0.0;  // mean |N| over A
  double rel_l2 = 0.0;       // vs ground truth over the full grid
  int observed_used = 0;
};

FieldMetrics field_metrics(const MlpModel& model, const PinnObjective& obj,
                           const std::vector<double>& truth, double eta = 0.0);

/// Predicted speeds over the whole grid.
std::vector<double> predict_grid(const MlpModel& model, const GridSpec& grid);

void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace unlearn::pinn
