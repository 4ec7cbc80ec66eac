#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace unlearn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dataset with a per-point weight in [0,1]. Weight 1 means the point is
/// fully present, 0 means removed. The payloads are opaque to this layer;
/// model code interprets them.
struct WeightedDataset {
  std::vector<Vector> points;
  Vector weights;

  WeightedDataset() = default;
  WeightedDataset(std::vector<Vector> pts, Vector w);

  /// All weights set to 1 (the unweighted dataset).
  static WeightedDataset uniform(std::vector<Vector> pts);

  int size() const { return static_cast<int>(points.size()); }
};

/// A request to down-weight the points in K to `target_weight`
/// (0 = full removal).
struct RemovalRequest {
  std::vector<int> removed_indices;  // K, 0-based
  double target_weight = 0.0;

  /// Perturbation direction q: one entry per removed index, each equal to
  /// target_weight - 1.
  Vector direction() const;

  int count() const { return static_cast<int>(removed_indices.size()); }

  /// Throws std::invalid_argument if K is empty, out of range, has
  /// duplicates, or target_weight is outside [0,1).
  void validate(int n) const;
};

/// Penalty configuration for folding removed-point constraints into the
/// objective: phi(C, t) = C * t^p for t > 0, else 0.
struct PenaltyConfig {
  double c_g = 1e3;  // inequality penalty constant
  double c_h = 1e3;  // equality penalty constant
  int exponent = 3;  // p >= 2; p = 3 keeps phi C^2 at t = 0
};

/// phi(C, t). Rejects C <= 0 and p < 2.
double penalty_eval(const PenaltyConfig& cfg, double c, double t);

/// d phi / dt and d^2 phi / dt^2.
double penalty_deriv(const PenaltyConfig& cfg, double c, double t);
double penalty_deriv2(const PenaltyConfig& cfg, double c, double t);

/// Weight vector eta^r for a request: target_weight on K, 1 elsewhere.
Vector weights_for_request(int n, const RemovalRequest& req);

/// One constraint g_j (or h_t) over a subset of the data. Value and
/// gradients receive the full weight vector so folded constraints can be
/// evaluated at down-weighted data. Callbacks other than `value` may be
/// null: a null `grad` forces finite differences, a null `hess` means the
/// constraint is affine in theta, and null eta-derivatives mean the
/// analytic mode is unavailable once the constraint is folded.
struct ConstraintFn {
  std::vector<int> data_indices;  // I_j, 0-based into the dataset
  std::function<double(const Vector& theta, const Vector& eta)> value;
  std::function<Vector(const Vector& theta, const Vector& eta)> grad;
  std::function<Matrix(const Vector& theta, const Vector& eta)> hess;
  std::function<double(const Vector& theta, const Vector& eta, int k)> value_deta;
  std::function<Vector(const Vector& theta, const Vector& eta, int k)> grad_deta;

  bool touches(int point_index) const;
  bool touches_any(const std::vector<int>& indices) const;
};

/// Constrained learning problem: sum of per-point losses subject to
/// inequality and equality constraints over data subsets.
struct ConstrainedProgram {
  int dim_theta = 0;
  int n_points = 0;
  std::function<double(int i, const Vector& theta)> loss;
  std::function<Vector(int i, const Vector& theta)> loss_grad;  // null -> FD only
  std::function<Matrix(int i, const Vector& theta)> loss_hess;  // null -> FD only
  std::vector<ConstraintFn> inequalities;
  std::vector<ConstraintFn> equalities;

  /// Throws if constraint index sets reference points outside [0, n_points).
  void validate() const;
};

/// Primal-dual point with the residuals the trainer achieved.
struct KktPoint {
  Vector theta;
  Vector lambda_g;  // multipliers of the hard inequality constraints
  Vector lambda_h;  // multipliers of the hard equality constraints
  double stationarity_tol = 1e-8;
  double feasibility_tol = 1e-8;
  double complementarity_tol = 1e-8;
};

/// The data-weighted penalized problem: removed-point losses scaled by
/// eta, constraints touching removed points folded into the objective via
/// phi, everything else kept hard. Built once, evaluated as a pure
/// function of (eta_K, theta).
class WeightedProblem {
 public:
  WeightedProblem(ConstrainedProgram prog, WeightedDataset data, RemovalRequest req,
                  PenaltyConfig pen);

  const ConstrainedProgram& program() const { return prog_; }
  const WeightedDataset& dataset() const { return data_; }
  const RemovalRequest& request() const { return req_; }
  const PenaltyConfig& penalty() const { return pen_; }

  /// J_R / T_R: constraints that touch a removed point (folded).
  const std::vector<int>& folded_inequalities() const { return folded_ineq_; }
  const std::vector<int>& folded_equalities() const { return folded_eq_; }
  /// The complement: constraints that stay hard.
  const std::vector<int>& hard_inequalities() const { return hard_ineq_; }
  const std::vector<int>& hard_equalities() const { return hard_eq_; }

  int removed_count() const { return req_.count(); }
  int dim_theta() const { return prog_.dim_theta; }

  /// Full-length weight vector: dataset weights with the K entries
  /// replaced by eta_K (ordered as in the request).
  Vector full_eta(const Vector& eta_K) const;

  /// Weighted penalized objective L(eta_K, theta) without multiplier terms.
  double objective(const Vector& eta_K, const Vector& theta) const;
  double operator()(const Vector& eta_K, const Vector& theta) const {
    return objective(eta_K, theta);
  }

  /// Objective plus hard-constraint multiplier terms.
  double lagrangian(const Vector& eta_K, const Vector& theta, const Vector& lambda_g,
                    const Vector& lambda_h) const;

  /// Hard-constraint values at (theta, eta).
  double hard_inequality_value(int slot, const Vector& eta_K, const Vector& theta) const;
  double hard_equality_value(int slot, const Vector& eta_K, const Vector& theta) const;

 private:
  ConstrainedProgram prog_;
  WeightedDataset data_;
  RemovalRequest req_;
  PenaltyConfig pen_;
  std::vector<int> folded_ineq_, folded_eq_;
  std::vector<int> hard_ineq_, hard_eq_;
};

/// Identifies J_R / T_R and builds the weighted penalized objective.
WeightedProblem assemble_weighted_objective(ConstrainedProgram prog, WeightedDataset data,
                                            RemovalRequest req, PenaltyConfig pen);

}  // namespace unlearn
