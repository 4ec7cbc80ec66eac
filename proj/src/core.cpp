#include "unlearn/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace unlearn {

WeightedDataset::WeightedDataset(std::vector<Vector> pts, Vector w)
    : points(std::move(pts)), weights(std::move(w)) {
  if (weights.size() != static_cast<Eigen::Index>(points.size())) {
    throw std::invalid_argument("WeightedDataset: weights length != points length");
  }
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0 && weights[i] <= 1.0)) {
      throw std::invalid_argument("WeightedDataset: weight outside [0,1] at index " +
                                  std::to_string(i));
    }
  }
}

WeightedDataset WeightedDataset::uniform(std::vector<Vector> pts) {
  Vector w = Vector::Ones(static_cast<Eigen::Index>(pts.size()));
  return WeightedDataset(std::move(pts), std::move(w));
}

Vector RemovalRequest::direction() const {
  return Vector::Constant(static_cast<Eigen::Index>(removed_indices.size()),
                          target_weight - 1.0);
}

void RemovalRequest::validate(int n) const {
  if (removed_indices.empty()) {
    throw std::invalid_argument("RemovalRequest: empty removal set");
  }
  // target_weight = 1 is the degenerate null request (q = 0).
  if (!(target_weight >= 0.0 && target_weight <= 1.0)) {
    throw std::invalid_argument("RemovalRequest: target_weight must lie in [0,1]");
  }
  std::unordered_set<int> seen;
  for (int k : removed_indices) {
    if (k < 0 || k >= n) {
      throw std::invalid_argument("RemovalRequest: index " + std::to_string(k) +
                                  " out of range for n=" + std::to_string(n));
    }
    if (!seen.insert(k).second) {
      throw std::invalid_argument("RemovalRequest: duplicate index " + std::to_string(k));
    }
  }
}

double penalty_eval(const PenaltyConfig& cfg, double c, double t) {
  if (!(c > 0.0)) {
    throw std::invalid_argument("penalty_eval: C must be positive");
  }
  if (cfg.exponent < 2) {
    throw std::invalid_argument("penalty_eval: exponent must be >= 2");
  }
  if (t <= 0.0) return 0.0;
  return c * std::pow(t, cfg.exponent);
}

double penalty_deriv(const PenaltyConfig& cfg, double c, double t) {
  if (t <= 0.0) return 0.0;
  return c * cfg.exponent * std::pow(t, cfg.exponent - 1);
}

double penalty_deriv2(const PenaltyConfig& cfg, double c, double t) {
  if (t <= 0.0) return 0.0;
  return c * cfg.exponent * (cfg.exponent - 1) * std::pow(t, cfg.exponent - 2);
}

Vector weights_for_request(int n, const RemovalRequest& req) {
  req.validate(n);
  Vector eta = Vector::Ones(n);
  for (int k : req.removed_indices) eta[k] = req.target_weight;
  return eta;
}

bool ConstraintFn::touches(int point_index) const {
  return std::find(data_indices.begin(), data_indices.end(), point_index) !=
         data_indices.end();
}

bool ConstraintFn::touches_any(const std::vector<int>& indices) const {
  for (int i : indices) {
    if (touches(i)) return true;
  }
  return false;
}

void ConstrainedProgram::validate() const {
  if (dim_theta <= 0) throw std::invalid_argument("ConstrainedProgram: dim_theta must be > 0");
  if (n_points < 0) throw std::invalid_argument("ConstrainedProgram: negative n_points");
  auto check = [&](const std::vector<ConstraintFn>& cs, const char* what) {
    for (const ConstraintFn& c : cs) {
      if (!c.value) {
        throw std::invalid_argument(std::string("ConstrainedProgram: ") + what +
                                    " constraint without value callback");
      }
      for (int i : c.data_indices) {
        if (i < 0 || i >= n_points) {
          throw std::invalid_argument(std::string("ConstrainedProgram: ") + what +
                                      " constraint references unknown data point " +
                                      std::to_string(i));
        }
      }
    }
  };
  check(inequalities, "inequality");
  check(equalities, "equality");
}

WeightedProblem::WeightedProblem(ConstrainedProgram prog, WeightedDataset data,
                                 RemovalRequest req, PenaltyConfig pen)
    : prog_(std::move(prog)), data_(std::move(data)), req_(std::move(req)), pen_(pen) {
  prog_.validate();
  if (prog_.n_points != data_.size()) {
    throw std::invalid_argument("WeightedProblem: dataset size != program n_points");
  }
  req_.validate(data_.size());
  if (!(pen_.c_g > 0.0 && pen_.c_h > 0.0)) {
    throw std::invalid_argument("WeightedProblem: penalty constants must be positive");
  }
  for (int j = 0; j < static_cast<int>(prog_.inequalities.size()); ++j) {
    if (prog_.inequalities[j].touches_any(req_.removed_indices)) {
      folded_ineq_.push_back(j);
    } else {
      hard_ineq_.push_back(j);
    }
  }
  for (int t = 0; t < static_cast<int>(prog_.equalities.size()); ++t) {
    if (prog_.equalities[t].touches_any(req_.removed_indices)) {
      folded_eq_.push_back(t);
    } else {
      hard_eq_.push_back(t);
    }
  }
}

Vector WeightedProblem::full_eta(const Vector& eta_K) const {
  if (eta_K.size() != req_.count()) {
    throw std::invalid_argument("WeightedProblem: eta_K size != |K|");
  }
  Vector eta = data_.weights;
  for (int k = 0; k < req_.count(); ++k) eta[req_.removed_indices[k]] = eta_K[k];
  return eta;
}

double WeightedProblem::objective(const Vector& eta_K, const Vector& theta) const {
  const Vector eta = full_eta(eta_K);
  double value = 0.0;
  for (int i = 0; i < prog_.n_points; ++i) {
    value += eta[i] * prog_.loss(i, theta);
  }
  for (int j : folded_ineq_) {
    value += penalty_eval(pen_, pen_.c_g, prog_.inequalities[j].value(theta, eta));
  }
  for (int t : folded_eq_) {
    const double h = prog_.equalities[t].value(theta, eta);
    value += penalty_eval(pen_, pen_.c_h, h) + penalty_eval(pen_, pen_.c_h, -h);
  }
  return value;
}

double WeightedProblem::lagrangian(const Vector& eta_K, const Vector& theta,
                                   const Vector& lambda_g, const Vector& lambda_h) const {
  if (lambda_g.size() != static_cast<Eigen::Index>(hard_ineq_.size()) ||
      lambda_h.size() != static_cast<Eigen::Index>(hard_eq_.size())) {
    throw std::invalid_argument("WeightedProblem: multiplier size mismatch");
  }
  const Vector eta = full_eta(eta_K);
  double value = objective(eta_K, theta);
  for (int s = 0; s < static_cast<int>(hard_ineq_.size()); ++s) {
    value += lambda_g[s] * prog_.inequalities[hard_ineq_[s]].value(theta, eta);
  }
  for (int s = 0; s < static_cast<int>(hard_eq_.size()); ++s) {
    value += lambda_h[s] * prog_.equalities[hard_eq_[s]].value(theta, eta);
  }
  return value;
}

double WeightedProblem::hard_inequality_value(int slot, const Vector& eta_K,
                                              const Vector& theta) const {
  return prog_.inequalities[hard_ineq_.at(slot)].value(theta, full_eta(eta_K));
}

double WeightedProblem::hard_equality_value(int slot, const Vector& eta_K,
                                            const Vector& theta) const {
  return prog_.equalities[hard_eq_.at(slot)].value(theta, full_eta(eta_K));
}

WeightedProblem assemble_weighted_objective(ConstrainedProgram prog, WeightedDataset data,
                                            RemovalRequest req, PenaltyConfig pen) {
  return WeightedProblem(std::move(prog), std::move(data), std::move(req), pen);
}

}  // namespace unlearn
