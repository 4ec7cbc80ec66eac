#pragma once

#include "unlearn/core.hpp"
#include "unlearn/qp.hpp"
#include "unlearn/unlearn.hpp"

#include <string>
#include <vector>

namespace unlearn::svm {

struct Dataset {
  Matrix x;  // n x d feature rows
  Vector y;  // labels in {-1, +1}

  int size() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
  void validate() const;
  Dataset subset(const std::vector<int>& indices) const;
};

/// Delimited text, one row per point: f1,...,fd,label(+-1).
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& data, const std::string& path);

struct SvmModel {
  Vector w;
  double b = 0.0;
  Vector xi;              // slacks of the kept points, kept order
  std::vector<int> kept;  // original indices of the kept points
  int removed_index = -1; // point carried via the smoothed hinge; -1 = none
  double c = 1.0;
  double beta = 50.0;

  double decision(const Vector& features) const { return w.dot(features) + b; }
  int dim() const { return static_cast<int>(w.size()); }
  int n_theta() const { return dim() + 1 + static_cast<int>(xi.size()); }
  Vector theta() const;  // (w, b, xi)
  void set_theta(const Vector& th);
};

/// S / E0 / E1 / R0 / R1 over kept-point slots.
struct SupportPartition {
  std::vector<int> margin_sv;    // S:  0 < alpha < C (margin = 1)
  std::vector<int> error_at;     // E0: alpha = C, margin = 1
  std::vector<int> error_in;     // E1: alpha = C, margin < 1
  std::vector<int> reserve_at;   // R0: alpha = 0, margin = 1
  std::vector<int> reserve_out;  // R1: alpha = 0, margin > 1
  Vector alpha, mu;
  double tol = 1e-6;
};

struct TrainOptions {
  int max_iter = 200;
  double tol = 1e-10;
  qp::SolverOptions qp_opts;
};

struct TrainResult {
  SvmModel model;
  SupportPartition partition;
  KktPoint kkt;  // theta = (w, b, xi); lambda_g = [alpha; mu]
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Trains the data-weighted SVM: hard margin constraints for kept points,
/// eta_n-scaled Softplus-smoothed hinge for the removed point. With
/// removed_index = -1 (or eta_n = 0) the problem is the plain soft-margin
/// QP. Sequential quadratic steps on the smooth objective; constraints
/// are linear so feasibility is preserved exactly.
TrainResult train(const Dataset& data, double c, double beta, int removed_index, double eta_n,
                  const TrainOptions& opts = {});

SupportPartition partition_vectors(const SvmModel& model, const Dataset& data,
                                   const Vector& alpha, const Vector& mu, double tol = 1e-6);

struct SmoothedHingeTerms {
  double sigma = 0.0;
  double big_m = 0.0;  // sigma * (1 - sigma)
  Vector gamma;        // (q C y_N sigma x_N, q C sigma y_N, 0)
};

struct AuxSvmOptions {
  // true evaluates sigma as exp(bu) / (1 + ln(1 + exp(bu))) instead of
  // the logistic derivative of the smoothed hinge. That ratio exceeds 1
  // once the removed point sits slightly inside the margin, flipping
  // M = sigma(1-sigma) negative, so it is off by default; the logistic
  // form also reproduces the generic pipeline exactly. The (Delta b)^2
  // curvature always carries the single C*beta*M coefficient: that is
  // what the stationarity system and the Delta w recovery identity
  // require.
  bool softplus_ratio_sigma = false;
  bool e1_margin_rows_equality = true;
  double q = -1.0;  // perturbation direction of eta_N
};

SmoothedHingeTerms smoothed_hinge_terms(const SvmModel& model, const Dataset& data,
                                        const AuxSvmOptions& opts = {});

qp::AuxiliaryQp assemble_aux_svm(const SvmModel& model, const Dataset& data,
                                 const SupportPartition& part, const SmoothedHingeTerms& terms,
                                 const AuxSvmOptions& opts = {});

struct SvmUnlearnOutcome {
  SvmModel model;  // theta_bar + delta_theta
  UnlearnResult result;
};

SvmUnlearnOutcome unlearn_svm(const SvmModel& model, const Dataset& data,
                              const SupportPartition& part, const AuxSvmOptions& opts = {},
                              const qp::SolverOptions& qp_opts = {});

double predict_accuracy(const SvmModel& model, const Dataset& data);

/// Sign agreement of two linear decision rules on an n x n grid over the
/// bounding box of 2-d data.
double decision_agreement(const SvmModel& a, const SvmModel& b, const Dataset& data,
                          int grid_n = 100);

/// The weighted SVM as a generic constrained program (true logistic
/// derivatives), for the module-agnostic unlearning pipeline.
struct GenericView {
  ConstrainedProgram program;
  WeightedDataset dataset;
  RemovalRequest request;
};
GenericView make_program(const Dataset& data, double c, double beta, int removed_index);

void save_model(const SvmModel& model, const std::string& path);
SvmModel load_model(const std::string& path);

}  // namespace unlearn::svm
