#pragma once

#include "unlearn/core.hpp"

#include <cstdint>
#include <vector>

namespace unlearn::pinn {

/// Fully connected tanh network mapping (x, t) to a speed in [0, v_f].
/// Inputs are affinely scaled to [-1, 1]^2 and the raw output passes
/// through v_f * logistic. Spatial/temporal partials are carried through
/// the forward pass as tangents, so their parameter gradients come out of
/// one reverse sweep per point.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(std::vector<int> layer_sizes, double v_f, double x_lo, double x_hi, double t_lo,
           double t_hi);

  static int param_count(const std::vector<int>& layer_sizes);

  int n_params() const { return static_cast<int>(params_.size()); }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  const Vector& params() const { return params_; }
  void set_params(const Vector& p);
  double v_f() const { return v_f_; }
  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }
  double t_lo() const { return t_lo_; }
  double t_hi() const { return t_hi_; }

  /// Xavier-uniform weights, zero biases; deterministic per seed.
  void init_random(std::uint64_t seed);

  struct PointEval {
    double v = 0.0;
    double v_x = 0.0;  // physical-space partials
    double v_t = 0.0;
  };

  /// Scratch reused across points; owned by the caller so concurrent
  /// evaluations stay independent.
  struct Workspace {
    std::vector<Vector> a, z, ax, zx, at, zt;
    std::vector<Vector> bar_z, bar_zx, bar_zt;
    bool tangents = false;
    double raw = 0.0, raw_x = 0.0, raw_t = 0.0;
  };

  double value(double x, double t) const;
  PointEval value_with_derivs(double x, double t) const;

  /// Forward pass; when `tangents` is set the x/t tangent states are
  /// propagated too, enabling v_x / v_t and their parameter gradients.
  PointEval forward_point(double x, double t, bool tangents, Workspace& ws) const;

  /// Adds the parameter gradient of  cv*v + cvx*v_x + cvt*v_t  to `grad`.
  /// Requires a preceding forward_point on the same workspace (with
  /// tangents when cvx or cvt is nonzero).
  void backprop_into(double cv, double cvx, double cvt, Workspace& ws, Vector& grad) const;

  /// Materializes dv/dtheta, dvx/dtheta, dvt/dtheta (test oracle surface).
  struct PointGrads {
    PointEval eval;
    Vector dv, dvx, dvt;
  };
  PointGrads full_eval(double x, double t) const;

 private:
  int n_layers() const { return static_cast<int>(sizes_.size()) - 1; }

  std::vector<int> sizes_;  // {2, hidden..., 1}
  Vector params_;
  std::vector<int> w_off_, b_off_;
  double v_f_ = 30.0;
  double x_lo_ = 0.0, x_hi_ = 1.0, t_lo_ = 0.0, t_hi_ = 1.0;
};

}  // namespace unlearn::pinn
