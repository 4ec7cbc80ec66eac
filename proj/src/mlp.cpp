#include "unlearn/mlp.hpp"

#include "unlearn/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace unlearn::pinn {

namespace {

double logistic(double u) {
  if (u >= 0.0) {
    const double e = std::exp(-u);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

MlpModel::MlpModel(std::vector<int> layer_sizes, double v_f, double x_lo, double x_hi,
                   double t_lo, double t_hi)
    : sizes_(std::move(layer_sizes)), v_f_(v_f), x_lo_(x_lo), x_hi_(x_hi), t_lo_(t_lo),
      t_hi_(t_hi) {
  if (sizes_.size() < 2 || sizes_.front() != 2 || sizes_.back() != 1) {
    throw std::invalid_argument("MlpModel: layer sizes must run 2 -> ... -> 1");
  }
  for (int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("MlpModel: nonpositive layer size");
  }
  if (!(v_f_ > 0.0)) throw std::invalid_argument("MlpModel: v_f must be positive");
  if (!(x_hi_ > x_lo_) || !(t_hi_ > t_lo_)) {
    throw std::invalid_argument("MlpModel: degenerate input range");
  }
  int off = 0;
  for (int l = 0; l < n_layers(); ++l) {
    w_off_.push_back(off);
    off += sizes_[l] * sizes_[l + 1];
    b_off_.push_back(off);
    off += sizes_[l + 1];
  }
  params_ = Vector::Zero(off);
}

int MlpModel::param_count(const std::vector<int>& layer_sizes) {
  int n = 0;
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
  }
  return n;
}

void MlpModel::set_params(const Vector& p) {
  if (p.size() != params_.size()) throw std::invalid_argument("MlpModel: parameter size mismatch");
  params_ = p;
}

void MlpModel::init_random(std::uint64_t seed) {
  rng::Stream stream(seed, "init");
  for (int l = 0; l < n_layers(); ++l) {
    const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
    const double scale = std::sqrt(6.0 / (fan_in + fan_out));
    for (int k = 0; k < fan_in * fan_out; ++k) {
      params_[w_off_[l] + k] = stream.uniform(-scale, scale);
    }
    for (int k = 0; k < fan_out; ++k) params_[b_off_[l] + k] = 0.0;
  }
}

MlpModel::PointEval MlpModel::forward_point(double x, double t, bool tangents,
                                            Workspace& ws) const {
  const int nl = n_layers();
  const size_t slots = static_cast<size_t>(nl) + 1;
  if (ws.a.size() != slots) {
    ws.a.resize(slots);
    ws.z.resize(slots);
    ws.ax.resize(slots);
    ws.zx.resize(slots);
    ws.at.resize(slots);
    ws.zt.resize(slots);
    ws.bar_z.resize(slots);
    ws.bar_zx.resize(slots);
    ws.bar_zt.resize(slots);
  }
  ws.tangents = tangents;

  const double sx = 2.0 / (x_hi_ - x_lo_);
  const double st = 2.0 / (t_hi_ - t_lo_);
  ws.a[0] = Vector(2);
  ws.a[0][0] = sx * (x - x_lo_) - 1.0;
  ws.a[0][1] = st * (t - t_lo_) - 1.0;
  if (tangents) {
    ws.ax[0] = Vector(2);
    ws.ax[0] << sx, 0.0;
    ws.at[0] = Vector(2);
    ws.at[0] << 0.0, st;
  }

  for (int l = 1; l <= nl; ++l) {
    const int rows = sizes_[l], cols = sizes_[l - 1];
    Eigen::Map<const Matrix> w(params_.data() + w_off_[l - 1], rows, cols);
    Eigen::Map<const Vector> b(params_.data() + b_off_[l - 1], rows);
    ws.z[l] = w * ws.a[l - 1] + b;
    if (tangents) {
      ws.zx[l] = w * ws.ax[l - 1];
      ws.zt[l] = w * ws.at[l - 1];
    }
    if (l < nl) {
      ws.a[l] = ws.z[l].array().tanh();
      if (tangents) {
        const auto phi1 = (1.0 - ws.a[l].array().square());
        ws.ax[l] = (phi1 * ws.zx[l].array()).matrix();
        ws.at[l] = (phi1 * ws.zt[l].array()).matrix();
      }
    } else {
      ws.a[l] = ws.z[l];
      if (tangents) {
        ws.ax[l] = ws.zx[l];
        ws.at[l] = ws.zt[l];
      }
    }
  }

  ws.raw = ws.z[nl][0];
  PointEval out;
  const double s = logistic(ws.raw);
  out.v = v_f_ * s;
  if (tangents) {
    ws.raw_x = ws.zx[nl][0];
    ws.raw_t = ws.zt[nl][0];
    const double tp = v_f_ * s * (1.0 - s);
    out.v_x = tp * ws.raw_x;
    out.v_t = tp * ws.raw_t;
  }
  return out;
}

void MlpModel::backprop_into(double cv, double cvx, double cvt, Workspace& ws,
                             Vector& grad) const {
  const int nl = n_layers();
  if (grad.size() != params_.size()) {
    throw std::invalid_argument("backprop_into: gradient size mismatch");
  }
  const bool need_tangents = cvx != 0.0 || cvt != 0.0;
  if (need_tangents && !ws.tangents) {
    throw std::invalid_argument("backprop_into: forward pass was run without tangents");
  }

  const double s = logistic(ws.raw);
  const double tp = v_f_ * s * (1.0 - s);
  const double tpp = tp * (1.0 - 2.0 * s);

  // Seeds at the linear output layer.
  double seed_z = cv * tp;
  if (need_tangents) seed_z += tpp * (cvx * ws.raw_x + cvt * ws.raw_t);
  ws.bar_z[nl] = Vector::Constant(1, seed_z);
  if (ws.tangents) {
    ws.bar_zx[nl] = Vector::Constant(1, cvx * tp);
    ws.bar_zt[nl] = Vector::Constant(1, cvt * tp);
  }

  const bool track_tangents = ws.tangents && need_tangents;
  for (int l = nl; l >= 1; --l) {
    const int rows = sizes_[l], cols = sizes_[l - 1];
    Eigen::Map<const Matrix> w(params_.data() + w_off_[l - 1], rows, cols);
    Eigen::Map<Matrix> w_grad(grad.data() + w_off_[l - 1], rows, cols);
    Eigen::Map<Vector> b_grad(grad.data() + b_off_[l - 1], rows);

    w_grad.noalias() += ws.bar_z[l] * ws.a[l - 1].transpose();
    b_grad += ws.bar_z[l];
    if (track_tangents) {
      w_grad.noalias() += ws.bar_zx[l] * ws.ax[l - 1].transpose();
      w_grad.noalias() += ws.bar_zt[l] * ws.at[l - 1].transpose();
    }
    if (l == 1) break;

    const Vector bar_a = w.transpose() * ws.bar_z[l];
    if (track_tangents) {
      const Vector bar_ax = w.transpose() * ws.bar_zx[l];
      const Vector bar_at = w.transpose() * ws.bar_zt[l];
      const auto a_prev = ws.a[l - 1].array();
      const auto phi1 = 1.0 - a_prev.square();
      const auto phi2 = -2.0 * a_prev * phi1;
      ws.bar_z[l - 1] = (phi1 * bar_a.array() + phi2 * ws.zx[l - 1].array() * bar_ax.array() +
                         phi2 * ws.zt[l - 1].array() * bar_at.array())
                            .matrix();
      ws.bar_zx[l - 1] = (phi1 * bar_ax.array()).matrix();
      ws.bar_zt[l - 1] = (phi1 * bar_at.array()).matrix();
    } else {
      const auto phi1 = 1.0 - ws.a[l - 1].array().square();
      ws.bar_z[l - 1] = (phi1 * bar_a.array()).matrix();
    }
  }
}

double MlpModel::value(double x, double t) const {
  Workspace ws;
  return forward_point(x, t, false, ws).v;
}

MlpModel::PointEval MlpModel::value_with_derivs(double x, double t) const {
  Workspace ws;
  return forward_point(x, t, true, ws);
}

MlpModel::PointGrads MlpModel::full_eval(double x, double t) const {
  Workspace ws;
  PointGrads out;
  out.eval = forward_point(x, t, true, ws);
  out.dv = Vector::Zero(n_params());
  out.dvx = Vector::Zero(n_params());
  out.dvt = Vector::Zero(n_params());
  backprop_into(1.0, 0.0, 0.0, ws, out.dv);
  backprop_into(0.0, 1.0, 0.0, ws, out.dvx);
  backprop_into(0.0, 0.0, 1.0, ws, out.dvt);
  return out;
}

}  // namespace unlearn::pinn
