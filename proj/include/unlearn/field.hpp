#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace unlearn::pinn {

/// Greenshields fundamental diagram parameters: v = v_f (1 - rho/rho_m).
struct GreenshieldsParams {
  double v_f = 30.0;    // free-flow speed (m/s)
  double rho_m = 0.12;  // jam density (veh/m)

  void validate() const {
    if (!(v_f > 0.0) || !(rho_m > 0.0)) {
      throw std::invalid_argument("GreenshieldsParams: v_f and rho_m must be positive");
    }
  }

  double speed_of_density(double rho) const { return v_f * (1.0 - rho / rho_m); }
  double density_of_speed(double v) const { return rho_m * (1.0 - v / v_f); }
  double flow_of_density(double rho) const { return rho * speed_of_density(rho); }
  /// Characteristic speed f'(rho).
  double wave_speed(double rho) const { return v_f * (1.0 - 2.0 * rho / rho_m); }
};

/// Uniform spatiotemporal grid over [0, L] x [0, T]; cell centers are the
/// grid points.
struct GridSpec {
  double length = 500.0;   // L (m)
  double horizon = 120.0;  // T (s)
  double dx = 12.5;        // bin width (m)
  double dt = 2.0;         // bin duration (s)

  void validate() const;

  int nx() const { return static_cast<int>(std::round(length / dx)); }
  int nt() const { return static_cast<int>(std::round(horizon / dt)); }
  int n_points() const { return nx() * nt(); }

  double x_center(int ix) const { return (ix + 0.5) * dx; }
  double t_center(int it) const { return (it + 0.5) * dt; }

  int index(int ix, int it) const { return it * nx() + ix; }
  int ix_of(int p) const { return p % nx(); }
  int it_of(int p) const { return p / nx(); }
};

/// Per-bin sums and counts, split by removal membership.
struct Bin {
  double kept_sum = 0.0;
  double removed_sum = 0.0;
  int kept_count = 0;
  int removed_count = 0;

  int total_count() const { return kept_count + removed_count; }
};

/// Binned velocity field with the observed (O) and auxiliary (A) masks.
struct BinnedVelocityField {
  GridSpec grid;
  std::vector<Bin> bins;
  std::vector<int> observed;   // grid indices of O
  std::vector<int> auxiliary;  // grid indices of A

  int n_nonempty() const {
    int n = 0;
    for (const Bin& b : bins) {
      if (b.total_count() > 0) ++n;
    }
    return n;
  }
  void validate() const;
};

/// (kept_sum + eta * removed_sum) / (kept_count + eta * removed_count).
/// Throws when the bin has no data or the effective denominator is <= 0.
double weighted_bin_speed(const Bin& bin, double eta);

/// d/d eta of the weighted mean (quotient rule).
double weighted_bin_speed_deta(const Bin& bin, double eta);

}  // namespace unlearn::pinn
