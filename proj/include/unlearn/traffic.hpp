#pragma once

#include "unlearn/field.hpp"

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace unlearn::traffic {

struct TrajectoryRecord {
  int vehicle_id = 0;
  double t = 0.0;  // s
  double x = 0.0;  // m
  double v = 0.0;  // m/s
};

struct TrajectorySet {
  std::vector<TrajectoryRecord> records;
  std::set<int> removed_ids;  // vehicle ids defining the removal subset

  int size() const { return static_cast<int>(records.size()); }
  bool is_removed(int vehicle_id) const { return removed_ids.count(vehicle_id) > 0; }
  std::set<int> vehicle_ids() const;
  /// Records of vehicles not in the removal subset.
  TrajectorySet without_removed() const;
};

/// Multiplicative scale applied to raw columns (e.g. ft -> m is 0.3048).
struct UnitConfig {
  double x_scale = 1.0;
  double t_scale = 1.0;
  double v_scale = 1.0;
};

/// CSV with header vehicle_id,t,x,v. Malformed rows are rejected with
/// their line number.
TrajectorySet parse_trajectories(const std::string& path, const UnitConfig& units = {});

void write_trajectories(const TrajectorySet& set, const std::string& path);

struct ScenarioSpec {
  enum class Kind { riemann, congestion_pulse };
  Kind kind = Kind::riemann;
  // riemann: rho_left upstream of the interface, rho_right downstream.
  double rho_left = 0.02;
  double rho_right = 0.10;
  // congestion_pulse: a density block [pulse_from, pulse_to] at pulse_rho
  // over background_rho.
  double background_rho = 0.03;
  double pulse_rho = 0.10;
  double pulse_from = -1.0;  // < 0 -> defaults relative to L
  double pulse_to = -1.0;
  double interface_x = -1.0;  // riemann interface; < 0 -> L/2
  // Per-vehicle speed heterogeneity: factor ~ uniform(1-h, 1+h).
  double heterogeneity = 0.1;
};

/// Analytic LWR entropy solution sampled on the grid, with pointwise
/// evaluation for residual checks.
class GroundTruthField {
 public:
  GroundTruthField(pinn::GreenshieldsParams params, pinn::GridSpec grid, ScenarioSpec spec);

  double density(double x, double t) const;
  double speed(double x, double t) const { return params_.speed_of_density(density(x, t)); }
  /// True when (x, t) lies within `margin` of a shock or fan edge.
  bool near_discontinuity(double x, double t, double margin) const;

  std::vector<double> grid_speeds() const;
  const pinn::GridSpec& grid() const { return grid_; }
  const pinn::GreenshieldsParams& params() const { return params_; }
  double shock_speed() const { return shock_speed_; }

 private:
  double pulse_shock_x(double t) const;

  pinn::GreenshieldsParams params_;
  pinn::GridSpec grid_;
  ScenarioSpec spec_;
  double x0_ = 0.0;          // riemann interface
  double shock_speed_ = 0.0; // riemann shock (when rho_left < rho_right)
  // congestion pulse: shock path sampled after the fan interaction
  std::vector<double> pulse_shock_path_;
  double pulse_path_dt_ = 0.0;
};

struct SyntheticScenario {
  TrajectorySet trajectories;
  GroundTruthField truth;
};

/// Seeds vehicles into the analytic field and samples GPS-like records:
/// integration at dt/5, one record kept per dt. Deterministic per seed.
SyntheticScenario generate_greenshields_scenario(const pinn::GreenshieldsParams& params,
                                                 const pinn::GridSpec& grid,
                                                 const ScenarioSpec& spec, int n_vehicles,
                                                 std::uint64_t seed);

enum class RemovalPick {
  random,   // seeded uniform sample of vehicle ids
  slowest,  // vehicles most below their bins' mean speed (e.g. an opting-out fleet)
};

/// Marks a fraction of vehicle ids for removal. The `slowest` mode ranks
/// vehicles by their mean speed deviation from the binned field, so the
/// removal visibly shifts the affected bin means.
std::set<int> pick_removal_ids(const TrajectorySet& set, double fraction, std::uint64_t seed,
                               RemovalPick mode = RemovalPick::random,
                               const pinn::GridSpec* grid = nullptr);

/// Assigns records to bins (boundary ties go to the lower-index bin) and
/// accumulates kept/removed sums separately. Throws on records outside
/// the grid.
pinn::BinnedVelocityField bin_trajectories(const TrajectorySet& set,
                                           const pinn::GridSpec& grid);

/// Seeded observed/auxiliary split: O is a sample of the non-empty bins,
/// A an independent sample of the full grid.
std::pair<std::vector<int>, std::vector<int>> split_observed(
    const pinn::BinnedVelocityField& field, double fraction, double aux_fraction,
    std::uint64_t seed);

}  // namespace unlearn::traffic
