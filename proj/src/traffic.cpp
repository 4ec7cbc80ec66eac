#include "unlearn/traffic.hpp"

#include "unlearn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace unlearn::traffic {

std::set<int> TrajectorySet::vehicle_ids() const {
  std::set<int> ids;
  for (const TrajectoryRecord& r : records) ids.insert(r.vehicle_id);
  return ids;
}

TrajectorySet TrajectorySet::without_removed() const {
  TrajectorySet out;
  for (const TrajectoryRecord& r : records) {
    if (!is_removed(r.vehicle_id)) out.records.push_back(r);
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& token, int line_no, const char* column) {
  try {
    size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": non-numeric " + column +
                                " field '" + token + "'");
  }
}

}  // namespace

TrajectorySet parse_trajectories(const std::string& path, const UnitConfig& units) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("parse_trajectories: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("parse_trajectories: empty file " + path);
  }
  if (trim(line) != "vehicle_id,t,x,v") {
    throw std::invalid_argument("parse_trajectories: expected header vehicle_id,t,x,v");
  }
  TrajectorySet set;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cols;
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(trim(tok));
    if (cols.size() != 4) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                                  std::to_string(cols.size()));
    }
    TrajectoryRecord rec;
    rec.vehicle_id = static_cast<int>(parse_number(cols[0], line_no, "vehicle_id"));
    rec.t = parse_number(cols[1], line_no, "t") * units.t_scale;
    rec.x = parse_number(cols[2], line_no, "x") * units.x_scale;
    rec.v = parse_number(cols[3], line_no, "v") * units.v_scale;
    if (rec.t < 0.0) throw std::invalid_argument("line " + std::to_string(line_no) + ": negative time");
    if (rec.x < 0.0) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": negative position");
    }
    if (rec.v < 0.0) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": negative speed");
    }
    set.records.push_back(rec);
  }
  return set;
}

void write_trajectories(const TrajectorySet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectories: cannot open " + path);
  out << "vehicle_id,t,x,v\n";
  out.precision(17);
  for (const TrajectoryRecord& r : set.records) {
    out << r.vehicle_id << "," << r.t << "," << r.x << "," << r.v << "\n";
  }
}

GroundTruthField::GroundTruthField(pinn::GreenshieldsParams params, pinn::GridSpec grid,
                                   ScenarioSpec spec)
    : params_(params), grid_(grid), spec_(spec) {
  params_.validate();
  grid_.validate();
  auto check_density = [&](double rho, const char* name) {
    if (!(rho > 0.0 && rho < params_.rho_m)) {
      throw std::invalid_argument(std::string("GroundTruthField: ") + name +
                                  " must lie in (0, rho_m)");
    }
  };
  x0_ = spec_.interface_x >= 0.0 ? spec_.interface_x : 0.5 * grid_.length;
  if (spec_.kind == ScenarioSpec::Kind::riemann) {
    check_density(spec_.rho_left, "rho_left");
    check_density(spec_.rho_right, "rho_right");
    shock_speed_ = params_.v_f * (1.0 - (spec_.rho_left + spec_.rho_right) / params_.rho_m);
  } else {
    check_density(spec_.background_rho, "background_rho");
    check_density(spec_.pulse_rho, "pulse_rho");
    if (!(spec_.pulse_rho > spec_.background_rho)) {
      throw std::invalid_argument("GroundTruthField: pulse_rho must exceed background_rho");
    }
    if (spec_.pulse_from < 0.0) spec_.pulse_from = 0.3 * grid_.length;
    if (spec_.pulse_to < 0.0) spec_.pulse_to = 0.5 * grid_.length;
    if (!(spec_.pulse_from < spec_.pulse_to)) {
      throw std::invalid_argument("GroundTruthField: pulse_from must be < pulse_to");
    }
    // Left interface: shock into the pulse. Right interface: clearing fan.
    // After the fan overtakes the shock the path obeys an ODE; integrate
    // it once on a fine fixed step and interpolate later.
    const double s1 =
        params_.v_f * (1.0 - (spec_.background_rho + spec_.pulse_rho) / params_.rho_m);
    const double lam_pulse = params_.wave_speed(spec_.pulse_rho);
    const double t_star = (spec_.pulse_to - spec_.pulse_from) / (s1 - lam_pulse);
    pulse_path_dt_ = grid_.dt / 50.0;
    const int n_steps =
        static_cast<int>(std::ceil((grid_.horizon - t_star) / pulse_path_dt_)) + 1;
    if (t_star < grid_.horizon) {
      double xs = spec_.pulse_from + s1 * t_star;
      pulse_shock_path_.push_back(xs);
      auto shock_rhs = [&](double x, double t) {
        double rho_fan = 0.5 * params_.rho_m * (1.0 - (x - spec_.pulse_to) / (params_.v_f * t));
        rho_fan = std::min(std::max(rho_fan, spec_.background_rho), spec_.pulse_rho);
        const double drho = rho_fan - spec_.background_rho;
        if (std::abs(drho) < 1e-12) return params_.wave_speed(spec_.background_rho);
        return (params_.flow_of_density(rho_fan) - params_.flow_of_density(spec_.background_rho)) /
               drho;
      };
      for (int k = 0; k < n_steps; ++k) {
        const double t = t_star + k * pulse_path_dt_;
        const double h = pulse_path_dt_;
        const double k1 = shock_rhs(xs, t);
        const double k2 = shock_rhs(xs + 0.5 * h * k1, t + 0.5 * h);
        const double k3 = shock_rhs(xs + 0.5 * h * k2, t + 0.5 * h);
        const double k4 = shock_rhs(xs + h * k3, t + h);
        xs += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        pulse_shock_path_.push_back(xs);
      }
    }
  }
}

double GroundTruthField::pulse_shock_x(double t) const {
  const double s1 =
      params_.v_f * (1.0 - (spec_.background_rho + spec_.pulse_rho) / params_.rho_m);
  const double lam_pulse = params_.wave_speed(spec_.pulse_rho);
  const double t_star = (spec_.pulse_to - spec_.pulse_from) / (s1 - lam_pulse);
  if (t <= t_star || pulse_shock_path_.empty()) return spec_.pulse_from + s1 * t;
  const double u = (t - t_star) / pulse_path_dt_;
  const int k = std::min(static_cast<int>(u), static_cast<int>(pulse_shock_path_.size()) - 2);
  const double frac = u - k;
  return pulse_shock_path_[k] + frac * (pulse_shock_path_[k + 1] - pulse_shock_path_[k]);
}

double GroundTruthField::density(double x, double t) const {
  if (spec_.kind == ScenarioSpec::Kind::riemann) {
    const double rl = spec_.rho_left, rr = spec_.rho_right;
    if (rl == rr) return rl;
    if (rl < rr) {
      return x < x0_ + shock_speed_ * t ? rl : rr;
    }
    // rarefaction
    if (t <= 0.0) return x < x0_ ? rl : rr;
    const double xi = (x - x0_) / t;
    if (xi <= params_.wave_speed(rl)) return rl;
    if (xi >= params_.wave_speed(rr)) return rr;
    return 0.5 * params_.rho_m * (1.0 - xi / params_.v_f);
  }
  // congestion pulse
  const double rb = spec_.background_rho, rp = spec_.pulse_rho;
  const double xs = pulse_shock_x(t);
  if (x < xs) return rb;
  const double fan_left = spec_.pulse_to + params_.wave_speed(rp) * t;
  const double fan_right = spec_.pulse_to + params_.wave_speed(rb) * t;
  if (x < fan_left) return rp;  // plateau (only exists before the interaction)
  if (x < fan_right) {
    if (t <= 0.0) return rb;
    double rho = 0.5 * params_.rho_m * (1.0 - (x - spec_.pulse_to) / (params_.v_f * t));
    return std::min(std::max(rho, rb), rp);
  }
  return rb;
}

bool GroundTruthField::near_discontinuity(double x, double t, double margin) const {
  if (spec_.kind == ScenarioSpec::Kind::riemann) {
    if (spec_.rho_left == spec_.rho_right) return false;
    if (spec_.rho_left < spec_.rho_right) {
      return std::abs(x - (x0_ + shock_speed_ * t)) <= margin;
    }
    const double e1 = x0_ + params_.wave_speed(spec_.rho_left) * t;
    const double e2 = x0_ + params_.wave_speed(spec_.rho_right) * t;
    return std::abs(x - e1) <= margin || std::abs(x - e2) <= margin;
  }
  const double xs = pulse_shock_x(t);
  const double fan_left = spec_.pulse_to + params_.wave_speed(spec_.pulse_rho) * t;
  const double fan_right = spec_.pulse_to + params_.wave_speed(spec_.background_rho) * t;
  return std::abs(x - xs) <= margin || std::abs(x - fan_left) <= margin ||
         std::abs(x - fan_right) <= margin;
}

std::vector<double> GroundTruthField::grid_speeds() const {
  std::vector<double> out(static_cast<size_t>(grid_.n_points()));
  for (int p = 0; p < grid_.n_points(); ++p) {
    out[static_cast<size_t>(p)] = speed(grid_.x_center(grid_.ix_of(p)), grid_.t_center(grid_.it_of(p)));
  }
  return out;
}

SyntheticScenario generate_greenshields_scenario(const pinn::GreenshieldsParams& params,
                                                 const pinn::GridSpec& grid,
                                                 const ScenarioSpec& spec, int n_vehicles,
                                                 std::uint64_t seed) {
  if (n_vehicles <= 0) {
    throw std::invalid_argument("generate_greenshields_scenario: n_vehicles must be positive");
  }
  GroundTruthField truth(params, grid, spec);
  rng::Stream stream(seed, "vehicles");

  TrajectorySet set;
  const double step = grid.dt / 5.0;
  const int n_initial = static_cast<int>(0.3 * n_vehicles);
  for (int vid = 1; vid <= n_vehicles; ++vid) {
    double t, x;
    if (vid <= n_initial) {
      t = 0.0;
      x = stream.uniform(0.0, grid.length);
    } else {
      t = stream.uniform(0.0, 0.95 * grid.horizon);
      x = 0.0;
    }
    const double factor = stream.uniform(1.0 - spec.heterogeneity, 1.0 + spec.heterogeneity);
    int k = 0;
    while (t <= grid.horizon && x <= grid.length) {
      const double v = factor * truth.speed(x, t);
      if (k % 5 == 0) {
        set.records.push_back(TrajectoryRecord{vid, t, x, v});
      }
      x += step * v;
      t += step;
      ++k;
    }
  }
  return SyntheticScenario{std::move(set), std::move(truth)};
}

namespace {

int bin_index_1d(double value, double width, int n_bins, const char* axis) {
  int i = static_cast<int>(std::floor(value / width));
  if (i > 0 && value == i * width) --i;  // boundary ties go to the lower bin
  if (i < 0 || i >= n_bins) {
    throw std::invalid_argument(std::string("bin_trajectories: record outside grid on ") + axis);
  }
  return i;
}

}  // namespace

std::set<int> pick_removal_ids(const TrajectorySet& set, double fraction, std::uint64_t seed,
                               RemovalPick mode, const pinn::GridSpec* grid) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("pick_removal_ids: fraction must lie in (0,1)");
  }
  const std::set<int> all = set.vehicle_ids();
  std::vector<int> ids(all.begin(), all.end());
  const int n_remove = static_cast<int>(fraction * static_cast<double>(ids.size()));
  if (n_remove < 1) throw std::invalid_argument("pick_removal_ids: removal set would be empty");

  if (mode == RemovalPick::random) {
    rng::Stream stream(seed, "removal");
    stream.shuffle(ids);
    return std::set<int>(ids.begin(), ids.begin() + n_remove);
  }

  if (grid == nullptr) {
    throw std::invalid_argument("pick_removal_ids: slowest mode needs the grid");
  }
  // Mean relative deviation of each vehicle's speed from its bin mean.
  TrajectorySet unmarked;
  unmarked.records = set.records;
  const pinn::BinnedVelocityField field = bin_trajectories(unmarked, *grid);
  std::map<int, std::pair<double, int>> deviation;  // id -> (sum, count)
  for (const TrajectoryRecord& r : set.records) {
    const int ix = bin_index_1d(r.x, grid->dx, grid->nx(), "x");
    const int it = bin_index_1d(r.t, grid->dt, grid->nt(), "t");
    const pinn::Bin& bin = field.bins[static_cast<size_t>(grid->index(ix, it))];
    const double mean = pinn::weighted_bin_speed(bin, 1.0);
    if (mean <= 0.0) continue;
    auto& acc = deviation[r.vehicle_id];
    acc.first += (r.v - mean) / mean;
    acc.second += 1;
  }
  std::vector<std::pair<double, int>> ranked;
  for (int id : ids) {
    const auto it = deviation.find(id);
    const double score =
        it != deviation.end() && it->second.second > 0 ? it->second.first / it->second.second : 0.0;
    ranked.emplace_back(score, id);
  }
  std::sort(ranked.begin(), ranked.end());
  std::set<int> out;
  for (int k = 0; k < n_remove; ++k) out.insert(ranked[static_cast<size_t>(k)].second);
  return out;
}

pinn::BinnedVelocityField bin_trajectories(const TrajectorySet& set,
                                           const pinn::GridSpec& grid) {
  grid.validate();
  pinn::BinnedVelocityField field;
  field.grid = grid;
  field.bins.assign(static_cast<size_t>(grid.n_points()), pinn::Bin{});
  for (const TrajectoryRecord& r : set.records) {
    const int ix = bin_index_1d(r.x, grid.dx, grid.nx(), "x");
    const int it = bin_index_1d(r.t, grid.dt, grid.nt(), "t");
    pinn::Bin& bin = field.bins[static_cast<size_t>(grid.index(ix, it))];
    if (set.is_removed(r.vehicle_id)) {
      bin.removed_sum += r.v;
      bin.removed_count += 1;
    } else {
      bin.kept_sum += r.v;
      bin.kept_count += 1;
    }
  }
  return field;
}

std::pair<std::vector<int>, std::vector<int>> split_observed(
    const pinn::BinnedVelocityField& field, double fraction, double aux_fraction,
    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_observed: fraction must lie in (0,1)");
  }
  if (!(aux_fraction > 0.0 && aux_fraction <= 1.0)) {
    throw std::invalid_argument("split_observed: aux_fraction must lie in (0,1]");
  }
  std::vector<int> nonempty;
  for (int p = 0; p < field.grid.n_points(); ++p) {
    if (field.bins[static_cast<size_t>(p)].total_count() > 0) nonempty.push_back(p);
  }
  const int n_obs = static_cast<int>(fraction * static_cast<double>(nonempty.size()));
  if (n_obs < 1) throw std::invalid_argument("split_observed: not enough non-empty bins");

  rng::Stream obs_stream(seed, "observed-split");
  obs_stream.shuffle(nonempty);
  std::vector<int> observed(nonempty.begin(), nonempty.begin() + n_obs);
  std::sort(observed.begin(), observed.end());

  std::vector<int> all(static_cast<size_t>(field.grid.n_points()));
  for (int p = 0; p < field.grid.n_points(); ++p) all[static_cast<size_t>(p)] = p;
  rng::Stream aux_stream(seed, "aux-split");
  aux_stream.shuffle(all);
  const int n_aux = std::max(1, static_cast<int>(aux_fraction * static_cast<double>(all.size())));
  std::vector<int> auxiliary(all.begin(), all.begin() + n_aux);
  std::sort(auxiliary.begin(), auxiliary.end());
  return {std::move(observed), std::move(auxiliary)};
}

}  // namespace unlearn::traffic
