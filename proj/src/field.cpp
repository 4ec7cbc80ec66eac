#include "unlearn/field.hpp"

namespace unlearn::pinn {

void GridSpec::validate() const {
  if (!(length > 0.0 && horizon > 0.0 && dx > 0.0 && dt > 0.0)) {
    throw std::invalid_argument("GridSpec: extents and resolutions must be positive");
  }
  const double rx = length / dx;
  const double rt = horizon / dt;
  if (std::abs(rx - std::round(rx)) > 1e-9 || std::abs(rt - std::round(rt)) > 1e-9) {
    throw std::invalid_argument("GridSpec: L/dx and T/dt must be integral");
  }
}

void BinnedVelocityField::validate() const {
  grid.validate();
  if (static_cast<int>(bins.size()) != grid.n_points()) {
    throw std::invalid_argument("BinnedVelocityField: bin count != grid size");
  }
  for (const Bin& b : bins) {
    if (b.kept_count < 0 || b.removed_count < 0) {
      throw std::invalid_argument("BinnedVelocityField: negative count");
    }
  }
  auto check_mask = [&](const std::vector<int>& mask, const char* name) {
    for (int p : mask) {
      if (p < 0 || p >= grid.n_points()) {
        throw std::invalid_argument(std::string("BinnedVelocityField: ") + name +
                                    " index out of range");
      }
    }
  };
  check_mask(observed, "observed");
  check_mask(auxiliary, "auxiliary");
  for (int p : observed) {
    if (bins[p].total_count() < 1) {
      throw std::invalid_argument("BinnedVelocityField: observed bin without data");
    }
  }
}

double weighted_bin_speed(const Bin& bin, double eta) {
  if (bin.total_count() == 0) {
    throw std::invalid_argument("weighted_bin_speed: bin has no data");
  }
  const double denom = bin.kept_count + eta * bin.removed_count;
  if (!(denom > 0.0)) {
    throw std::invalid_argument("weighted_bin_speed: effective bin is empty");
  }
  return (bin.kept_sum + eta * bin.removed_sum) / denom;
}

double weighted_bin_speed_deta(const Bin& bin, double eta) {
  if (bin.total_count() == 0) {
    throw std::invalid_argument("weighted_bin_speed_deta: bin has no data");
  }
  const double denom = bin.kept_count + eta * bin.removed_count;
  if (!(denom > 0.0)) {
    throw std::invalid_argument("weighted_bin_speed_deta: effective bin is empty");
  }
  return (bin.removed_sum * bin.kept_count - bin.removed_count * bin.kept_sum) /
         (denom * denom);
}

}  // namespace unlearn::pinn
