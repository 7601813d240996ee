#include "glacierbayes/grid.hpp"

#include <algorithm>
#include <cmath>

#include "glacierbayes/errors.hpp"

namespace glacier {

void FlowlineGrid::validate() const {
  if (!(domain_length > 0.0) || !std::isfinite(domain_length)) {
    throw ValidationError("grid: domain_length must be positive and finite");
  }
  if (quad_x.size() < 2) throw ValidationError("grid: needs at least 2 quadrature nodes");
  if (quad_x.front() != 0.0) throw ValidationError("grid: quadrature grid must start at the divide (x = 0)");
  for (std::size_t i = 0; i < quad_x.size(); ++i) {
    if (!std::isfinite(quad_x[i])) throw ValidationError("grid: non-finite quadrature node");
    if (i > 0 && !(quad_x[i] > quad_x[i - 1])) {
      throw ValidationError("grid: quadrature nodes not strictly ascending");
    }
  }
  for (std::size_t i = 0; i < obs_x.size(); ++i) {
    if (!std::isfinite(obs_x[i]) || obs_x[i] < 0.0 || obs_x[i] > domain_length) {
      throw ValidationError("grid: observation location outside [0, domain_length]");
    }
    if (i > 0 && !(obs_x[i] > obs_x[i - 1])) {
      throw ValidationError("grid: observation locations not strictly ascending");
    }
  }
  if (!obs_x.empty() && obs_x.back() > quad_x.back()) {
    throw ValidationError("grid: quadrature grid does not cover the last observation");
  }
}

std::size_t FlowlineGrid::interval_of(double x) const {
  if (x < quad_x.front() || x > quad_x.back()) {
    throw ValidationError("grid: location outside quadrature coverage");
  }
  auto it = std::upper_bound(quad_x.begin(), quad_x.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - quad_x.begin());
  if (hi >= quad_x.size()) hi = quad_x.size() - 1;  // x at the last node
  if (hi == 0) hi = 1;
  return hi - 1;
}

FlowlineGrid build_grid(double domain_length, double quad_spacing,
                        std::span<const double> obs_locations) {
  if (!(quad_spacing > 0.0)) throw ValidationError("build_grid: quad_spacing must be positive");
  FlowlineGrid grid;
  grid.domain_length = domain_length;
  grid.obs_x.assign(obs_locations.begin(), obs_locations.end());

  const double max_obs = grid.obs_x.empty() ? 0.0 : grid.obs_x.back();
  const double cover = std::max(domain_length, max_obs);
  grid.quad_x.push_back(0.0);
  for (std::size_t k = 1; grid.quad_x.back() < cover; ++k) {
    grid.quad_x.push_back(static_cast<double>(k) * quad_spacing);
  }
  grid.validate();
  return grid;
}

FlowlineGrid make_grid(std::vector<double> quad_x, std::vector<double> obs_x,
                       double domain_length) {
  FlowlineGrid grid;
  grid.quad_x = std::move(quad_x);
  grid.obs_x = std::move(obs_x);
  grid.domain_length = domain_length;
  grid.validate();
  return grid;
}

}  // namespace glacier
