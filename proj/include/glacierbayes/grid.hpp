#pragma once

#include <span>
#include <vector>

namespace glacier {

// Observation locations and quadrature grid along the centerline, in meters
// from the divide. The quadrature grid starts at the divide and covers both
// the nominal domain and every observation location; it may overshoot the
// domain end by less than one spacing so that coverage holds.
struct FlowlineGrid {
  std::vector<double> obs_x;
  std::vector<double> quad_x;
  double domain_length = 0.0;

  std::size_t n_obs() const { return obs_x.size(); }
  std::size_t n_quad() const { return quad_x.size(); }

  // Index I of the quadrature interval [quad_x[I], quad_x[I+1]] containing x.
  std::size_t interval_of(double x) const;

  void validate() const;
};

// Uniform quadrature grid at the given spacing, extended until it covers both
// domain_length and the last observation.
FlowlineGrid build_grid(double domain_length, double quad_spacing,
                        std::span<const double> obs_locations);

// Non-uniform grids are accepted anywhere a FlowlineGrid is consumed; this
// validates and wraps caller-provided nodes.
FlowlineGrid make_grid(std::vector<double> quad_x, std::vector<double> obs_x,
                       double domain_length);

}  // namespace glacier
