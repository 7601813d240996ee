#pragma once

#include <span>
#include <vector>

#include "glacierbayes/grid.hpp"
#include "glacierbayes/observations.hpp"
#include "glacierbayes/series.hpp"

namespace glacier {

enum class SmootherKind { spline, moving_average };

// How one raw series is pre-smoothed. For the spline kind, lambda is the
// curvature penalty (units of x^3) and lambda = 0 interpolates the data; for
// the moving-average kind, the integer part of lambda is the (odd) window.
// choose_lambda_by_gcv = true replaces lambda with the generalized
// cross-validation minimizer at fit time.
struct SmootherSpec {
  SmootherKind kind = SmootherKind::spline;
  double lambda = 0.0;
  bool choose_lambda_by_gcv = false;

  void validate() const;
};

// Smoothed inputs evaluated where the dynamics consumes them: velocity and
// slope at the observation locations (thickness solve), accumulation and
// thinning on the quadrature grid (flux integration). The full smoothed
// series are kept so the fields can also be evaluated at prediction points.
struct SurfaceFields {
  std::vector<double> v_s_at_obs;   // m/yr, >= 0
  std::vector<double> s_at_obs;     // signed slope; dynamics uses |s|
  std::vector<double> a_at_quad;    // m/yr
  std::vector<double> tau_at_quad;  // m/yr

  Series velocity_series;  // smoothed, at the raw velocity locations
  Series slope_series;     // slope of smoothed elevation, at elevation locations

  double velocity_at(double x) const { return linear_interp_at(velocity_series, x); }
  double slope_at(double x) const { return linear_interp_at(slope_series, x); }
};

struct SplineFit {
  std::vector<double> fitted;
  double lambda = 0.0;  // penalty actually used (after GCV, if requested)
  double trace = 0.0;   // tr(S_lambda), the effective degrees of freedom
  double gcv = 0.0;     // GCV score at that lambda
};

// Natural cubic smoothing spline through (x, y) with penalty lambda, solved
// in the banded Reinsch form. O(n).
SplineFit smoothing_spline(std::span<const double> x, std::span<const double> y,
                           double lambda);

// Minimizes GCV(lambda) = n * RSS / (n - tr S)^2 over a log-spaced bracket.
SplineFit smoothing_spline_gcv(std::span<const double> x, std::span<const double> y);

Series smooth_series(const Series& raw, const SmootherSpec& spec);

// Interior points use the centered stencil, endpoints one-sided differences.
Series central_difference_slope(const Series& elevation);

struct FieldSmoothers {
  SmootherSpec velocity;
  SmootherSpec elevation;
  SmootherSpec accumulation;
  SmootherSpec thinning;
};

SurfaceFields prepare_surface_fields(const ObservationSet& obs, const FlowlineGrid& grid,
                                     const FieldSmoothers& specs);

}  // namespace glacier
