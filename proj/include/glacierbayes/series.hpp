#pragma once

#include <span>
#include <string>
#include <vector>

namespace glacier {

// One sampled value of a 1-D field at an arc-length position x (meters from
// the divide) along the centerline.
struct Sample {
  double x = 0.0;
  double value = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// A sampled field, ordered by ascending x.
using Series = std::vector<Sample>;

Series make_series(std::span<const double> x, std::span<const double> values);

std::vector<double> series_x(const Series& s);
std::vector<double> series_values(const Series& s);

// Throws ValidationError unless the series has at least min_points entries,
// strictly ascending finite locations and finite values.
void validate_series(const Series& s, std::size_t min_points, const std::string& name);

// Piecewise-linear interpolation with endpoint clamping outside the sampled
// range. Requires at least two points.
double linear_interp_at(const Series& s, double x);
std::vector<double> linear_interp(const Series& s, std::span<const double> targets);

// Same interpolation over parallel location/value arrays (no copies).
double linear_interp_at(std::span<const double> xs, std::span<const double> values, double x);

}  // namespace glacier
