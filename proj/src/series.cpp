#include "glacierbayes/series.hpp"

#include <algorithm>
#include <cmath>

#include "glacierbayes/errors.hpp"

namespace glacier {

Series make_series(std::span<const double> x, std::span<const double> values) {
  if (x.size() != values.size()) {
    throw ValidationError("series locations and values differ in length");
  }
  Series s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = {x[i], values[i]};
  return s;
}

std::vector<double> series_x(const Series& s) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i].x;
  return out;
}

std::vector<double> series_values(const Series& s) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i].value;
  return out;
}

void validate_series(const Series& s, std::size_t min_points, const std::string& name) {
  if (s.size() < min_points) {
    throw ValidationError(name + ": needs at least " + std::to_string(min_points) +
                          " points, got " + std::to_string(s.size()));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i].x) || !std::isfinite(s[i].value)) {
      throw ValidationError(name + ": non-finite entry at index " + std::to_string(i));
    }
    if (i > 0 && !(s[i].x > s[i - 1].x)) {
      throw ValidationError(name + ": locations not strictly ascending at index " +
                            std::to_string(i));
    }
  }
}

double linear_interp_at(std::span<const double> xs, std::span<const double> values, double x) {
  if (xs.size() < 2) throw ValidationError("linear_interp: needs at least 2 points");
  if (x <= xs.front()) return values.front();
  if (x >= xs.back()) return values.back();
  // first knot strictly right of x
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return values[lo] + t * (values[hi] - values[lo]);
}

double linear_interp_at(const Series& s, double x) {
  validate_series(s, 2, "linear_interp series");
  const auto xs = series_x(s);
  const auto vs = series_values(s);
  return linear_interp_at(xs, vs, x);
}

std::vector<double> linear_interp(const Series& s, std::span<const double> targets) {
  validate_series(s, 2, "linear_interp series");
  const auto xs = series_x(s);
  const auto vs = series_values(s);
  std::vector<double> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) out[i] = linear_interp_at(xs, vs, targets[i]);
  return out;
}

}  // namespace glacier
