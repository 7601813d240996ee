#include "glacierbayes/observations.hpp"

#include "glacierbayes/errors.hpp"

namespace glacier {

void ObservationSet::validate() const {
  validate_series(thickness, 1, "thickness");
  validate_series(velocity, 1, "velocity");
  validate_series(elevation, 1, "elevation");
  validate_series(accumulation, 1, "accumulation");
  validate_series(thinning, 1, "thinning");
  for (const auto& s : thickness) {
    if (!(s.value > 0.0)) throw ValidationError("thickness observations must be strictly positive");
  }
  for (const auto& [name, series] : width_candidates) {
    validate_series(series, 2, "width candidate '" + name + "'");
  }
}

}  // namespace glacier
