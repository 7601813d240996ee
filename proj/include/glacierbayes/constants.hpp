#pragma once

#include "glacierbayes/errors.hpp"

namespace glacier {

// Physical constants of the flowline model. Defaults are standard values for
// glacier ice; both can be overridden through the run configuration.
struct PhysicalConstants {
  double rho = 917.0;  // ice density, kg/m^3
  double g = 9.81;     // gravitational acceleration, m/s^2

  void validate() const {
    if (!(rho > 0.0) || !(g > 0.0)) {
      throw ValidationError("physical constants must be strictly positive");
    }
  }
};

}  // namespace glacier
