#pragma once

#include <map>
#include <string>

#include "glacierbayes/series.hpp"

namespace glacier {

// Everything observed (or derived from observations) that enters the model.
// Series may live on different location sets; they are interpolated to the
// grids they are consumed on.
struct ObservationSet {
  Series thickness;     // m, strictly positive values
  Series velocity;      // m/yr
  Series elevation;     // m
  Series accumulation;  // m ice eq./yr
  Series thinning;      // m ice eq./yr

  // Candidate flow-width traces (e.g. from streamline pairs), keyed by name.
  // May be empty: widths are unobserved in general.
  std::map<std::string, Series> width_candidates;

  void validate() const;
};

}  // namespace glacier
