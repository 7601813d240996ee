#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "glacierbayes/constants.hpp"
#include "glacierbayes/grid.hpp"
#include "glacierbayes/series.hpp"
#include "glacierbayes/smoothing.hpp"

namespace glacier {

// Scalar unknowns of the dynamics model. C0 is the horizontal flux at the
// divide; zero is the physically natural default there.
struct DynamicsParams {
  double A = 0.0;   // rheologic coefficient, Pa^-3/yr
  double h0 = 1.0;  // thickness at the divide, m
  double C0 = 0.0;  // flux at the divide, m^3/yr

  void validate() const;
};

enum class RootStrategy { nearest_to_reference, max_real_positive, continuity };

struct RootSelection {
  RootStrategy strategy = RootStrategy::continuity;
  // Per-observation reference thicknesses; required for nearest_to_reference.
  std::vector<double> reference;
  // Upper end of the root bracket; thicknesses beyond this are not physical.
  double h_max = 10000.0;
};

struct FluxProfile {
  std::vector<double> flux_at_obs;  // m^3/yr
};

// Depth-averaged velocity from observed surface velocity: the shallow-ice
// deformation profile contributes (A/20)(rho g |s|)^3 h^4; basal sliding
// cancels in the construction.
double sia_correction(double v_s, double s, double h, double A, const PhysicalConstants& c);

// Trapezoid-in-disguise quadrature of (a - tau) * omega from the divide to
// each observation location: full cells use midpoint (endpoint-average)
// values, and the cell containing the observation contributes pro rata.
FluxProfile cumulative_flux(const FlowlineGrid& grid, std::span<const double> a_quad,
                            std::span<const double> tau_quad, std::span<const double> omega_quad,
                            const DynamicsParams& params);

// All real roots h in [0, h_max] of
//   F - (v_s - (A/20)(rho g |s|)^3 h^4) h omega = 0,
// ascending, each polished to |poly(h)| <= 1e-8 * max(|F|, 1).
std::vector<double> thickness_roots(double F, double v_s, double s, double omega, double A,
                                    const PhysicalConstants& c, double h_max);

double thickness_poly(double F, double v_s, double s, double omega, double A,
                      const PhysicalConstants& c, double h);

std::optional<double> select_root(std::span<const double> roots, RootStrategy strategy,
                                  double reference);

// One-point solve; `reference` seeds nearest/continuity selection.
std::optional<double> solve_thickness(double F, double v_s, double s, double omega, double A,
                                      const PhysicalConstants& c, const RootSelection& sel,
                                      double reference);

struct ForwardResult {
  std::vector<double> thickness;  // NaN where no root exists
  std::vector<std::uint8_t> gap;  // 1 where no root exists

  bool complete() const;
};

// Full deterministic model M: flux integration followed by the thickness
// solve at each evaluation point, left to right. Continuity selection carries
// the previous solved thickness forward, starting from params.h0.
ForwardResult forward_model_at(const FlowlineGrid& grid, std::span<const double> eval_x,
                               std::span<const double> v_s_at_eval,
                               std::span<const double> s_at_eval,
                               std::span<const double> a_quad, std::span<const double> tau_quad,
                               std::span<const double> omega_quad, const DynamicsParams& params,
                               const RootSelection& sel, const PhysicalConstants& c);

ForwardResult forward_model(const FlowlineGrid& grid, const SurfaceFields& fields,
                            std::span<const double> omega_quad, const DynamicsParams& params,
                            const RootSelection& sel, const PhysicalConstants& c);

// Surface velocity consistent with a known thickness profile; feeding the
// result back through forward_model reproduces that thickness exactly.
std::vector<double> synthetic_velocity(const FlowlineGrid& grid, std::span<const double> h_true,
                                       std::span<const double> s_at_obs,
                                       std::span<const double> a_quad,
                                       std::span<const double> tau_quad,
                                       std::span<const double> omega_quad,
                                       const DynamicsParams& params, const PhysicalConstants& c);

struct NaiveSolution {
  double A = 0.0;
  std::vector<double> thickness;
  std::vector<std::uint8_t> gap;
  std::size_t n_gaps = 0;
};

// The plug-in baseline: for each A, solve with roots picked nearest to the
// observed thickness, recording locations where no solution exists.
std::vector<NaiveSolution> naive_inversion(const FlowlineGrid& grid, const SurfaceFields& fields,
                                           const Series& width_candidate,
                                           std::span<const double> A_values,
                                           std::span<const double> h_obs,
                                           const DynamicsParams& base, const PhysicalConstants& c,
                                           double h_max = 10000.0);

}  // namespace glacier
