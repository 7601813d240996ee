#include "glacierbayes/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glacierbayes/errors.hpp"

namespace glacier {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double residual_tol(double F) { return 1e-8 * std::max(std::abs(F), 1.0); }

// p(h) = c0 - c1 h + c5 h^5 with c5 >= 0, c1 >= 0.
struct Quintic {
  double c0, c1, c5;

  double value(double h) const { return c0 - c1 * h + c5 * h * h * h * h * h; }
  double deriv(double h) const { return -c1 + 5.0 * c5 * h * h * h * h; }
};

// Bisection to a tight bracket, then Newton polish. Assumes a sign change
// over [lo, hi].
double refine_root(const Quintic& p, double lo, double hi) {
  double flo = p.value(lo);
  if (flo == 0.0) return lo;
  if (p.value(hi) == 0.0) return hi;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = p.value(mid);
    if (fmid == 0.0) return mid;
    if ((flo < 0.0) == (fmid < 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  double h = 0.5 * (lo + hi);
  double best = h;
  double best_abs = std::abs(p.value(h));
  for (int it = 0; it < 12; ++it) {
    const double d = p.deriv(h);
    if (d == 0.0) break;
    const double step = p.value(h) / d;
    h -= step;
    if (!(h >= lo && h <= hi)) break;
    const double v = std::abs(p.value(h));
    if (v < best_abs) {
      best_abs = v;
      best = h;
    }
    if (v == 0.0 || std::abs(step) < 1e-17 * std::max(1.0, std::abs(h))) break;
  }
  return best;
}

}  // namespace

void DynamicsParams::validate() const {
  if (!(A >= 0.0)) throw ValidationError("dynamics: A must be nonnegative");
  if (!(h0 > 0.0)) throw ValidationError("dynamics: h0 must be positive");
  if (!(C0 >= 0.0)) throw ValidationError("dynamics: C0 must be nonnegative");
}

double sia_correction(double v_s, double s, double h, double A, const PhysicalConstants& c) {
  const double drive = c.rho * c.g * std::abs(s);
  return v_s - (A / 20.0) * drive * drive * drive * h * h * h * h;
}

double thickness_poly(double F, double v_s, double s, double omega, double A,
                      const PhysicalConstants& c, double h) {
  return F - sia_correction(v_s, s, h, A, c) * h * omega;
}

FluxProfile cumulative_flux(const FlowlineGrid& grid, std::span<const double> a_quad,
                            std::span<const double> tau_quad, std::span<const double> omega_quad,
                            const DynamicsParams& params) {
  const std::size_t m = grid.n_quad();
  if (a_quad.size() != m || tau_quad.size() != m || omega_quad.size() != m) {
    throw ValidationError("cumulative_flux: field lengths must match the quadrature grid");
  }

  // Per-cell midpoint integrands and their running sum from the divide.
  std::vector<double> cell_rate(m - 1);  // (a - tau) * omega at cell midpoints
  std::vector<double> prefix(m, 0.0);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double net = 0.5 * ((a_quad[i] - tau_quad[i]) + (a_quad[i + 1] - tau_quad[i + 1]));
    const double w = 0.5 * (omega_quad[i] + omega_quad[i + 1]);
    cell_rate[i] = net * w;
    prefix[i + 1] = prefix[i] + cell_rate[i] * (grid.quad_x[i + 1] - grid.quad_x[i]);
  }

  FluxProfile flux;
  flux.flux_at_obs.resize(grid.n_obs());
  for (std::size_t j = 0; j < grid.n_obs(); ++j) {
    const double xj = grid.obs_x[j];
    const std::size_t I = grid.interval_of(xj);
    flux.flux_at_obs[j] = params.C0 + prefix[I] + cell_rate[I] * (xj - grid.quad_x[I]);
  }
  return flux;
}

std::vector<double> thickness_roots(double F, double v_s, double s, double omega, double A,
                                    const PhysicalConstants& c, double h_max) {
  if (!(omega > 0.0)) throw ValidationError("thickness_roots: omega must be positive");
  const double drive = c.rho * c.g * std::abs(s);
  const Quintic p{F, v_s * omega, (A / 20.0) * drive * drive * drive * omega};
  const double tol = residual_tol(F);

  std::vector<double> roots;
  auto push = [&](double h) {
    if (h < 0.0 || h > h_max) return;
    if (std::abs(p.value(h)) > tol) return;
    for (double r : roots) {
      if (std::abs(r - h) <= 1e-9 * std::max(1.0, h)) return;
    }
    roots.push_back(h);
  };

  if (p.c5 == 0.0) {
    // Degenerate linear case: F = v_s h omega.
    if (p.c1 > 0.0) {
      push(p.c0 / p.c1);
    } else if (std::abs(p.c0) <= tol) {
      push(0.0);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
  }

  // With c5 > 0 the derivative -c1 + 5 c5 h^4 has at most one nonnegative
  // zero, so p is monotone on each side of it: bracket each side separately.
  std::vector<double> nodes{0.0};
  if (p.c1 > 0.0) {
    const double h_star = std::pow(p.c1 / (5.0 * p.c5), 0.25);
    if (h_star < h_max) nodes.push_back(h_star);
  }
  nodes.push_back(h_max);

  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const double lo = nodes[k], hi = nodes[k + 1];
    const double flo = p.value(lo), fhi = p.value(hi);
    if (std::abs(flo) <= tol) push(lo);
    if (std::abs(fhi) <= tol) push(hi);
    if ((flo < 0.0 && fhi > 0.0) || (flo > 0.0 && fhi < 0.0)) push(refine_root(p, lo, hi));
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

std::optional<double> select_root(std::span<const double> roots, RootStrategy strategy,
                                  double reference) {
  if (roots.empty()) return std::nullopt;
  switch (strategy) {
    case RootStrategy::max_real_positive:
      return *std::max_element(roots.begin(), roots.end());
    case RootStrategy::nearest_to_reference:
    case RootStrategy::continuity: {
      double best = roots[0];
      for (double r : roots) {
        if (std::abs(r - reference) < std::abs(best - reference)) best = r;
      }
      return best;
    }
  }
  return std::nullopt;
}

std::optional<double> solve_thickness(double F, double v_s, double s, double omega, double A,
                                      const PhysicalConstants& c, const RootSelection& sel,
                                      double reference) {
  const auto roots = thickness_roots(F, v_s, s, omega, A, c, sel.h_max);
  return select_root(roots, sel.strategy, reference);
}

bool ForwardResult::complete() const {
  return std::none_of(gap.begin(), gap.end(), [](std::uint8_t g) { return g != 0; });
}

ForwardResult forward_model_at(const FlowlineGrid& grid, std::span<const double> eval_x,
                               std::span<const double> v_s_at_eval,
                               std::span<const double> s_at_eval,
                               std::span<const double> a_quad, std::span<const double> tau_quad,
                               std::span<const double> omega_quad, const DynamicsParams& params,
                               const RootSelection& sel, const PhysicalConstants& c) {
  params.validate();
  const std::size_t n = eval_x.size();
  if (v_s_at_eval.size() != n || s_at_eval.size() != n) {
    throw ValidationError("forward_model: evaluation arrays must match eval_x");
  }
  if (sel.strategy == RootStrategy::nearest_to_reference && sel.reference.size() != n) {
    throw ValidationError("forward_model: nearest-to-reference needs one reference per point");
  }

  FlowlineGrid eval_grid = grid;
  eval_grid.obs_x.assign(eval_x.begin(), eval_x.end());
  const FluxProfile flux = cumulative_flux(eval_grid, a_quad, tau_quad, omega_quad, params);

  ForwardResult out;
  out.thickness.assign(n, kNaN);
  out.gap.assign(n, 0);
  double carried = params.h0;  // continuity reference from the previous point
  for (std::size_t j = 0; j < n; ++j) {
    const double omega_j = linear_interp_at(grid.quad_x, omega_quad, eval_x[j]);
    const double ref =
        sel.strategy == RootStrategy::nearest_to_reference ? sel.reference[j] : carried;
    const auto h = solve_thickness(flux.flux_at_obs[j], v_s_at_eval[j], s_at_eval[j], omega_j,
                                   params.A, c, sel, ref);
    if (h) {
      out.thickness[j] = *h;
      carried = *h;
    } else {
      out.gap[j] = 1;
    }
  }
  return out;
}

ForwardResult forward_model(const FlowlineGrid& grid, const SurfaceFields& fields,
                            std::span<const double> omega_quad, const DynamicsParams& params,
                            const RootSelection& sel, const PhysicalConstants& c) {
  return forward_model_at(grid, grid.obs_x, fields.v_s_at_obs, fields.s_at_obs, fields.a_at_quad,
                          fields.tau_at_quad, omega_quad, params, sel, c);
}

std::vector<double> synthetic_velocity(const FlowlineGrid& grid, std::span<const double> h_true,
                                       std::span<const double> s_at_obs,
                                       std::span<const double> a_quad,
                                       std::span<const double> tau_quad,
                                       std::span<const double> omega_quad,
                                       const DynamicsParams& params, const PhysicalConstants& c) {
  params.validate();
  const std::size_t n = grid.n_obs();
  if (h_true.size() != n || s_at_obs.size() != n) {
    throw ValidationError("synthetic_velocity: per-observation arrays must match obs_x");
  }
  for (double h : h_true) {
    if (!(h > 0.0)) throw ValidationError("synthetic_velocity: h_true must be positive");
  }

  const FluxProfile flux = cumulative_flux(grid, a_quad, tau_quad, omega_quad, params);
  std::vector<double> v_s(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double omega_j = linear_interp_at(grid.quad_x, omega_quad, grid.obs_x[j]);
    const double hw = h_true[j] * omega_j;
    if (hw == 0.0) throw ValidationError("synthetic_velocity: h * omega must be nonzero");
    const double drive = c.rho * c.g * std::abs(s_at_obs[j]);
    const double def = (params.A / 20.0) * drive * drive * drive * h_true[j] * h_true[j] *
                       h_true[j] * h_true[j];
    v_s[j] = flux.flux_at_obs[j] / hw + def;
    if (v_s[j] < 0.0) {
      throw ValidationError("synthetic_velocity: configuration produces negative velocity");
    }
  }
  return v_s;
}

std::vector<NaiveSolution> naive_inversion(const FlowlineGrid& grid, const SurfaceFields& fields,
                                           const Series& width_candidate,
                                           std::span<const double> A_values,
                                           std::span<const double> h_obs,
                                           const DynamicsParams& base, const PhysicalConstants& c,
                                           double h_max) {
  if (A_values.empty()) throw ValidationError("naive_inversion: needs at least one A value");
  if (h_obs.size() != grid.n_obs()) {
    throw ValidationError("naive_inversion: h_obs must match the observation grid");
  }
  const std::vector<double> omega_quad = linear_interp(width_candidate, grid.quad_x);

  RootSelection sel;
  sel.strategy = RootStrategy::nearest_to_reference;
  sel.reference.assign(h_obs.begin(), h_obs.end());
  sel.h_max = h_max;

  std::vector<NaiveSolution> out;
  out.reserve(A_values.size());
  for (double A : A_values) {
    DynamicsParams params = base;
    params.A = A;
    ForwardResult fr = forward_model(grid, fields, omega_quad, params, sel, c);
    NaiveSolution sol;
    sol.A = A;
    sol.thickness = std::move(fr.thickness);
    sol.gap = std::move(fr.gap);
    sol.n_gaps = static_cast<std::size_t>(std::count(sol.gap.begin(), sol.gap.end(), 1));
    out.push_back(std::move(sol));
  }
  return out;
}

}  // namespace glacier
