#include "glacierbayes/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glacierbayes/errors.hpp"

namespace glacier {

void SmootherSpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("smoother: lambda must be nonnegative and finite");
  }
  if (kind == SmootherKind::moving_average) {
    const int w = static_cast<int>(lambda);
    if (w < 1 || w % 2 == 0) {
      throw ValidationError("smoother: moving-average window must be an odd positive integer");
    }
  }
}

namespace {

// Banded pieces of the Reinsch system (R + lambda Q^T Q) gamma = Q^T y for a
// natural cubic smoothing spline. m = n - 2 interior knots; bandwidth 2.
struct ReinschSystem {
  std::size_t n = 0, m = 0;
  std::vector<double> h;                    // knot spacings, n-1
  std::vector<double> r0, r1;               // R diagonal / first off-diagonal
  std::vector<double> q0, q1, q2;           // Q^T Q diagonal / off-diagonals
  std::vector<double> qty;                  // Q^T y

  ReinschSystem(std::span<const double> x, std::span<const double> y) {
    n = x.size();
    m = n - 2;
    h.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x[i + 1] - x[i];
      if (!(h[i] > 0.0)) throw ValidationError("smoothing_spline: locations must be strictly ascending");
    }
    r0.resize(m);
    r1.assign(m, 0.0);
    q0.resize(m);
    q1.assign(m, 0.0);
    q2.assign(m, 0.0);
    qty.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
      const double a = 1.0 / h[r];
      const double b = -1.0 / h[r] - 1.0 / h[r + 1];
      const double c = 1.0 / h[r + 1];
      r0[r] = (h[r] + h[r + 1]) / 3.0;
      if (r + 1 < m) r1[r] = h[r + 1] / 6.0;
      q0[r] = a * a + b * b + c * c;
      if (r + 1 < m) q1[r] = b * c + c * (-1.0 / h[r + 1] - 1.0 / h[r + 2]);
      if (r + 2 < m) q2[r] = c * (1.0 / h[r + 2]);
      qty[r] = a * y[r] + b * y[r + 1] + c * y[r + 2];
    }
  }
};

// Symmetric pentadiagonal LDL^T factor.
struct BandFactor {
  std::vector<double> d, l1, l2;
};

BandFactor band_ldlt(const ReinschSystem& sys, double lambda) {
  const std::size_t m = sys.m;
  BandFactor f;
  f.d.assign(m, 0.0);
  f.l1.assign(m, 0.0);
  f.l2.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double di = sys.r0[i] + lambda * sys.q0[i];
    if (i >= 1) di -= f.l1[i - 1] * f.l1[i - 1] * f.d[i - 1];
    if (i >= 2) di -= f.l2[i - 2] * f.l2[i - 2] * f.d[i - 2];
    if (!(di > 0.0)) throw NumericalError("smoothing_spline: banded factorization broke down");
    f.d[i] = di;
    if (i + 1 < m) {
      double b1 = sys.r1[i] + lambda * sys.q1[i];
      if (i >= 1) b1 -= f.l2[i - 1] * f.l1[i - 1] * f.d[i - 1];
      f.l1[i] = b1 / di;
    }
    if (i + 2 < m) f.l2[i] = lambda * sys.q2[i] / di;
  }
  return f;
}

std::vector<double> band_solve(const BandFactor& f, const std::vector<double>& rhs) {
  const std::size_t m = rhs.size();
  std::vector<double> v(m);
  for (std::size_t i = 0; i < m; ++i) {
    double vi = rhs[i];
    if (i >= 1) vi -= f.l1[i - 1] * v[i - 1];
    if (i >= 2) vi -= f.l2[i - 2] * v[i - 2];
    v[i] = vi;
  }
  for (std::size_t i = 0; i < m; ++i) v[i] /= f.d[i];
  for (std::size_t k = m; k-- > 0;) {
    if (k + 1 < m) v[k] -= f.l1[k] * v[k + 1];
    if (k + 2 < m) v[k] -= f.l2[k] * v[k + 2];
  }
  return v;
}

// In-band entries of the inverse of the factored matrix (Takahashi
// recurrence); enough to evaluate tr(B^{-1} Q^T Q) for the GCV trace.
void band_inverse(const BandFactor& f, std::vector<double>& zd, std::vector<double>& z1,
                  std::vector<double>& z2) {
  const std::size_t m = f.d.size();
  zd.assign(m, 0.0);
  z1.assign(m, 0.0);
  z2.assign(m, 0.0);
  for (std::size_t j = m; j-- > 0;) {
    double v = 1.0 / f.d[j];
    if (j + 1 < m) v -= f.l1[j] * z1[j];
    if (j + 2 < m) v -= f.l2[j] * z2[j];
    zd[j] = v;
    if (j >= 1) {
      double w = -f.l1[j - 1] * zd[j];
      if (j + 1 < m) w -= f.l2[j - 1] * z1[j];
      z1[j - 1] = w;
    }
    if (j >= 2) z2[j - 2] = -f.l1[j - 2] * z1[j - 1] - f.l2[j - 2] * zd[j];
  }
}

SplineFit fit_at_lambda(const ReinschSystem& sys, std::span<const double> y, double lambda) {
  const std::size_t n = sys.n, m = sys.m;
  const BandFactor fac = band_ldlt(sys, lambda);
  const std::vector<double> gamma = band_solve(fac, sys.qty);

  SplineFit fit;
  fit.lambda = lambda;
  fit.fitted.assign(y.begin(), y.end());
  for (std::size_t k = 0; k < n; ++k) {
    double qg = 0.0;
    if (k >= 2 && k - 2 < m) qg += gamma[k - 2] / sys.h[k - 1];
    if (k >= 1 && k - 1 < m) qg += gamma[k - 1] * (-1.0 / sys.h[k - 1] - 1.0 / sys.h[k]);
    if (k < m) qg += gamma[k] / sys.h[k];
    fit.fitted[k] -= lambda * qg;
  }

  std::vector<double> zd, z1, z2;
  band_inverse(fac, zd, z1, z2);
  double tr = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    tr += zd[i] * sys.q0[i];
    if (i + 1 < m) tr += 2.0 * z1[i] * sys.q1[i];
    if (i + 2 < m) tr += 2.0 * z2[i] * sys.q2[i];
  }
  fit.trace = static_cast<double>(n) - lambda * tr;

  double rss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = y[k] - fit.fitted[k];
    rss += r * r;
  }
  const double dof = static_cast<double>(n) - fit.trace;
  fit.gcv = dof > 0.0 ? static_cast<double>(n) * rss / (dof * dof)
                      : std::numeric_limits<double>::infinity();
  return fit;
}

}  // namespace

SplineFit smoothing_spline(std::span<const double> x, std::span<const double> y, double lambda) {
  if (x.size() != y.size()) throw ValidationError("smoothing_spline: size mismatch");
  if (x.size() < 4) throw ValidationError("smoothing_spline: needs at least 4 points");
  if (!(lambda >= 0.0)) throw ValidationError("smoothing_spline: lambda must be nonnegative");
  ReinschSystem sys(x, y);
  return fit_at_lambda(sys, y, lambda);
}

SplineFit smoothing_spline_gcv(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("smoothing_spline: size mismatch");
  if (x.size() < 4) throw ValidationError("smoothing_spline: needs at least 4 points");
  ReinschSystem sys(x, y);

  // Bracket in units of the mean spacing cubed, which is where the effective
  // degrees of freedom sweep from ~n down to ~2.
  const double hbar = (x.back() - x.front()) / static_cast<double>(x.size() - 1);
  const double lref = hbar * hbar * hbar;
  const double lo = std::log(lref * 1e-8), hi = std::log(lref * 1e12);

  const int coarse = 41;
  double best_log = lo;
  double best_gcv = std::numeric_limits<double>::infinity();
  for (int i = 0; i < coarse; ++i) {
    const double ll = lo + (hi - lo) * static_cast<double>(i) / (coarse - 1);
    const SplineFit f = fit_at_lambda(sys, y, std::exp(ll));
    if (f.gcv < best_gcv) {
      best_gcv = f.gcv;
      best_log = ll;
    }
  }

  // Golden-section refinement around the coarse minimum.
  const double step = (hi - lo) / (coarse - 1);
  double a = best_log - step, b = best_log + step;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = fit_at_lambda(sys, y, std::exp(c)).gcv;
  double fd = fit_at_lambda(sys, y, std::exp(d)).gcv;
  for (int it = 0; it < 40; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = fit_at_lambda(sys, y, std::exp(c)).gcv;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = fit_at_lambda(sys, y, std::exp(d)).gcv;
    }
  }
  const double refined = 0.5 * (a + b);
  SplineFit f = fit_at_lambda(sys, y, std::exp(refined));
  if (best_gcv < f.gcv) f = fit_at_lambda(sys, y, std::exp(best_log));
  return f;
}

Series smooth_series(const Series& raw, const SmootherSpec& spec) {
  spec.validate();
  if (spec.kind == SmootherKind::spline) {
    validate_series(raw, 4, "smooth_series input");
    const auto xs = series_x(raw);
    const auto ys = series_values(raw);
    const SplineFit fit = spec.choose_lambda_by_gcv ? smoothing_spline_gcv(xs, ys)
                                                    : smoothing_spline(xs, ys, spec.lambda);
    return make_series(xs, fit.fitted);
  }

  validate_series(raw, 1, "smooth_series input");
  const int half = (static_cast<int>(spec.lambda) - 1) / 2;
  const int n = static_cast<int>(raw.size());
  Series out(raw.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int k = lo; k <= hi; ++k) acc += raw[k].value;
    out[i] = {raw[i].x, acc / static_cast<double>(hi - lo + 1)};
  }
  return out;
}

Series central_difference_slope(const Series& elevation) {
  validate_series(elevation, 3, "central_difference_slope input");
  const std::size_t n = elevation.size();
  Series slope(n);
  slope[0] = {elevation[0].x,
              (elevation[1].value - elevation[0].value) / (elevation[1].x - elevation[0].x)};
  for (std::size_t i = 1; i + 1 < n; ++i) {
    slope[i] = {elevation[i].x, (elevation[i + 1].value - elevation[i - 1].value) /
                                    (elevation[i + 1].x - elevation[i - 1].x)};
  }
  slope[n - 1] = {elevation[n - 1].x, (elevation[n - 1].value - elevation[n - 2].value) /
                                          (elevation[n - 1].x - elevation[n - 2].x)};
  return slope;
}

SurfaceFields prepare_surface_fields(const ObservationSet& obs, const FlowlineGrid& grid,
                                     const FieldSmoothers& specs) {
  obs.validate();
  grid.validate();

  SurfaceFields fields;
  fields.velocity_series = smooth_series(obs.velocity, specs.velocity);
  const Series smooth_elev = smooth_series(obs.elevation, specs.elevation);
  fields.slope_series = central_difference_slope(smooth_elev);

  fields.v_s_at_obs = linear_interp(fields.velocity_series, grid.obs_x);
  for (double& v : fields.v_s_at_obs) v = std::max(v, 0.0);
  fields.s_at_obs = linear_interp(fields.slope_series, grid.obs_x);

  const Series smooth_a = smooth_series(obs.accumulation, specs.accumulation);
  const Series smooth_tau = smooth_series(obs.thinning, specs.thinning);
  fields.a_at_quad = linear_interp(smooth_a, grid.quad_x);
  fields.tau_at_quad = linear_interp(smooth_tau, grid.quad_x);
  return fields;
}

}  // namespace glacier
