#include <doctest.h>

#include <cmath>

#include "glacierbayes/dynamics.hpp"
#include "glacierbayes/errors.hpp"
#include "glacierbayes/rng.hpp"
#include "test_support.hpp"

using namespace glacier;

namespace {
const PhysicalConstants kC{};

double poly_at(double F, double v_s, double s, double omega, double A, double h) {
  return thickness_poly(F, v_s, s, omega, A, kC, h);
}
}  // namespace

TEST_CASE("sia_correction: zero deformation cases") {
  CHECK(sia_correction(123.0, 0.02, 800.0, 0.0, kC) == 123.0);
  CHECK(sia_correction(123.0, 0.02, 0.0, 1e-17, kC) == 123.0);
}

TEST_CASE("sia_correction: matches a high-precision scalar evaluation") {
  // v_s = 1000, s = 0.01, h = 1000, A = 1e-17:
  // drive = 917 * 9.81 * 0.01 = 89.96770, drive^3 = 728,211.297...,
  // (A/20) * drive^3 * h^4 = 5e-19 * 728211.297 * 1e12 = 0.36410565...
  const double v = sia_correction(1000.0, 0.01, 1000.0, 1e-17, kC);
  const double drive = 917.0 * 9.81 * 0.01;
  const double expected = 1000.0 - 5e-19 * drive * drive * drive * 1e12;
  CHECK(v == doctest::Approx(expected).epsilon(1e-14));
  CHECK(v == doctest::Approx(999.636).epsilon(1e-6));
}

TEST_CASE("sia_correction: slope sign does not matter") {
  CHECK(sia_correction(1000.0, -0.01, 1000.0, 1e-17, kC) ==
        sia_correction(1000.0, 0.01, 1000.0, 1e-17, kC));
}

TEST_CASE("cumulative_flux: zero net accumulation conserves the inflow") {
  const FlowlineGrid grid = build_grid(1e5, 1e4, std::vector<double>{2.5e4, 7.5e4});
  const std::size_t m = grid.n_quad();
  std::vector<double> a(m, 0.3), tau(m, 0.3), omega(m, 5e4);
  DynamicsParams p;
  p.C0 = 123.0;
  const FluxProfile f = cumulative_flux(grid, a, tau, omega, p);
  for (double v : f.flux_at_obs) CHECK(v == doctest::Approx(123.0));
}

TEST_CASE("cumulative_flux: constant integrand") {
  const FlowlineGrid grid = build_grid(1e5, 1e4, std::vector<double>{1e5});
  const std::size_t m = grid.n_quad();
  std::vector<double> a(m, 0.7), tau(m, 0.2), omega(m, 1e5);
  DynamicsParams p;
  const FluxProfile f = cumulative_flux(grid, a, tau, omega, p);
  CHECK(f.flux_at_obs[0] == doctest::Approx(0.5 * 1e5 * 1e5).epsilon(1e-12));
}

TEST_CASE("cumulative_flux: partial final interval is pro-rated") {
  const FlowlineGrid grid = build_grid(1000.0, 400.0, std::vector<double>{500.0});
  const std::size_t m = grid.n_quad();
  std::vector<double> a(m, 1.0), tau(m, 0.0), omega(m, 2.0);
  DynamicsParams p;
  const FluxProfile f = cumulative_flux(grid, a, tau, omega, p);
  // one full cell of 400 m plus 100 m of the second cell, integrand 2
  CHECK(f.flux_at_obs[0] == doctest::Approx(2.0 * 500.0));
}

TEST_CASE("cumulative_flux: smooth fields match a 10x refined quadrature oracle") {
  auto a_fn = [](double x) { return 0.6 + 0.2 * std::sin(x / 3e4); };
  auto tau_fn = [](double x) { return 0.1 + 0.1 * std::cos(x / 5e4); };
  auto w_fn = [](double x) { return 8e4 - 2e4 * (x / 2.7e5) + 5e3 * std::sin(x / 4e4); };

  std::vector<double> obs{3.7e4, 1.1e5, 2.3e5};
  const FlowlineGrid grid = build_grid(2.7e5, 2000.0, obs);
  std::vector<double> a(grid.n_quad()), tau(grid.n_quad()), omega(grid.n_quad());
  for (std::size_t i = 0; i < grid.n_quad(); ++i) {
    a[i] = a_fn(grid.quad_x[i]);
    tau[i] = tau_fn(grid.quad_x[i]);
    omega[i] = w_fn(grid.quad_x[i]);
  }
  DynamicsParams p;
  const FluxProfile f = cumulative_flux(grid, a, tau, omega, p);
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const double fine = oracle::refined_flux(a_fn, tau_fn, w_fn, 0.0, obs[j], 1350 * 10);
    CHECK(f.flux_at_obs[j] == doctest::Approx(fine).epsilon(0.005));
  }
}

TEST_CASE("cumulative_flux: observation outside quadrature coverage is an error") {
  FlowlineGrid grid = build_grid(1000.0, 500.0, std::vector<double>{800.0});
  grid.obs_x[0] = 1800.0;  // past the quadrature grid
  std::vector<double> a(grid.n_quad(), 1.0), tau(grid.n_quad(), 0.0), omega(grid.n_quad(), 1.0);
  CHECK_THROWS_AS(cumulative_flux(grid, a, tau, omega, DynamicsParams{}), ValidationError);
}

TEST_CASE("solve_thickness: A = 0 degenerate linear root") {
  RootSelection sel;
  const auto h = solve_thickness(1e9, 1000.0, 0.01, 1e5, 0.0, kC, sel, 0.0);
  REQUIRE(h.has_value());
  CHECK(*h == doctest::Approx(10.0).epsilon(1e-12));

  const auto h0 = solve_thickness(0.0, 1000.0, 0.01, 1e5, 0.0, kC, sel, 0.0);
  REQUIRE(h0.has_value());
  CHECK(*h0 == 0.0);
}

TEST_CASE("solve_thickness: recovers the constructed root and matches the bisection oracle") {
  const double A = 1e-17, v_s = 1000.0, s = 0.01, omega = 1e5, h_true = 1000.0;
  const double v_bar = sia_correction(v_s, s, h_true, A, kC);
  const double F = v_bar * h_true * omega;

  RootSelection sel;
  sel.strategy = RootStrategy::nearest_to_reference;
  const auto h = solve_thickness(F, v_s, s, omega, A, kC, sel, h_true);
  REQUIRE(h.has_value());
  CHECK(*h == doctest::Approx(h_true).epsilon(1e-6));

  const auto mine = thickness_roots(F, v_s, s, omega, A, kC, 10.0 * h_true);
  const auto ref = oracle::bisection_roots(
      [&](double hh) { return poly_at(F, v_s, s, omega, A, hh); }, 0.0, 10.0 * h_true);
  REQUIRE(mine.size() == ref.size());
  for (std::size_t i = 0; i < mine.size(); ++i) {
    CHECK(mine[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  }
}

TEST_CASE("solve_thickness: residual is always below tolerance on random feasible tuples") {
  Rng rng(314159);
  int found = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const double F = std::pow(10.0, rng.uniform(6.0, 10.5));
    const double v_s = std::pow(10.0, rng.uniform(0.5, 3.5));
    const double s = rng.uniform(0.001, 0.03) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
    const double omega = std::pow(10.0, rng.uniform(3.5, 5.5));
    const double A = rng.uniform01() < 0.2 ? 0.0 : std::pow(10.0, rng.uniform(-19.0, -16.0));
    const auto roots = thickness_roots(F, v_s, s, omega, A, kC, 10000.0);
    for (double h : roots) {
      ++found;
      CHECK(std::abs(poly_at(F, v_s, s, omega, A, h)) <= 1e-8 * std::max(std::abs(F), 1.0));
    }
  }
  CHECK(found > 500);  // the sweep must actually exercise roots
}

TEST_CASE("solve_thickness: no nonnegative root yields the no-solution marker") {
  // F > 0 but v_s = 0 and A = 0: no thickness can carry the flux
  RootSelection sel;
  CHECK_FALSE(solve_thickness(1e9, 0.0, 0.01, 1e5, 0.0, kC, sel, 0.0).has_value());
}

TEST_CASE("select_root strategies") {
  const std::vector<double> roots{10.0, 400.0, 9000.0};
  CHECK(*select_root(roots, RootStrategy::max_real_positive, 0.0) == 9000.0);
  CHECK(*select_root(roots, RootStrategy::nearest_to_reference, 350.0) == 400.0);
  CHECK(*select_root(roots, RootStrategy::continuity, 20.0) == 10.0);
  CHECK_FALSE(select_root(std::vector<double>{}, RootStrategy::continuity, 0.0).has_value());
}

namespace {

struct SyntheticCase {
  FlowlineGrid grid;
  std::vector<double> h_true, s_obs, a_quad, tau_quad, omega_quad, v_s;
  DynamicsParams params;
};

SyntheticCase make_synthetic(double A, std::uint64_t seed) {
  SyntheticCase sc;
  std::vector<double> obs;
  for (int i = 1; i <= 20; ++i) obs.push_back(i * 2.5e5 / 21.0);
  sc.grid = build_grid(2.5e5, 1000.0, obs);

  Rng rng(seed);
  const std::size_t n = sc.grid.n_obs(), m = sc.grid.n_quad();
  sc.h_true.resize(n);
  sc.s_obs.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double t = sc.grid.obs_x[j] / 2.5e5;
    sc.h_true[j] = 2200.0 - 900.0 * t + 150.0 * std::sin(6.0 * t) + rng.uniform(-20.0, 20.0);
    sc.s_obs[j] = -(0.004 + 0.006 * t);
  }
  sc.a_quad.resize(m);
  sc.tau_quad.resize(m);
  sc.omega_quad.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = sc.grid.quad_x[i] / 2.5e5;
    sc.a_quad[i] = 0.6 + 0.2 * std::cos(5.0 * t);
    sc.tau_quad[i] = 0.1 + 0.2 * t;
    sc.omega_quad[i] = 9e4 - 5e4 * t;
  }
  sc.params.A = A;
  sc.params.h0 = sc.h_true.front();
  sc.params.C0 = 0.0;
  sc.v_s = synthetic_velocity(sc.grid, sc.h_true, sc.s_obs, sc.a_quad, sc.tau_quad, sc.omega_quad,
                              sc.params, kC);
  return sc;
}

ForwardResult run_forward(const SyntheticCase& sc) {
  RootSelection sel;
  sel.strategy = RootStrategy::continuity;
  return forward_model_at(sc.grid, sc.grid.obs_x, sc.v_s, sc.s_obs, sc.a_quad, sc.tau_quad,
                          sc.omega_quad, sc.params, sel, kC);
}

}  // namespace

TEST_CASE("forward_model: A = 0 equals the closed form F/(v_s omega) pointwise") {
  SyntheticCase sc = make_synthetic(0.0, 21);
  const ForwardResult fr = run_forward(sc);
  REQUIRE(fr.complete());
  const FluxProfile flux = cumulative_flux(sc.grid, sc.a_quad, sc.tau_quad, sc.omega_quad,
                                           sc.params);
  for (std::size_t j = 0; j < sc.grid.n_obs(); ++j) {
    const double omega_j = linear_interp_at(sc.grid.quad_x, sc.omega_quad, sc.grid.obs_x[j]);
    CHECK(fr.thickness[j] ==
          doctest::Approx(flux.flux_at_obs[j] / (sc.v_s[j] * omega_j)).epsilon(1e-10));
  }
}

TEST_CASE("round-trip: forward_model recovers the thickness behind synthetic_velocity") {
  for (std::uint64_t seed : {31u, 32u, 33u, 34u}) {
    SyntheticCase sc = make_synthetic(1e-18, seed);
    const ForwardResult fr = run_forward(sc);
    REQUIRE(fr.complete());
    double max_err = 0.0;
    for (std::size_t j = 0; j < sc.h_true.size(); ++j) {
      max_err = std::max(max_err, std::abs(fr.thickness[j] - sc.h_true[j]));
    }
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("mass conservation: discrete balance holds between adjacent observations") {
  SyntheticCase sc = make_synthetic(1e-18, 77);
  const ForwardResult fr = run_forward(sc);
  REQUIRE(fr.complete());
  const FluxProfile flux = cumulative_flux(sc.grid, sc.a_quad, sc.tau_quad, sc.omega_quad,
                                           sc.params);

  for (std::size_t j = 0; j + 1 < sc.grid.n_obs(); ++j) {
    // v_bar h omega recomputed from the solved thickness
    auto flux_from_solution = [&](std::size_t k) {
      const double omega_k = linear_interp_at(sc.grid.quad_x, sc.omega_quad, sc.grid.obs_x[k]);
      const double v_bar = sia_correction(sc.v_s[k], sc.s_obs[k], fr.thickness[k], sc.params.A, kC);
      return v_bar * fr.thickness[k] * omega_k;
    };
    const double lhs = flux_from_solution(j + 1) - flux_from_solution(j);
    const double rhs = flux.flux_at_obs[j + 1] - flux.flux_at_obs[j];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
  }
}

TEST_CASE("synthetic_velocity: constant case and positivity guard") {
  const FlowlineGrid grid = build_grid(1e4, 1000.0, std::vector<double>{5e3});
  const std::size_t m = grid.n_quad();
  std::vector<double> a(m, 0.5), tau(m, 0.0), omega(m, 1e4);
  std::vector<double> h{500.0}, s{0.0};
  DynamicsParams p;
  p.h0 = 500.0;
  const auto v = synthetic_velocity(grid, h, s, a, tau, omega, p, kC);
  CHECK(v[0] == doctest::Approx(0.5 * 5e3 * 1e4 / (500.0 * 1e4)));

  // negative flux with zero deformation would need negative velocity
  std::vector<double> tau_big(m, 5.0);
  CHECK_THROWS_AS(synthetic_velocity(grid, h, s, a, tau_big, omega, p, kC), ValidationError);
}

TEST_CASE("monotonicity: increasing C0 never decreases A = 0 thickness") {
  SyntheticCase sc = make_synthetic(0.0, 55);
  const ForwardResult base = run_forward(sc);
  REQUIRE(base.complete());
  SyntheticCase more = sc;
  more.params.C0 = 5e8;
  const ForwardResult bumped = run_forward(more);
  REQUIRE(bumped.complete());
  for (std::size_t j = 0; j < sc.grid.n_obs(); ++j) {
    CHECK(bumped.thickness[j] >= base.thickness[j] - 1e-9);
  }
}

TEST_CASE("naive_inversion: exact data with the true width recovers the truth at A = 0") {
  SyntheticCase sc = make_synthetic(0.0, 61);
  SurfaceFields fields;
  fields.v_s_at_obs = sc.v_s;
  fields.s_at_obs = sc.s_obs;
  fields.a_at_quad = sc.a_quad;
  fields.tau_at_quad = sc.tau_quad;

  Series width = make_series(sc.grid.quad_x, sc.omega_quad);
  const std::vector<double> A_values{0.0};
  const auto solutions =
      naive_inversion(sc.grid, fields, width, A_values, sc.h_true, sc.params, kC);
  REQUIRE(solutions.size() == 1);
  CHECK(solutions[0].n_gaps == 0);
  for (std::size_t j = 0; j < sc.h_true.size(); ++j) {
    CHECK(solutions[0].thickness[j] == doctest::Approx(sc.h_true[j]).epsilon(1e-8));
  }
}

TEST_CASE("naive_inversion: wrong widths depart from the truth; A sweep tracks the oracle") {
  SyntheticCase sc = make_synthetic(1e-18, 62);
  SurfaceFields fields;
  fields.v_s_at_obs = sc.v_s;
  fields.s_at_obs = sc.s_obs;
  fields.a_at_quad = sc.a_quad;
  fields.tau_at_quad = sc.tau_quad;

  // three candidates: truth, and two impostors with different shapes (a pure
  // rescaling would cancel out of the mass balance)
  Series narrow = make_series(sc.grid.quad_x, sc.omega_quad);
  Series medium = narrow, wide = narrow;
  for (auto& s : medium) s.value *= 1.2 + 0.5 * (s.x / 2.5e5);
  for (auto& s : wide) s.value *= 2.2 - 1.1 * (s.x / 2.5e5);

  const std::vector<double> A_values{0.0, 1e-18, 1e-17, 1e-16};
  const auto truth_run =
      naive_inversion(sc.grid, fields, narrow, A_values, sc.h_true, sc.params, kC);
  const auto medium_run =
      naive_inversion(sc.grid, fields, medium, A_values, sc.h_true, sc.params, kC);
  const auto wide_run = naive_inversion(sc.grid, fields, wide, A_values, sc.h_true, sc.params, kC);

  // the true width with the true A reconstructs; wrong widths visibly depart
  double err_true = 0.0, err_medium = 0.0, err_wide = 0.0;
  for (std::size_t j = 0; j < sc.h_true.size(); ++j) {
    if (!truth_run[1].gap[j]) {
      err_true = std::max(err_true, std::abs(truth_run[1].thickness[j] - sc.h_true[j]));
    }
    if (!medium_run[1].gap[j]) {
      err_medium = std::max(err_medium, std::abs(medium_run[1].thickness[j] - sc.h_true[j]));
    }
    if (!wide_run[1].gap[j]) {
      err_wide = std::max(err_wide, std::abs(wide_run[1].thickness[j] - sc.h_true[j]));
    }
  }
  CHECK(err_true < 1e-6);
  CHECK(err_medium > 10.0);
  CHECK(err_wide > 10.0);
  // the impostor profiles are also distinct from one another
  double spread = 0.0;
  for (std::size_t j = 0; j < sc.h_true.size(); ++j) {
    if (!medium_run[1].gap[j] && !wide_run[1].gap[j]) {
      spread = std::max(spread, std::abs(medium_run[1].thickness[j] - wide_run[1].thickness[j]));
    }
  }
  CHECK(spread > 10.0);

  // thickening is monotone in A wherever the solution branch persists
  for (std::size_t j = 0; j < sc.h_true.size(); ++j) {
    for (std::size_t ai = 0; ai + 1 < A_values.size(); ++ai) {
      if (truth_run[ai].gap[j] || truth_run[ai + 1].gap[j]) continue;
      CHECK(truth_run[ai + 1].thickness[j] >= truth_run[ai].thickness[j] - 1e-9);
    }
  }

  // every solved point agrees with the per-point bisection oracle's closest root
  const FluxProfile flux = cumulative_flux(sc.grid, sc.a_quad, sc.tau_quad, sc.omega_quad,
                                           sc.params);
  for (std::size_t ai = 0; ai < A_values.size(); ++ai) {
    for (std::size_t j = 0; j < sc.h_true.size(); ++j) {
      if (truth_run[ai].gap[j]) continue;
      const double omega_j = linear_interp_at(sc.grid.quad_x, sc.omega_quad, sc.grid.obs_x[j]);
      const auto roots = oracle::bisection_roots(
          [&](double hh) {
            return poly_at(flux.flux_at_obs[j], sc.v_s[j], sc.s_obs[j], omega_j, A_values[ai], hh);
          },
          0.0, 10000.0);
      REQUIRE(!roots.empty());
      double best = roots[0];
      for (double r : roots) {
        if (std::abs(r - sc.h_true[j]) < std::abs(best - sc.h_true[j])) best = r;
      }
      CHECK(truth_run[ai].thickness[j] == doctest::Approx(best).epsilon(1e-6));
    }
  }
}
