#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "glacierbayes/errors.hpp"
#include "glacierbayes/rng.hpp"
#include "glacierbayes/simulation.hpp"
#include "test_support.hpp"

using namespace glacier;

TEST_CASE("builtin truth profile: deterministic, in range, width narrows downstream") {
  const TruthProfile a = builtin_truth_profile();
  const TruthProfile b = builtin_truth_profile();
  CHECK(a.version_tag == b.version_tag);
  CHECK(a.thickness == b.thickness);
  CHECK(a.width == b.width);
  CHECK(a.domain_length == doctest::Approx(272800.0));

  for (const Sample& s : a.thickness) {
    CHECK(s.value >= 500.0);
    CHECK(s.value <= 3000.0);
  }
  for (const Sample& s : a.width) CHECK(s.value > 0.0);
  for (std::size_t i = 1; i < a.width.size(); ++i) {
    if (a.width[i].x >= 0.5 * a.domain_length) {
      CHECK(a.width[i].value < a.width[i - 1].value);
    }
  }

  // the three advertised thin-ice troughs are local minima near their centers
  for (double center : {130000.0, 200000.0, 250000.0}) {
    const double at = a.thickness_at(center);
    CHECK(at < a.thickness_at(center - 15000.0));
    CHECK(at < a.thickness_at(center + 15000.0));
  }
}

TEST_CASE("truth profile: CSV dump and reload round-trips exactly") {
  const TruthProfile p = builtin_truth_profile();
  const std::string dir = "test_truth_dump";
  dump_truth_profile(p, dir);
  const TruthProfile q = load_truth_profile(dir);
  CHECK(q.thickness == p.thickness);
  CHECK(q.width == p.width);
  CHECK(q.elevation == p.elevation);
  CHECK(q.accumulation == p.accumulation);
  CHECK(q.thinning == p.thinning);
  CHECK(q.domain_length == p.domain_length);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generate_observations: spacing, tiny-noise limit, candidate ordering") {
  const TruthProfile truth = builtin_truth_profile();
  ExperimentSpec spec;
  spec.n_train = 5;
  spec.noise_sd = 1e-9;
  spec.seed = 1;
  const ObservationSet obs = generate_observations(truth, spec);

  REQUIRE(obs.thickness.size() == 5);
  const double expected_spacing = 272800.0 / 6.0;  // about 45.5 km
  CHECK(expected_spacing == doctest::Approx(45466.7).epsilon(1e-4));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(obs.thickness[i].x == doctest::Approx((i + 1) * expected_spacing));
    CHECK(obs.thickness[i].value ==
          doctest::Approx(truth.thickness_at(obs.thickness[i].x)).epsilon(1e-9));
  }
  REQUIRE(obs.width_candidates.count("narrowest") == 1);
  REQUIRE(obs.width_candidates.count("medium") == 1);
  REQUIRE(obs.width_candidates.count("widest") == 1);
  const auto& narrow = obs.width_candidates.at("narrowest");
  const auto& medium = obs.width_candidates.at("medium");
  const auto& widest = obs.width_candidates.at("widest");
  for (std::size_t i = 0; i < narrow.size(); ++i) {
    CHECK(narrow[i].value < medium[i].value);
    CHECK(medium[i].value < widest[i].value);
  }
}

TEST_CASE("generate_observations: noise has the requested scale") {
  const TruthProfile truth = builtin_truth_profile();
  std::vector<double> deviations;
  for (int rep = 0; rep < 300; ++rep) {
    ExperimentSpec spec;
    spec.n_train = 10;
    spec.noise_sd = 50.0;
    spec.seed = 5000 + static_cast<std::uint64_t>(rep);
    const ObservationSet obs = generate_observations(truth, spec);
    for (const Sample& s : obs.thickness) {
      deviations.push_back(s.value - truth.thickness_at(s.x));
    }
  }
  CHECK(oracle::mean_of(deviations) == doctest::Approx(0.0).scale(50.0).epsilon(0.05));
  CHECK(oracle::sd_of(deviations) == doctest::Approx(50.0).epsilon(0.05));
}

TEST_CASE("round-trip through the full pipeline: built-in truth survives fit-free forward") {
  // prepare_surface_fields + build_problem on near-noiseless observations must
  // put the forward model close to the truth at the true parameters
  const TruthProfile truth = builtin_truth_profile();
  ExperimentSpec spec;
  spec.n_train = 25;
  spec.noise_sd = 1e-6;
  spec.seed = 77;
  spec.pipeline.smoothers.velocity.lambda = 0.0;  // exact pass-through here
  const ObservationSet obs = generate_observations(truth, spec);
  const InferenceProblem problem = build_problem(obs, spec.pipeline);

  DynamicsParams params;
  params.A = spec.true_A;
  params.h0 = problem.h_obs.front();
  RootSelection sel;
  std::vector<double> omega_quad(problem.grid.n_quad());
  for (std::size_t i = 0; i < omega_quad.size(); ++i) {
    omega_quad[i] = truth.width_at(problem.grid.quad_x[i]);
  }
  const ForwardResult fr = forward_model(problem.grid, problem.fields, omega_quad, params, sel,
                                         problem.constants);
  REQUIRE(fr.complete());
  for (std::size_t j = 0; j < problem.h_obs.size(); ++j) {
    // residual discretization + smoothing error stays within a few meters
    CHECK(std::abs(fr.thickness[j] - problem.h_obs[j]) < 10.0);
  }
}

TEST_CASE("width_coverage: trivial extremes and brute-force agreement") {
  PosteriorSamples samples;
  Rng rng(9);
  std::vector<ParameterState> chain;
  for (int k = 0; k < 400; ++k) {
    ParameterState st;
    st.A = 1e-18;
    st.h0 = 1000.0;
    st.sigma2_H = 100.0;
    st.sigma2_omega = 1.0;
    st.tau2 = 1.0;
    st.omega_quad = {1000.0 + rng.normal(), 2000.0 + rng.normal(), 3000.0 + rng.normal()};
    chain.push_back(std::move(st));
  }
  samples.chains.push_back(std::move(chain));

  // truth at the widths' centers: always covered
  std::vector<double> center{1000.0, 2000.0, 3000.0};
  CHECK(width_coverage(samples, center) == 1.0);
  // truth far above every draw: never covered
  std::vector<double> above{1e6, 1e6, 1e6};
  CHECK(width_coverage(samples, above) == 0.0);

  // brute-force re-implementation on a partially covered truth
  std::vector<double> partial{1000.0, 2006.0, 2997.0};
  const double mine = width_coverage(samples, partial);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> col;
    for (const ParameterState& s : samples.chains[0]) col.push_back(s.omega_quad[i]);
    std::sort(col.begin(), col.end());
    const double idx_lo = 0.025 * (col.size() - 1.0), idx_hi = 0.975 * (col.size() - 1.0);
    auto interp = [&](double idx) {
      const std::size_t lo = static_cast<std::size_t>(idx);
      const std::size_t hi = std::min(lo + 1, col.size() - 1);
      return col[lo] + (idx - lo) * (col[hi] - col[lo]);
    };
    if (partial[i] >= interp(idx_lo) && partial[i] <= interp(idx_hi)) ++covered;
  }
  CHECK(mine == doctest::Approx(static_cast<double>(covered) / 3.0));
}

TEST_CASE("experiment seeds: stable per cell, distinct across cells") {
  CHECK(experiment_seed(1, 5, 10.0) == experiment_seed(1, 5, 10.0));
  CHECK(experiment_seed(1, 5, 10.0) != experiment_seed(1, 10, 10.0));
  CHECK(experiment_seed(1, 5, 10.0) != experiment_seed(1, 5, 50.0));
  CHECK(experiment_seed(1, 5, 10.0) != experiment_seed(2, 5, 10.0));
}

TEST_CASE("run_experiment: a small cell completes and reports sane summaries") {
  const TruthProfile truth = builtin_truth_profile();
  ExperimentSpec spec;
  spec.n_train = 10;
  spec.noise_sd = 50.0;
  spec.seed = experiment_seed(42, 10, 50.0);
  spec.chain.n_iterations = 800;
  spec.chain.n_chains = 2;
  spec.chain.target_retained = 200;
  spec.pipeline.quad_spacing = 4000.0;  // coarse grid keeps this test quick
  spec.n_prediction_points = 12;

  const ExperimentResult r = run_experiment(truth, spec);
  REQUIRE_MESSAGE(r.ok(), r.error);
  CHECK(r.width_coverage_95 >= 0.0);
  CHECK(r.width_coverage_95 <= 1.0);
  CHECK(r.A_lo <= r.A_mean);
  CHECK(r.A_mean <= r.A_hi);
  CHECK(r.bands.x.size() == 12);
  CHECK(r.runtime_seconds > 0.0);

  // identical spec identical result
  const ExperimentResult r2 = run_experiment(truth, spec);
  CHECK(r2.A_mean == r.A_mean);
  CHECK(r2.width_coverage_95 == r.width_coverage_95);

  // grid runner: single cell grid and failure isolation
  ExperimentSpec broken = spec;
  broken.n_train = 1;  // invalid
  const std::vector<ExperimentSpec> specs{spec, broken};
  const auto results = run_experiment_grid(truth, specs);
  REQUIRE(results.size() == 2);
  CHECK(results[0].ok());
  CHECK(results[0].A_mean == r.A_mean);
  CHECK_FALSE(results[1].ok());
}
