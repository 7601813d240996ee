#include <doctest.h>

#include <cmath>

#include "glacierbayes/errors.hpp"
#include "glacierbayes/inference.hpp"
#include "glacierbayes/rng.hpp"
#include "test_support.hpp"

using namespace glacier;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Small feasible problem: synthetic data generated through the dynamics so
// the likelihood is well defined near the truth.
struct Toy {
  InferenceProblem problem;
  std::vector<double> h_true;
};

Toy make_toy(bool constant_likelihood, std::uint64_t seed = 9000) {
  Toy toy;
  InferenceProblem& pb = toy.problem;
  std::vector<double> obs{1e4, 2e4, 3e4, 4e4};
  pb.grid = build_grid(5e4, 2000.0, obs);
  const std::size_t n = pb.grid.n_obs(), m = pb.grid.n_quad();

  Rng rng(seed);
  toy.h_true.resize(n);
  pb.fields.s_at_obs.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double t = pb.grid.obs_x[j] / 5e4;
    toy.h_true[j] = 1500.0 - 400.0 * t + rng.uniform(-25.0, 25.0);
    pb.fields.s_at_obs[j] = -(0.004 + 0.003 * t);
  }
  pb.fields.a_at_quad.resize(m);
  pb.fields.tau_at_quad.resize(m);
  std::vector<double> omega(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = pb.grid.quad_x[i] / 5e4;
    pb.fields.a_at_quad[i] = 0.6 + 0.1 * std::sin(3.0 * t);
    pb.fields.tau_at_quad[i] = 0.1 + 0.1 * t;
    omega[i] = 6e4 - 2e4 * t;
  }

  DynamicsParams gen;
  gen.A = 1e-18;
  gen.h0 = toy.h_true.front();
  pb.fields.v_s_at_obs = synthetic_velocity(pb.grid, toy.h_true, pb.fields.s_at_obs,
                                            pb.fields.a_at_quad, pb.fields.tau_at_quad, omega,
                                            gen, pb.constants);
  pb.fields.velocity_series = make_series(pb.grid.obs_x, pb.fields.v_s_at_obs);
  pb.fields.slope_series = make_series(pb.grid.obs_x, pb.fields.s_at_obs);

  pb.h_obs = toy.h_true;
  for (double& h : pb.h_obs) h += rng.normal(0.0, 20.0);

  pb.width_model.hyper.phi = 8000.0;
  pb.width_model.hyper.sigma2_omega = 1e8 / 3.0;
  pb.width_model.hyper.tau2 = 1e4 / 3.0;
  pb.width_model.quad_x = pb.grid.quad_x;
  pb.width_model.mean_at_quad = omega;

  pb.prior.h0_prior.mean = toy.h_true.front();
  pb.prior.h0_prior.sd = 300.0;
  pb.constant_likelihood = constant_likelihood;
  pb.validate();
  return toy;
}

ParameterState feasible_state(const Toy& toy) {
  ParameterState st;
  st.A = 2e-18;
  st.h0 = toy.h_true.front();
  st.sigma2_H = 900.0;
  st.sigma2_omega = 2e7;
  st.tau2 = 3000.0;
  st.omega_quad = toy.problem.width_model.mean_at_quad;
  return st;
}

}  // namespace

TEST_CASE("inverse gamma: mode, density shape, sampling moments") {
  InverseGammaPrior ig{2.0, 1e8};
  CHECK(ig.mode() == doctest::Approx(1e8 / 3.0));
  CHECK(ig.log_density(ig.mode()) > ig.log_density(ig.mode() * 0.2));
  CHECK(ig.log_density(ig.mode()) > ig.log_density(ig.mode() * 5.0));
  CHECK(ig.log_density(-1.0) == -std::numeric_limits<double>::infinity());

  // closed-form check of the density at one point:
  // log f(x) = a log b - lgamma(a) - (a+1) log x - b / x
  const double x = 4e7;
  const double expect = 2.0 * std::log(1e8) - std::lgamma(2.0) - 3.0 * std::log(x) - 1e8 / x;
  CHECK(ig.log_density(x) == doctest::Approx(expect).epsilon(1e-14));

  Rng rng(123);
  std::vector<double> draws(20000);
  for (double& d : draws) d = ig.sample(rng);
  // mean of IG(2, b) is b/(2-1) = b
  CHECK(oracle::mean_of(draws) == doctest::Approx(1e8).epsilon(0.1));
}

TEST_CASE("log_likelihood: zero residuals give the closed form") {
  Toy toy = make_toy(false);
  ParameterState st = feasible_state(toy);
  st.A = 1e-18;

  // make the observations equal the forward solution exactly
  DynamicsParams params;
  params.A = st.A;
  params.h0 = st.h0;
  RootSelection sel;
  const ForwardResult fr = forward_model(toy.problem.grid, toy.problem.fields, st.omega_quad,
                                         params, sel, toy.problem.constants);
  REQUIRE(fr.complete());
  toy.problem.h_obs = fr.thickness;

  const double n = static_cast<double>(toy.problem.h_obs.size());
  const double got = log_likelihood(st, toy.problem);
  CHECK(got == doctest::Approx(-0.5 * n * std::log(2.0 * 3.14159265358979323846 * st.sigma2_H))
                   .epsilon(1e-9));

  // doubling sigma2_H with fixed residuals follows the closed form
  ParameterState st2 = st;
  st2.sigma2_H = 2.0 * st.sigma2_H;
  const double got2 = log_likelihood(st2, toy.problem);
  CHECK(got2 - got == doctest::Approx(-0.5 * n * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("log_likelihood: matches a per-point normal-density summation oracle") {
  Toy toy = make_toy(false);
  const ParameterState st = feasible_state(toy);

  DynamicsParams params;
  params.A = st.A;
  params.h0 = st.h0;
  RootSelection sel;
  const ForwardResult fr = forward_model(toy.problem.grid, toy.problem.fields, st.omega_quad,
                                         params, sel, toy.problem.constants);
  REQUIRE(fr.complete());
  double oracle_sum = 0.0;
  for (std::size_t j = 0; j < toy.problem.h_obs.size(); ++j) {
    const double r = toy.problem.h_obs[j] - fr.thickness[j];
    oracle_sum += -0.5 * kLog2Pi - 0.5 * std::log(st.sigma2_H) - 0.5 * r * r / st.sigma2_H;
  }
  CHECK(log_likelihood(st, toy.problem) == doctest::Approx(oracle_sum).epsilon(1e-10));
}

TEST_CASE("log_prior: support boundaries and component oracle") {
  Toy toy = make_toy(false);
  ParameterState st = feasible_state(toy);

  ParameterState bad = st;
  bad.A = 2e-16;  // outside [0, 1e-16]
  CHECK(log_prior(bad, toy.problem) == -std::numeric_limits<double>::infinity());
  bad = st;
  bad.tau2 = -1.0;
  CHECK(log_prior(bad, toy.problem) == -std::numeric_limits<double>::infinity());

  // at prior modes the value matches the sum of component densities
  const PriorSpec& prior = toy.problem.prior;
  st.A = 0.5e-16;
  st.h0 = prior.h0_prior.mean;
  st.sigma2_H = prior.sigma2_H_prior.mode();
  st.sigma2_omega = prior.sigma2_omega_prior.mode();
  st.tau2 = prior.tau2_prior.mode();
  st.omega_quad = toy.problem.width_model.mean_at_quad;

  WidthModel wm = toy.problem.width_model;
  wm.hyper.sigma2_omega = st.sigma2_omega;
  wm.hyper.tau2 = st.tau2;
  const double expected = -std::log(prior.A_hi - prior.A_lo) +
                          prior.h0_prior.log_density(st.h0) +
                          prior.sigma2_H_prior.log_density(st.sigma2_H) +
                          prior.sigma2_omega_prior.log_density(st.sigma2_omega) +
                          prior.tau2_prior.log_density(st.tau2) +
                          width_log_density(st.omega_quad, wm, toy.problem.grid.quad_x);
  CHECK(log_prior(st, toy.problem) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_posterior is exactly log_prior plus log_likelihood") {
  Toy toy = make_toy(false);
  const ParameterState st = feasible_state(toy);
  CHECK(log_posterior(st, toy.problem) ==
        log_prior(st, toy.problem) + log_likelihood(st, toy.problem));
}

TEST_CASE("mh_accept: delta 0 accepts, -inf rejects, ratios are honored") {
  Rng rng(5150);
  for (int i = 0; i < 100; ++i) CHECK(mh_accept(0.0, rng));
  for (int i = 0; i < 100; ++i) CHECK(mh_accept(2.0, rng));
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(mh_accept(-std::numeric_limits<double>::infinity(), rng));
  }
}

TEST_CASE("detailed balance on a two-state toy posterior") {
  // states {0, 1} with target (0.3, 0.7); proposal deterministically flips
  const double pi0 = 0.3, pi1 = 0.7;
  Rng rng(777);
  int state = 0;
  long n0 = 0, flips01 = 0, n1 = 0, flips10 = 0;
  const int steps = 200000;
  for (int i = 0; i < steps; ++i) {
    if (state == 0) {
      ++n0;
      if (mh_accept(std::log(pi1 / pi0), rng)) {
        state = 1;
        ++flips01;
      }
    } else {
      ++n1;
      if (mh_accept(std::log(pi0 / pi1), rng)) {
        state = 0;
        ++flips10;
      }
    }
  }
  // transition probabilities: P(0->1) = 1, P(1->0) = 3/7
  CHECK(static_cast<double>(flips01) / n0 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(static_cast<double>(flips10) / n1 == doctest::Approx(3.0 / 7.0).epsilon(0.02));
  // and the invariant distribution emerges
  CHECK(static_cast<double>(n1) / steps == doctest::Approx(pi1).epsilon(0.02));
}

TEST_CASE("run_chain: zero iterations give empty samples; seeds reproduce bitwise") {
  Toy toy = make_toy(false);
  ChainConfig cfg;
  cfg.n_iterations = 0;
  cfg.seed = 4;
  const PosteriorSamples empty = run_chain(feasible_state(toy), cfg, toy.problem);
  CHECK(empty.chains.size() == 1);
  CHECK(empty.chains[0].empty());

  cfg.n_iterations = 400;
  cfg.target_retained = 200;
  const PosteriorSamples a = run_chain(feasible_state(toy), cfg, toy.problem);
  const PosteriorSamples b = run_chain(feasible_state(toy), cfg, toy.problem);
  REQUIRE(a.chains[0].size() == b.chains[0].size());
  CHECK(a.chains[0].size() > 0);
  for (std::size_t i = 0; i < a.chains[0].size(); ++i) {
    CHECK(a.chains[0][i].A == b.chains[0][i].A);
    CHECK(a.chains[0][i].h0 == b.chains[0][i].h0);
    CHECK(a.chains[0][i].omega_quad == b.chains[0][i].omega_quad);
  }

  ChainConfig other = cfg;
  other.seed = 5;
  const PosteriorSamples c = run_chain(feasible_state(toy), other, toy.problem);
  CHECK(a.chains[0].back().A != c.chains[0].back().A);
}

TEST_CASE("chains with an active likelihood stay inside the prior support") {
  Toy toy = make_toy(false);
  ChainConfig cfg;
  cfg.n_iterations = 1500;
  cfg.n_chains = 2;
  cfg.seed = 10;
  cfg.target_retained = 500;
  const PosteriorSamples samples = run_chains(cfg, toy.problem);
  for (const auto& chain : samples.chains) {
    REQUIRE(chain.size() > 10);
    for (const ParameterState& s : chain) {
      CHECK_NOTHROW(s.validate(toy.problem.prior));
    }
  }
}

TEST_CASE("mh_step: a single block update returns a new state and moves only that block") {
  Toy toy = make_toy(false);
  ChainConfig cfg;
  Sampler sampler(toy.problem, cfg);
  const ChainState st = sampler.make_state(feasible_state(toy));
  Rng rng(88);
  const auto [next, accepted] = mh_step(sampler, st, Block::A, rng);
  CHECK(next.params.h0 == st.params.h0);
  CHECK(next.params.sigma2_omega == st.params.sigma2_omega);
  if (accepted) {
    CHECK(next.params.A != st.params.A);
  } else {
    CHECK(next.params.A == st.params.A);
  }
}

TEST_CASE("prior recovery: constant likelihood reproduces the priors (desk scale)") {
  Toy toy = make_toy(true);
  ChainConfig cfg;
  cfg.n_iterations = 24000;
  cfg.n_chains = 1;
  cfg.seed = 20240601;
  cfg.thin = 1;
  const PosteriorSamples samples = run_chains(cfg, toy.problem);
  const auto& chain = samples.chains[0];
  REQUIRE(chain.size() == 12000);

  std::vector<double> a_mcmc, s2w_mcmc, t2_mcmc, h0_mcmc, s2h_mcmc;
  for (const ParameterState& s : chain) {
    a_mcmc.push_back(s.A);
    s2w_mcmc.push_back(s.sigma2_omega);
    t2_mcmc.push_back(s.tau2);
    h0_mcmc.push_back(s.h0);
    s2h_mcmc.push_back(s.sigma2_H);
  }

  Rng rng(31337);
  const PriorSpec& prior = toy.problem.prior;
  std::vector<double> a_dir, s2w_dir, t2_dir, h0_dir, s2h_dir;
  for (int i = 0; i < 50000; ++i) {
    a_dir.push_back(rng.uniform(prior.A_lo, prior.A_hi));
    s2w_dir.push_back(prior.sigma2_omega_prior.sample(rng));
    t2_dir.push_back(prior.tau2_prior.sample(rng));
    h0_dir.push_back(prior.h0_prior.sample(rng));
    s2h_dir.push_back(prior.sigma2_H_prior.sample(rng));
  }

  CHECK(oracle::ks_statistic(a_mcmc, a_dir) < 0.06);
  CHECK(oracle::ks_statistic(s2w_mcmc, s2w_dir) < 0.06);
  CHECK(oracle::ks_statistic(t2_mcmc, t2_dir) < 0.06);
  CHECK(oracle::ks_statistic(h0_mcmc, h0_dir) < 0.06);
  CHECK(oracle::ks_statistic(s2h_mcmc, s2h_dir) < 0.06);
}

TEST_CASE("acceptance rates land in the workable band on the synthetic benchmark") {
  Toy toy = make_toy(false);
  ChainConfig cfg;
  cfg.n_iterations = 4000;
  cfg.n_chains = 1;
  cfg.seed = 12;
  cfg.omega_smooth_modes = 12;  // both width sub-blocks active on the toy grid
  const PosteriorSamples samples = run_chains(cfg, toy.problem);
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const double rate = samples.acceptance_rates[0][b];
    CHECK(rate > 0.05);
    CHECK(rate < 0.7);
  }
}

TEST_CASE("predict_thickness: degenerate single sample and band nesting") {
  Toy toy = make_toy(false);
  ParameterState st = feasible_state(toy);

  PosteriorSamples single;
  single.chains.push_back({st});
  const std::vector<double> pred_x{1.5e4, 2.5e4, 3.5e4};
  const PredictionBands bands = predict_thickness(single, toy.problem, pred_x);
  for (std::size_t j = 0; j < pred_x.size(); ++j) {
    CHECK(bands.lo[j] == doctest::Approx(bands.hi[j]));
    CHECK(bands.mean[j] == doctest::Approx(bands.lo[j]));
    // adding observation noise strictly widens the degenerate interval
    CHECK(bands.lo_noise[j] < bands.lo[j]);
    CHECK(bands.hi_noise[j] > bands.hi[j]);
  }

  // a modest posterior cloud: noise bands contain the noise-free bands and
  // the quantiles are ordered around the mean
  ChainConfig cfg;
  cfg.n_iterations = 1000;
  cfg.n_chains = 2;
  cfg.seed = 3;
  cfg.target_retained = 250;
  const PosteriorSamples samples = run_chains(cfg, toy.problem);
  const PredictionBands full = predict_thickness(samples, toy.problem, pred_x);
  for (std::size_t j = 0; j < pred_x.size(); ++j) {
    CHECK(full.lo[j] <= full.mean[j]);
    CHECK(full.mean[j] <= full.hi[j]);
    CHECK(full.lo_noise[j] <= full.lo[j]);
    CHECK(full.hi_noise[j] >= full.hi[j]);
  }
}

TEST_CASE("predict_thickness: errors when most states have no forward solution") {
  Toy toy = make_toy(false);
  ParameterState good = feasible_state(toy);
  ParameterState bad = good;
  // pinch the width only around the prediction point: the flux accumulated
  // upstream cannot squeeze through, so no root exists below h_max
  for (std::size_t i = 0; i < bad.omega_quad.size(); ++i) {
    if (std::abs(toy.problem.grid.quad_x[i] - 2.5e4) <= 2500.0) bad.omega_quad[i] = 1e-4;
  }

  PosteriorSamples samples;
  samples.chains.push_back({good, bad, bad});
  const std::vector<double> pred_x{2.5e4};
  CHECK_THROWS_AS(predict_thickness(samples, toy.problem, pred_x), NumericalError);
}

namespace {

PosteriorSamples fabricated_chains(const std::vector<std::vector<double>>& a_values) {
  PosteriorSamples s;
  for (const auto& chain : a_values) {
    std::vector<ParameterState> states;
    for (double a : chain) {
      ParameterState st;
      st.A = a;
      st.h0 = 1000.0;
      st.sigma2_H = 2500.0;
      st.sigma2_omega = 1e8 / 3.0;
      st.tau2 = 3333.0;
      st.omega_quad = {5e4};
      states.push_back(std::move(st));
    }
    s.chains.push_back(std::move(states));
  }
  return s;
}

}  // namespace

TEST_CASE("chain_diagnostics: identical chains give scale reduction exactly 1") {
  Rng rng(2025);
  std::vector<double> base(500);
  for (double& v : base) v = rng.normal();
  const PosteriorSamples s = fabricated_chains({base, base, base});
  const auto diags = chain_diagnostics(s);
  for (const auto& d : diags) {
    if (d.name == "A") CHECK(d.rhat == 1.0);
  }
}

TEST_CASE("chain_diagnostics: shifted chains are flagged") {
  Rng rng(2026);
  std::vector<double> c1(500), c2(500);
  for (double& v : c1) v = rng.normal(0.0, 1.0);
  for (double& v : c2) v = rng.normal(5.0, 1.0);
  const auto diags = chain_diagnostics(fabricated_chains({c1, c2}));
  for (const auto& d : diags) {
    if (d.name == "A") CHECK(d.rhat > 1.2);
  }
}

TEST_CASE("chain_diagnostics: iid chains have near-nominal effective sample size") {
  Rng rng(2027);
  std::vector<std::vector<double>> chains(4, std::vector<double>(1000));
  for (auto& c : chains) {
    for (double& v : c) v = rng.normal();
  }
  const auto diags = chain_diagnostics(fabricated_chains(chains));
  for (const auto& d : diags) {
    if (d.name == "A") {
      CHECK(d.ess > 0.8 * 4000.0);
      CHECK(d.ess < 1.2 * 4000.0);
    }
  }
}

TEST_CASE("chain_diagnostics: input validation") {
  Rng rng(2028);
  std::vector<double> c1(100), c2(99);
  for (double& v : c1) v = rng.normal();
  for (double& v : c2) v = rng.normal();
  CHECK_THROWS_AS(chain_diagnostics(fabricated_chains({c1})), ValidationError);
  CHECK_THROWS_AS(chain_diagnostics(fabricated_chains({c1, c2})), ValidationError);
}
