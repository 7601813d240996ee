#include "glacierbayes/simulation.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <future>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "glacierbayes/errors.hpp"
#include "glacierbayes/io.hpp"
#include "glacierbayes/rng.hpp"

namespace glacier {

namespace {

constexpr double kLength = 272800.0;  // m
constexpr double kPi = 3.14159265358979323846;

double gauss_bump(double x, double center, double width) {
  const double u = (x - center) / width;
  return std::exp(-0.5 * u * u);
}

double builtin_thickness(double x) {
  const double t = x / kLength;
  // long trend, three thin-ice troughs, and km-scale roughness that a smooth
  // width process cannot mimic (the real radar profiles carry the same)
  return 1450.0 - 780.0 * t + 80.0 * std::sin(3.0 * kPi * t) -
         340.0 * gauss_bump(x, 130000.0, 6000.0) - 300.0 * gauss_bump(x, 200000.0, 5000.0) -
         200.0 * gauss_bump(x, 250000.0, 5000.0) + 40.0 * std::sin(2.0 * kPi * x / 9300.0) +
         25.0 * std::sin(2.0 * kPi * x / 5700.0 + 1.3);
}

double builtin_width(double x) {
  const double t = x / kLength;
  return 28000.0 + 64000.0 * std::pow(1.0 - t, 1.3);
}

double builtin_elevation(double x) {
  const double t = x / kLength;
  // dome-like surface: flat at the divide, steepening gently downstream
  return 250.0 + 1800.0 * (1.0 - 0.94 * std::pow(t, 2.2)) +
         5.0 * std::sin(2.0 * kPi * x / 23000.0);
}

double builtin_accumulation(double x) {
  const double t = x / kLength;
  return 0.85 + 0.25 * std::cos(2.0 * kPi * t);
}

double builtin_thinning(double x) {
  const double t = x / kLength;
  return 0.05 + 0.25 * t * t;
}

Series sample_function(double (*f)(double), double step) {
  Series s;
  for (double x = 0.0; x < kLength + 0.5 * step; x += step) {
    const double xc = std::min(x, kLength);
    s.push_back({xc, f(xc)});
  }
  if (s.back().x < kLength) s.push_back({kLength, f(kLength)});
  return s;
}

}  // namespace

void TruthProfile::validate() const {
  if (!(domain_length > 0.0)) throw ValidationError("truth profile: domain_length must be positive");
  validate_series(thickness, 3, "truth thickness");
  validate_series(width, 2, "truth width");
  validate_series(elevation, 3, "truth elevation");
  validate_series(accumulation, 2, "truth accumulation");
  validate_series(thinning, 2, "truth thinning");
  for (const Sample& s : thickness) {
    if (!(s.value > 0.0)) throw ValidationError("truth profile: thickness must be positive");
  }
  for (const Sample& s : width) {
    if (!(s.value > 0.0)) throw ValidationError("truth profile: width must be positive");
  }
}

TruthProfile builtin_truth_profile() {
  TruthProfile p;
  p.version_tag = "builtin-v1";
  p.domain_length = kLength;
  p.thickness = sample_function(&builtin_thickness, 400.0);
  p.width = sample_function(&builtin_width, 400.0);
  p.elevation = sample_function(&builtin_elevation, 400.0);
  p.accumulation = sample_function(&builtin_accumulation, 2000.0);
  p.thinning = sample_function(&builtin_thinning, 1500.0);
  p.validate();
  return p;
}

void dump_truth_profile(const TruthProfile& profile, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_series_csv(dir + "/thickness.csv", profile.thickness);
  write_series_csv(dir + "/width.csv", profile.width);
  write_series_csv(dir + "/elevation.csv", profile.elevation);
  write_series_csv(dir + "/accumulation.csv", profile.accumulation);
  write_series_csv(dir + "/thinning.csv", profile.thinning);
}

TruthProfile load_truth_profile(const std::string& dir) {
  TruthProfile p;
  p.version_tag = "csv:" + dir;
  p.thickness = read_series_csv(dir + "/thickness.csv");
  p.width = read_series_csv(dir + "/width.csv");
  p.elevation = read_series_csv(dir + "/elevation.csv");
  p.accumulation = read_series_csv(dir + "/accumulation.csv");
  p.thinning = read_series_csv(dir + "/thinning.csv");
  p.domain_length = p.thickness.back().x;
  p.validate();
  return p;
}

InferenceProblem build_problem(const ObservationSet& obs, const PipelineConfig& cfg) {
  obs.validate();
  cfg.constants.validate();

  double domain = cfg.domain_length;
  if (domain <= 0.0) {
    domain = std::max({obs.thickness.back().x, obs.velocity.back().x, obs.elevation.back().x,
                       obs.accumulation.back().x, obs.thinning.back().x});
  }

  InferenceProblem problem;
  problem.grid = build_grid(domain, cfg.quad_spacing, series_x(obs.thickness));
  problem.fields = prepare_surface_fields(obs, problem.grid, cfg.smoothers);
  problem.h_obs = series_values(obs.thickness);
  problem.constants = cfg.constants;
  problem.C0 = cfg.C0;
  problem.h_max = cfg.h_max;

  if (obs.width_candidates.empty()) {
    throw ValidationError("build_problem: at least one width candidate is required");
  }
  const Series* candidate = nullptr;
  std::string chosen = cfg.width_candidate;
  if (chosen.empty()) {
    // default to the narrowest candidate by average width
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [name, series] : obs.width_candidates) {
      double mean = 0.0;
      for (const Sample& s : series) mean += s.value;
      mean /= static_cast<double>(series.size());
      if (mean < best) {
        best = mean;
        chosen = name;
      }
    }
  }
  const auto it = obs.width_candidates.find(chosen);
  if (it == obs.width_candidates.end()) {
    throw ValidationError("build_problem: unknown width candidate '" + chosen + "'");
  }
  candidate = &it->second;

  problem.width_model.hyper.phi = cfg.phi;
  problem.width_model.hyper.sigma2_omega = cfg.prior.sigma2_omega_prior.mode();
  problem.width_model.hyper.tau2 = std::max(cfg.prior.tau2_prior.mode(), 1e-12);
  problem.width_model.quad_x = problem.grid.quad_x;
  problem.width_model.mean_at_quad =
      width_mean_function(problem.grid, problem.fields, problem.h_obs, *candidate,
                          problem.constants, cfg.C0, cfg.mean_floor_m);

  problem.prior = cfg.prior;
  if (cfg.h0_prior_from_data) problem.prior.h0_prior.mean = problem.h_obs.front();
  problem.validate();
  return problem;
}

void ExperimentSpec::validate() const {
  if (n_train < 2) throw ValidationError("experiment: n_train must be >= 2");
  if (!(noise_sd > 0.0)) throw ValidationError("experiment: noise_sd must be positive");
  if (!(true_A >= 0.0)) throw ValidationError("experiment: true_A must be nonnegative");
  chain.validate();
}

ObservationSet generate_observations(const TruthProfile& truth, const ExperimentSpec& spec) {
  truth.validate();
  if (spec.n_train < 2) throw ValidationError("generate_observations: n_train must be >= 2");
  if (!(spec.noise_sd >= 0.0)) throw ValidationError("generate_observations: noise_sd must be >= 0");

  const double L = truth.domain_length;

  // Dense generation grid; finer than the inference quadrature so the fit
  // faces honest discretization discrepancy, like real data would supply.
  const std::vector<double> gen_x = series_x(truth.thickness);
  FlowlineGrid gen_grid = make_grid(gen_x, gen_x, L);

  std::vector<double> h_dense = series_values(truth.thickness);
  const Series slope_series = central_difference_slope(truth.elevation);
  std::vector<double> s_dense = linear_interp(slope_series, gen_x);
  std::vector<double> a_dense = linear_interp(truth.accumulation, gen_x);
  std::vector<double> tau_dense = linear_interp(truth.thinning, gen_x);
  std::vector<double> w_dense = linear_interp(truth.width, gen_x);

  DynamicsParams params;
  params.A = spec.true_A;
  params.h0 = h_dense.front();
  params.C0 = spec.pipeline.C0;
  PhysicalConstants c = spec.pipeline.constants;
  const std::vector<double> v_dense =
      synthetic_velocity(gen_grid, h_dense, s_dense, a_dense, tau_dense, w_dense, params, c);

  ObservationSet obs;
  obs.velocity = make_series(gen_x, v_dense);
  obs.elevation = truth.elevation;
  obs.accumulation = truth.accumulation;
  obs.thinning = truth.thinning;

  Rng rng(Rng::derive(spec.seed, 11));
  for (int i = 1; i <= spec.n_train; ++i) {
    const double x = static_cast<double>(i) * L / static_cast<double>(spec.n_train + 1);
    double h = truth.thickness_at(x) + spec.noise_sd * rng.normal();
    h = std::max(h, 1.0);  // thickness observations are positive by contract
    obs.thickness.push_back({x, h});
  }

  // Candidates mimic streamline pairs traced from different divide starting
  // points: they differ in shape, not just scale, and the narrowest one is
  // the width the data were generated with.
  obs.width_candidates["narrowest"] = truth.width;
  Series medium = truth.width, widest = truth.width;
  for (Sample& s : medium) s.value *= 1.2 + 0.3 * (s.x / L);
  for (Sample& s : widest) s.value *= 2.0 - 0.4 * (s.x / L);
  obs.width_candidates["medium"] = std::move(medium);
  obs.width_candidates["widest"] = std::move(widest);

  obs.validate();
  return obs;
}

double width_coverage(const PosteriorSamples& samples, std::span<const double> width_true_quad) {
  if (samples.total_states() == 0) throw ValidationError("width_coverage: no posterior samples");
  const std::size_t m = width_true_quad.size();
  std::vector<double> column;
  column.reserve(samples.total_states());
  std::size_t covered = 0;
  for (std::size_t i = 0; i < m; ++i) {
    column.clear();
    for (const auto& chain : samples.chains) {
      for (const ParameterState& s : chain) {
        if (s.omega_quad.size() != m) {
          throw ValidationError("width_coverage: omega dimension mismatch");
        }
        column.push_back(s.omega_quad[i]);
      }
    }
    std::sort(column.begin(), column.end());
    const double n = static_cast<double>(column.size());
    auto quantile = [&](double p) {
      if (column.size() == 1) return column[0];
      const double idx = p * (n - 1.0);
      const auto lo = static_cast<std::size_t>(idx);
      const std::size_t hi = std::min(lo + 1, column.size() - 1);
      return column[lo] + (idx - static_cast<double>(lo)) * (column[hi] - column[lo]);
    };
    const double lo = quantile(0.025), hi = quantile(0.975);
    if (width_true_quad[i] >= lo && width_true_quad[i] <= hi) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(m);
}

std::uint64_t experiment_seed(std::uint64_t master, int n_train, double noise_sd) {
  const std::uint64_t cell = Rng::mix(static_cast<std::uint64_t>(n_train)) ^
                             Rng::mix(std::bit_cast<std::uint64_t>(noise_sd));
  return Rng::derive(master, cell);
}

ExperimentResult run_experiment(const TruthProfile& truth, const ExperimentSpec& spec) {
  ExperimentResult result;
  result.n_train = spec.n_train;
  result.noise_sd = spec.noise_sd;
  result.seed = spec.seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    spec.validate();
    const ObservationSet obs = generate_observations(truth, spec);
    const InferenceProblem problem = build_problem(obs, spec.pipeline);

    ChainConfig chain = spec.chain;
    chain.seed = Rng::derive(spec.seed, 21);
    const PosteriorSamples samples = run_chains(chain, problem);

    std::vector<double> a_values;
    for (const auto& ch : samples.chains) {
      for (const ParameterState& s : ch) a_values.push_back(s.A);
    }
    if (a_values.empty()) throw ValidationError("experiment produced no samples");
    result.A_mean = std::accumulate(a_values.begin(), a_values.end(), 0.0) /
                    static_cast<double>(a_values.size());
    std::sort(a_values.begin(), a_values.end());
    auto quantile = [&](double p) {
      const double idx = p * static_cast<double>(a_values.size() - 1);
      const auto lo = static_cast<std::size_t>(idx);
      const std::size_t hi = std::min(lo + 1, a_values.size() - 1);
      return a_values[lo] + (idx - static_cast<double>(lo)) * (a_values[hi] - a_values[lo]);
    };
    result.A_lo = quantile(0.025);
    result.A_hi = quantile(0.975);

    std::vector<double> width_true(problem.grid.n_quad());
    for (std::size_t i = 0; i < width_true.size(); ++i) {
      width_true[i] = truth.width_at(problem.grid.quad_x[i]);
    }
    result.width_coverage_95 = width_coverage(samples, width_true);

    std::vector<double> pred_x(spec.n_prediction_points);
    for (std::size_t i = 0; i < pred_x.size(); ++i) {
      pred_x[i] = static_cast<double>(i + 1) * truth.domain_length /
                  static_cast<double>(pred_x.size() + 1);
    }
    result.bands = predict_thickness(samples, problem, pred_x);

    // Coverage against the predictive band including observational error: the
    // sampled sigma2_H is what absorbs truth-model discrepancy in this
    // hierarchy, so the plus-noise band is the full 95% interval.
    std::size_t inside = 0;
    for (std::size_t i = 0; i < pred_x.size(); ++i) {
      const double h = truth.thickness_at(pred_x[i]);
      if (h >= result.bands.lo_noise[i] && h <= result.bands.hi_noise[i]) ++inside;
    }
    result.thickness_coverage_95 =
        static_cast<double>(inside) / static_cast<double>(pred_x.size());

    for (std::size_t b = 0; b < kNumBlocks; ++b) {
      double acc = 0.0;
      for (const auto& r : samples.acceptance_rates) acc += r[b];
      result.mean_acceptance[b] = acc / static_cast<double>(samples.acceptance_rates.size());
    }
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  result.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<ExperimentResult> run_experiment_grid(const TruthProfile& truth,
                                                  std::span<const ExperimentSpec> specs) {
  // Cells are independent (separate seeds, shared immutable truth), so they
  // can run concurrently; results keep the spec order.
  std::vector<std::future<ExperimentResult>> futures;
  futures.reserve(specs.size());
  for (const ExperimentSpec& spec : specs) {
    futures.push_back(std::async(std::launch::async,
                                 [&truth, spec]() { return run_experiment(truth, spec); }));
  }
  std::vector<ExperimentResult> results;
  results.reserve(specs.size());
  for (auto& f : futures) results.push_back(f.get());
  return results;
}

}  // namespace glacier
