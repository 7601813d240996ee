// Command-line front end: smooth, naive, fit, predict, simulate, coverage,
// diagnose. Every command loads one JSON config (--config), applies flag
// overrides, and writes its results plus a byte-identical snapshot of the
// loaded config under the output directory. All randomness flows from the
// config's master seed, so re-running a command from its effective config
// reproduces the numeric outputs exactly; wall-clock metadata goes to a
// separate runtime.json.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "glacierbayes/errors.hpp"
#include "glacierbayes/io.hpp"
#include "glacierbayes/rng.hpp"
#include "glacierbayes/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace glacier;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration")->required();
  cmd->add_option("--output-dir", args.output_dir, "overrides config output_dir");
  cmd->add_option("--seed", args.seed, "overrides config seed");
}

RunConfig load_config(const CommonArgs& args, json& overrides) {
  RunConfig cfg = RunConfig::load(args.config_path);
  if (args.output_dir) {
    cfg.output_dir = *args.output_dir;
    overrides["output_dir"] = *args.output_dir;
  }
  if (args.seed) {
    cfg.seed = *args.seed;
    overrides["seed"] = *args.seed;
  }
  return cfg;
}

PipelineConfig pipeline_from(const RunConfig& cfg) {
  PipelineConfig pc;
  pc.constants = cfg.constants;
  pc.quad_spacing = cfg.quad_spacing;
  pc.domain_length = cfg.domain_length;
  pc.smoothers = to_field_smoothers(cfg);
  pc.phi = cfg.phi;
  pc.mean_floor_m = cfg.mean_floor_m;
  pc.width_candidate = cfg.width_candidate;
  pc.prior = cfg.prior;
  pc.h0_prior_from_data = cfg.h0_prior_from_data;
  pc.C0 = cfg.C0;
  pc.h_max = cfg.h_max;
  return pc;
}

ExperimentSpec experiment_from(const RunConfig& cfg, int n_train, double noise_sd) {
  ExperimentSpec spec;
  spec.n_train = n_train;
  spec.noise_sd = noise_sd;
  spec.true_A = cfg.sim_true_A;
  spec.seed = experiment_seed(cfg.seed, n_train, noise_sd);
  spec.chain = cfg.chain;
  spec.pipeline = pipeline_from(cfg);
  spec.pipeline.prior.sigma2_H_prior = cfg.sim_sigma2_H_prior;
  spec.pipeline.smoothers.velocity.choose_lambda_by_gcv = false;
  spec.pipeline.smoothers.velocity.lambda = cfg.sim_velocity_lambda;
  spec.n_prediction_points = cfg.n_prediction_points;
  return spec;
}

// Observations for the non-simulation commands: user CSVs, or synthetic data
// from the built-in profile when the config says so.
ObservationSet acquire_observations(const RunConfig& cfg) {
  if (!cfg.builtin_profile) return load_observations(cfg);
  const TruthProfile truth = builtin_truth_profile();
  ExperimentSpec spec = experiment_from(cfg, cfg.sim_n_train.front(), cfg.sim_noise_sd.front());
  spec.seed = Rng::derive(cfg.seed, 7);
  return generate_observations(truth, spec);
}

void write_bundle_front_matter(const RunConfig& cfg, const std::string& command,
                               const json& overrides) {
  fs::create_directories(cfg.output_dir);
  write_text_file(cfg.output_dir + "/config_snapshot.json", cfg.snapshot);
  write_json_file(cfg.output_dir + "/effective_config.json", cfg.to_json());
  write_json_file(cfg.output_dir + "/invocation.json",
                  json{{"command", command}, {"overrides", overrides}});
}

std::vector<TableRow> band_rows(const PredictionBands& bands, const std::string& quantity) {
  std::vector<TableRow> rows;
  for (std::size_t j = 0; j < bands.x.size(); ++j) {
    rows.push_back({bands.x[j], quantity, "mean", bands.mean[j]});
    rows.push_back({bands.x[j], quantity, "q2.5", bands.lo[j]});
    rows.push_back({bands.x[j], quantity, "q97.5", bands.hi[j]});
    rows.push_back({bands.x[j], quantity, "q2.5_plus_noise", bands.lo_noise[j]});
    rows.push_back({bands.x[j], quantity, "q97.5_plus_noise", bands.hi_noise[j]});
  }
  return rows;
}

json scalar_summary(double mean, double lo, double hi) {
  return json{{"mean", mean}, {"lo", lo}, {"hi", hi}};
}

struct ScalarStats {
  double mean, lo, hi;
};

ScalarStats pooled_stats(const PosteriorSamples& samples, double (*get)(const ParameterState&)) {
  std::vector<double> v;
  for (const auto& chain : samples.chains) {
    for (const auto& s : chain) v.push_back(get(s));
  }
  std::sort(v.begin(), v.end());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  auto q = [&](double p) {
    const double idx = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (idx - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {mean, q(0.025), q(0.975)};
}

json posterior_scalar_summaries(const PosteriorSamples& samples) {
  json out;
  const auto a = pooled_stats(samples, [](const ParameterState& s) { return s.A; });
  const auto h0 = pooled_stats(samples, [](const ParameterState& s) { return s.h0; });
  const auto s2h = pooled_stats(samples, [](const ParameterState& s) { return s.sigma2_H; });
  const auto s2w = pooled_stats(samples, [](const ParameterState& s) { return s.sigma2_omega; });
  const auto t2 = pooled_stats(samples, [](const ParameterState& s) { return s.tau2; });
  out["A"] = scalar_summary(a.mean, a.lo, a.hi);
  out["h0"] = scalar_summary(h0.mean, h0.lo, h0.hi);
  out["sigma2_H"] = scalar_summary(s2h.mean, s2h.lo, s2h.hi);
  out["sigma2_omega"] = scalar_summary(s2w.mean, s2w.lo, s2w.hi);
  out["tau2"] = scalar_summary(t2.mean, t2.lo, t2.hi);
  return out;
}

std::vector<TableRow> width_band_rows(const PosteriorSamples& samples,
                                      const std::vector<double>& quad_x) {
  std::vector<TableRow> rows;
  const std::size_t m = quad_x.size();
  std::vector<double> col;
  for (std::size_t i = 0; i < m; ++i) {
    col.clear();
    for (const auto& chain : samples.chains) {
      for (const auto& s : chain) col.push_back(s.omega_quad[i]);
    }
    std::sort(col.begin(), col.end());
    auto q = [&](double p) {
      const double idx = p * static_cast<double>(col.size() - 1);
      const auto lo = static_cast<std::size_t>(idx);
      const std::size_t hi = std::min(lo + 1, col.size() - 1);
      return col[lo] + (idx - static_cast<double>(lo)) * (col[hi] - col[lo]);
    };
    double mean = 0.0;
    for (double x : col) mean += x;
    mean /= static_cast<double>(col.size());
    rows.push_back({quad_x[i], "width", "mean", mean});
    rows.push_back({quad_x[i], "width", "q2.5", q(0.025)});
    rows.push_back({quad_x[i], "width", "q97.5", q(0.975)});
  }
  return rows;
}

std::vector<double> interior_points(double length, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(i + 1) * length / static_cast<double>(n + 1);
  }
  return x;
}

// ---- commands -------------------------------------------------------------

int cmd_smooth(const RunConfig& cfg, const json& overrides) {
  write_bundle_front_matter(cfg, "smooth", overrides);
  const ObservationSet obs = acquire_observations(cfg);
  const FieldSmoothers specs = to_field_smoothers(cfg);

  json lambdas;
  auto smooth_one = [&](const Series& raw, const SmootherSpec& spec, const std::string& name) {
    Series out;
    if (spec.kind == SmootherKind::spline && spec.choose_lambda_by_gcv) {
      const SplineFit fit = smoothing_spline_gcv(series_x(raw), series_values(raw));
      out = make_series(series_x(raw), fit.fitted);
      lambdas[name] = {{"lambda", fit.lambda}, {"edf", fit.trace}};
    } else {
      out = smooth_series(raw, spec);
      lambdas[name] = {{"lambda", spec.lambda}};
    }
    write_series_csv(cfg.output_dir + "/smoothed_" + name + ".csv", out);
    return out;
  };

  smooth_one(obs.velocity, specs.velocity, "velocity");
  const Series elev = smooth_one(obs.elevation, specs.elevation, "elevation");
  write_series_csv(cfg.output_dir + "/slope.csv", central_difference_slope(elev));
  smooth_one(obs.accumulation, specs.accumulation, "accumulation");
  smooth_one(obs.thinning, specs.thinning, "thinning");
  write_json_file(cfg.output_dir + "/summary.json", json{{"smoothers", lambdas}});
  return 0;
}

int cmd_naive(const RunConfig& cfg, const json& overrides, const std::string& width_name,
              const std::vector<double>& A_override) {
  write_bundle_front_matter(cfg, "naive", overrides);
  const ObservationSet obs = acquire_observations(cfg);
  PipelineConfig pc = pipeline_from(cfg);

  const double domain =
      pc.domain_length > 0.0
          ? pc.domain_length
          : std::max({obs.thickness.back().x, obs.velocity.back().x, obs.elevation.back().x,
                      obs.accumulation.back().x, obs.thinning.back().x});
  const FlowlineGrid grid = build_grid(domain, pc.quad_spacing, series_x(obs.thickness));
  const SurfaceFields fields = prepare_surface_fields(obs, grid, pc.smoothers);
  const std::vector<double> h_obs = series_values(obs.thickness);

  const std::string chosen =
      !width_name.empty() ? width_name
                          : (cfg.width_candidate.empty() ? std::string{"narrowest"}
                                                         : cfg.width_candidate);
  const auto it = obs.width_candidates.find(chosen);
  if (it == obs.width_candidates.end()) {
    throw ValidationError("naive: unknown width candidate '" + chosen + "'");
  }
  const std::vector<double> A_values = A_override.empty() ? cfg.naive_A_values : A_override;

  DynamicsParams base;
  base.h0 = h_obs.front();
  base.C0 = cfg.C0;
  const auto solutions =
      naive_inversion(grid, fields, it->second, A_values, h_obs, base, cfg.constants, cfg.h_max);

  std::vector<TableRow> rows;
  json gaps = json::array();
  for (const NaiveSolution& sol : solutions) {
    const std::string tag = "thickness_A=" + format_double(sol.A);
    json gap_locs = json::array();
    for (std::size_t j = 0; j < grid.n_obs(); ++j) {
      if (sol.gap[j]) {
        gap_locs.push_back(grid.obs_x[j]);
      } else {
        rows.push_back({grid.obs_x[j], tag, "solution", sol.thickness[j]});
      }
    }
    gaps.push_back({{"A", sol.A}, {"n_gaps", sol.n_gaps}, {"gap_locations", gap_locs}});
  }
  for (std::size_t j = 0; j < grid.n_obs(); ++j) {
    rows.push_back({grid.obs_x[j], "thickness_observed", "value", h_obs[j]});
  }
  write_long_table_csv(cfg.output_dir + "/naive_thickness.csv", rows);
  write_json_file(cfg.output_dir + "/summary.json",
                  json{{"width_candidate", chosen}, {"gap_report", gaps}});
  return 0;
}

int cmd_fit(const RunConfig& cfg, const json& overrides) {
  write_bundle_front_matter(cfg, "fit", overrides);
  const ObservationSet obs = acquire_observations(cfg);
  const InferenceProblem problem = build_problem(obs, pipeline_from(cfg));

  ChainConfig chain = cfg.chain;
  chain.seed = Rng::derive(cfg.seed, 101);
  const PosteriorSamples samples = run_chains(chain, problem);

  write_samples(cfg.output_dir + "/samples.csv", cfg.output_dir + "/samples_meta.json", samples,
                problem.grid.quad_x);
  write_long_table_csv(cfg.output_dir + "/width_bands.csv",
                       width_band_rows(samples, problem.grid.quad_x));

  json summary;
  summary["posterior"] = posterior_scalar_summaries(samples);
  json rates = json::array();
  for (const auto& r : samples.acceptance_rates) {
    rates.push_back(std::vector<double>(r.begin(), r.end()));
  }
  summary["acceptance_rates"] = rates;
  if (samples.chains.size() >= 2 && samples.chains[0].size() >= 4) {
    json diag = json::array();
    for (const auto& d : chain_diagnostics(samples)) {
      diag.push_back({{"name", d.name}, {"rhat", d.rhat}, {"ess", d.ess}});
    }
    summary["diagnostics"] = diag;
  }
  write_json_file(cfg.output_dir + "/summary.json", summary);
  return 0;
}

int cmd_predict(const RunConfig& cfg, const json& overrides, const std::string& bundle) {
  const std::string src = bundle.empty() ? cfg.output_dir : bundle;
  // the bundle's effective config pins the problem the samples came from
  RunConfig fit_cfg = RunConfig::load(src + "/effective_config.json");
  fit_cfg.output_dir = cfg.output_dir;
  write_bundle_front_matter(fit_cfg, "predict", overrides);

  const ObservationSet obs = acquire_observations(fit_cfg);
  const InferenceProblem problem = build_problem(obs, pipeline_from(fit_cfg));
  std::vector<double> quad_x;
  const PosteriorSamples samples =
      read_samples(src + "/samples.csv", src + "/samples_meta.json", &quad_x);
  if (quad_x != problem.grid.quad_x) {
    throw ValidationError("predict: samples were drawn on a different quadrature grid");
  }

  const std::vector<double> pred_x =
      interior_points(problem.grid.domain_length, fit_cfg.n_prediction_points);
  const PredictionBands bands = predict_thickness(samples, problem, pred_x);
  write_long_table_csv(fit_cfg.output_dir + "/predictions.csv", band_rows(bands, "thickness"));
  write_json_file(fit_cfg.output_dir + "/summary.json",
                  json{{"samples_file", src + "/samples.csv"},
                       {"n_states", bands.n_states},
                       {"n_dropped", bands.n_dropped},
                       {"posterior", posterior_scalar_summaries(samples)}});
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const json& overrides, int n_train, double noise_sd) {
  write_bundle_front_matter(cfg, "simulate", overrides);
  const TruthProfile truth = builtin_truth_profile();
  const ExperimentSpec spec = experiment_from(cfg, n_train, noise_sd);
  const ExperimentResult r = run_experiment(truth, spec);
  if (!r.ok()) throw NumericalError("simulate: " + r.error);

  write_long_table_csv(cfg.output_dir + "/thickness_bands.csv", band_rows(r.bands, "thickness"));
  json result;
  result["n_train"] = r.n_train;
  result["noise_sd"] = r.noise_sd;
  result["cell_seed"] = r.seed;
  result["A"] = scalar_summary(r.A_mean, r.A_lo, r.A_hi);
  result["width_coverage_95"] = r.width_coverage_95;
  result["thickness_coverage_95"] = r.thickness_coverage_95;
  result["mean_acceptance"] =
      std::vector<double>(r.mean_acceptance.begin(), r.mean_acceptance.end());
  write_json_file(cfg.output_dir + "/experiment_result.json", result);
  write_json_file(cfg.output_dir + "/runtime.json", json{{"seconds", r.runtime_seconds}});
  return 0;
}

int cmd_coverage(const RunConfig& cfg, const json& overrides) {
  write_bundle_front_matter(cfg, "coverage", overrides);
  const TruthProfile truth = builtin_truth_profile();
  std::vector<ExperimentSpec> specs;
  for (int n : cfg.sim_n_train) {
    for (double sd : cfg.sim_noise_sd) specs.push_back(experiment_from(cfg, n, sd));
  }
  const auto results = run_experiment_grid(truth, specs);

  std::ofstream out(cfg.output_dir + "/coverage_table.csv");
  if (!out) throw ValidationError("coverage: cannot write table");
  out << "n_train,noise_sd,width_coverage_95,thickness_coverage_95,A_mean,A_lo,A_hi,error\n";
  json rows = json::array();
  double runtime = 0.0;
  for (const ExperimentResult& r : results) {
    out << r.n_train << ',' << format_double(r.noise_sd) << ','
        << format_double(r.width_coverage_95) << ',' << format_double(r.thickness_coverage_95)
        << ',' << format_double(r.A_mean) << ',' << format_double(r.A_lo) << ','
        << format_double(r.A_hi) << ',' << (r.ok() ? "" : r.error) << '\n';
    rows.push_back({{"n_train", r.n_train},
                    {"noise_sd", r.noise_sd},
                    {"width_coverage_95", r.width_coverage_95},
                    {"thickness_coverage_95", r.thickness_coverage_95},
                    {"A", scalar_summary(r.A_mean, r.A_lo, r.A_hi)},
                    {"error", r.error}});
    runtime += r.runtime_seconds;
  }
  if (!out) throw ValidationError("coverage: table write failed");
  write_json_file(cfg.output_dir + "/coverage_table.json", json{{"cells", rows}});
  write_json_file(cfg.output_dir + "/runtime.json", json{{"seconds", runtime}});
  return 0;
}

int cmd_diagnose(const RunConfig& cfg, const json& overrides, const std::string& bundle) {
  const std::string src = bundle.empty() ? cfg.output_dir : bundle;
  write_bundle_front_matter(cfg, "diagnose", overrides);
  const PosteriorSamples samples = read_samples(src + "/samples.csv", src + "/samples_meta.json");
  const auto diags = chain_diagnostics(samples);

  std::ofstream out(cfg.output_dir + "/diagnostics.csv");
  if (!out) throw ValidationError("diagnose: cannot write table");
  out << "parameter,rhat,ess\n";
  json rows = json::array();
  for (const auto& d : diags) {
    out << d.name << ',' << format_double(d.rhat) << ',' << format_double(d.ess) << '\n';
    rows.push_back({{"name", d.name}, {"rhat", d.rhat}, {"ess", d.ess}});
  }
  write_json_file(cfg.output_dir + "/diagnostics.json", json{{"parameters", rows}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flowline ice-thickness reconstruction: naive inversion and "
               "hierarchical Bayesian inference"};
  app.require_subcommand(1);

  CommonArgs c_smooth, c_naive, c_fit, c_predict, c_sim, c_cov, c_diag;
  std::string naive_width, predict_bundle, diag_bundle;
  std::vector<double> naive_A;
  int sim_n_train = 0;
  double sim_noise = 0.0;

  auto* s_smooth = app.add_subcommand("smooth", "pre-smooth the input series, derive slope");
  add_common(s_smooth, c_smooth);

  auto* s_naive = app.add_subcommand("naive", "plug-in deterministic inversion");
  add_common(s_naive, c_naive);
  s_naive->add_option("--width", naive_width, "width candidate name");
  s_naive->add_option("--A", naive_A, "rheologic coefficient values");

  auto* s_fit = app.add_subcommand("fit", "run the MCMC and persist posterior samples");
  add_common(s_fit, c_fit);

  auto* s_predict = app.add_subcommand("predict", "posterior thickness bands from a fit bundle");
  add_common(s_predict, c_predict);
  s_predict->add_option("--bundle", predict_bundle, "fit output directory (default: output_dir)");

  auto* s_sim = app.add_subcommand("simulate", "run one synthetic experiment cell");
  add_common(s_sim, c_sim);
  s_sim->add_option("--n-train", sim_n_train, "number of synthetic thickness observations");
  s_sim->add_option("--noise-sd", sim_noise, "observation noise sd (m)");

  auto* s_cov = app.add_subcommand("coverage", "full simulation grid with coverage table");
  add_common(s_cov, c_cov);

  auto* s_diag = app.add_subcommand("diagnose", "scale-reduction and ESS for a samples bundle");
  add_common(s_diag, c_diag);
  s_diag->add_option("--bundle", diag_bundle, "fit output directory (default: output_dir)");

  CLI11_PARSE(app, argc, argv);

  json overrides = json::object();
  try {
    if (s_smooth->parsed()) return cmd_smooth(load_config(c_smooth, overrides), overrides);
    if (s_naive->parsed()) {
      const RunConfig cfg = load_config(c_naive, overrides);
      if (!naive_width.empty()) overrides["width"] = naive_width;
      if (!naive_A.empty()) overrides["A"] = naive_A;
      return cmd_naive(cfg, overrides, naive_width, naive_A);
    }
    if (s_fit->parsed()) return cmd_fit(load_config(c_fit, overrides), overrides);
    if (s_predict->parsed()) {
      const RunConfig cfg = load_config(c_predict, overrides);
      if (!predict_bundle.empty()) overrides["bundle"] = predict_bundle;
      return cmd_predict(cfg, overrides, predict_bundle);
    }
    if (s_sim->parsed()) {
      const RunConfig cfg = load_config(c_sim, overrides);
      const int n = sim_n_train > 0 ? sim_n_train : cfg.sim_n_train.front();
      const double sd = sim_noise > 0.0 ? sim_noise : cfg.sim_noise_sd.front();
      overrides["n_train"] = n;
      overrides["noise_sd"] = sd;
      return cmd_simulate(cfg, overrides, n, sd);
    }
    if (s_cov->parsed()) return cmd_coverage(load_config(c_cov, overrides), overrides);
    if (s_diag->parsed()) {
      const RunConfig cfg = load_config(c_diag, overrides);
      if (!diag_bundle.empty()) overrides["bundle"] = diag_bundle;
      return cmd_diagnose(cfg, overrides, diag_bundle);
    }
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 2;
}
