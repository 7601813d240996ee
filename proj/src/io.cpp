#include "glacierbayes/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "glacierbayes/errors.hpp"

namespace glacier {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double_strict(const std::string& text, std::size_t line) {
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  double value = 0.0;
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ParseError("cannot parse number '" + text + "'", line);
  }
  if (!std::isfinite(value)) throw ParseError("non-finite value '" + text + "'", line);
  return value;
}

namespace {

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

Series read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open series file: " + path);

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty series file: " + path, 1);
  ++lineno;
  if (strip_cr(line) != "x_m,value") {
    throw ParseError("expected header 'x_m,value' in " + path, lineno);
  }

  Series series;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected two columns", lineno);
    const double x = parse_double_strict(line.substr(0, comma), lineno);
    const double v = parse_double_strict(line.substr(comma + 1), lineno);
    series.push_back({x, v});
  }

  std::stable_sort(series.begin(), series.end(),
                   [](const Sample& a, const Sample& b) { return a.x < b.x; });
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].x == series[i - 1].x) {
      throw ValidationError("duplicate location " + format_double(series[i].x) + " in " + path);
    }
  }
  return series;
}

void write_series_csv(const std::string& path, const Series& series) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write series file: " + path);
  out << "x_m,value\n";
  for (const Sample& s : series) out << format_double(s.x) << ',' << format_double(s.value) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

void write_long_table_csv(const std::string& path, const std::vector<TableRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write table file: " + path);
  out << "x_m,quantity,statistic,value\n";
  for (const TableRow& r : rows) {
    out << format_double(r.x) << ',' << r.quantity << ',' << r.statistic << ','
        << format_double(r.value) << '\n';
  }
  if (!out) throw ValidationError("write failed: " + path);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << content;
  if (!out) throw ValidationError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_samples(const std::string& csv_path, const std::string& meta_path,
                   const PosteriorSamples& samples, const std::vector<double>& quad_x) {
  std::ofstream out(csv_path);
  if (!out) throw ValidationError("cannot write samples file: " + csv_path);
  out << "chain,index,A,h0,sigma2_H,sigma2_omega,tau2";
  for (std::size_t i = 0; i < quad_x.size(); ++i) out << ",omega_" << i;
  out << '\n';
  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    const auto& chain = samples.chains[c];
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const ParameterState& s = chain[i];
      out << c << ',' << i << ',' << format_double(s.A) << ',' << format_double(s.h0) << ','
          << format_double(s.sigma2_H) << ',' << format_double(s.sigma2_omega) << ','
          << format_double(s.tau2);
      for (double w : s.omega_quad) out << ',' << format_double(w);
      out << '\n';
    }
  }
  if (!out) throw ValidationError("write failed: " + csv_path);

  json meta;
  meta["quad_x"] = quad_x;
  meta["n_chains"] = samples.chains.size();
  meta["n_iterations"] = samples.n_iterations;
  meta["burn_in"] = samples.burn_in;
  meta["thin"] = samples.thin;
  json rates = json::array();
  for (const auto& r : samples.acceptance_rates) {
    rates.push_back(std::vector<double>(r.begin(), r.end()));
  }
  meta["acceptance_rates"] = rates;
  write_json_file(meta_path, meta);
}

PosteriorSamples read_samples(const std::string& csv_path, const std::string& meta_path,
                              std::vector<double>* quad_x_out) {
  const json meta = json::parse(read_text_file(meta_path));
  const std::vector<double> quad_x = meta.at("quad_x").get<std::vector<double>>();
  if (quad_x_out) *quad_x_out = quad_x;

  PosteriorSamples samples;
  samples.n_iterations = meta.value("n_iterations", 0);
  samples.burn_in = meta.value("burn_in", 0);
  samples.thin = meta.value("thin", std::size_t{1});
  samples.chains.resize(meta.at("n_chains").get<std::size_t>());
  for (const auto& r : meta.at("acceptance_rates")) {
    std::array<double, kNumBlocks> rates{};
    const auto vec = r.get<std::vector<double>>();
    std::copy_n(vec.begin(), std::min<std::size_t>(kNumBlocks, vec.size()), rates.begin());
    samples.acceptance_rates.push_back(rates);
  }

  std::ifstream in(csv_path);
  if (!in) throw ValidationError("cannot open samples file: " + csv_path);
  std::string line;
  std::size_t lineno = 0;
  std::getline(in, line);  // header
  ++lineno;
  const std::size_t n_cols = 7 + quad_x.size();
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != n_cols) throw ParseError("wrong column count in samples file", lineno);
    const auto chain_idx = static_cast<std::size_t>(parse_double_strict(cells[0], lineno));
    if (chain_idx >= samples.chains.size()) throw ParseError("chain index out of range", lineno);
    ParameterState s;
    s.A = parse_double_strict(cells[2], lineno);
    s.h0 = parse_double_strict(cells[3], lineno);
    s.sigma2_H = parse_double_strict(cells[4], lineno);
    s.sigma2_omega = parse_double_strict(cells[5], lineno);
    s.tau2 = parse_double_strict(cells[6], lineno);
    s.omega_quad.resize(quad_x.size());
    for (std::size_t i = 0; i < quad_x.size(); ++i) {
      s.omega_quad[i] = parse_double_strict(cells[7 + i], lineno);
    }
    samples.chains[chain_idx].push_back(std::move(s));
  }
  return samples;
}

namespace {

SmootherConfig smoother_from_json(const json& j, const SmootherConfig& defaults) {
  SmootherConfig cfg = defaults;
  if (j.contains("kind")) cfg.kind = j.at("kind").get<std::string>();
  if (j.contains("lambda")) {
    if (j.at("lambda").is_string()) {
      if (j.at("lambda").get<std::string>() != "gcv") {
        throw ValidationError("smoother lambda must be a number or \"gcv\"");
      }
      cfg.gcv = true;
    } else {
      cfg.lambda = j.at("lambda").get<double>();
      cfg.gcv = false;
    }
  }
  if (j.contains("gcv")) cfg.gcv = j.at("gcv").get<bool>();
  return cfg;
}

json smoother_to_json(const SmootherConfig& cfg) {
  return json{{"kind", cfg.kind}, {"lambda", cfg.lambda}, {"gcv", cfg.gcv}};
}

SmootherSpec to_spec(const SmootherConfig& cfg) {
  SmootherSpec spec;
  if (cfg.kind == "spline") {
    spec.kind = SmootherKind::spline;
  } else if (cfg.kind == "moving-average") {
    spec.kind = SmootherKind::moving_average;
  } else {
    throw ValidationError("unknown smoother kind '" + cfg.kind + "'");
  }
  spec.lambda = cfg.lambda;
  spec.choose_lambda_by_gcv = cfg.gcv && spec.kind == SmootherKind::spline;
  return spec;
}

}  // namespace

FieldSmoothers to_field_smoothers(const RunConfig& cfg) {
  FieldSmoothers fs;
  fs.velocity = to_spec(cfg.smooth_velocity);
  fs.elevation = to_spec(cfg.smooth_elevation);
  fs.accumulation = to_spec(cfg.smooth_accumulation);
  fs.thinning = to_spec(cfg.smooth_thinning);
  return fs;
}

RunConfig RunConfig::load(const std::string& path) {
  RunConfig cfg;
  cfg.snapshot = read_text_file(path);
  json j;
  try {
    j = json::parse(cfg.snapshot);
  } catch (const json::parse_error& e) {
    throw ValidationError("config parse error in " + path + ": " + e.what());
  }

  if (!j.contains("seed")) {
    throw ValidationError("config must set an explicit seed (no wall-clock default)");
  }
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.output_dir = j.value("output_dir", cfg.output_dir);

  if (j.contains("constants")) {
    cfg.constants.rho = j["constants"].value("rho", cfg.constants.rho);
    cfg.constants.g = j["constants"].value("g", cfg.constants.g);
  }
  if (j.contains("grid")) {
    cfg.quad_spacing = j["grid"].value("quad_spacing_m", cfg.quad_spacing);
    cfg.domain_length = j["grid"].value("domain_length_m", cfg.domain_length);
  }
  if (j.contains("smoothing")) {
    const json& s = j["smoothing"];
    if (s.contains("velocity")) cfg.smooth_velocity = smoother_from_json(s["velocity"], cfg.smooth_velocity);
    if (s.contains("elevation")) cfg.smooth_elevation = smoother_from_json(s["elevation"], cfg.smooth_elevation);
    if (s.contains("accumulation")) cfg.smooth_accumulation = smoother_from_json(s["accumulation"], cfg.smooth_accumulation);
    if (s.contains("thinning")) cfg.smooth_thinning = smoother_from_json(s["thinning"], cfg.smooth_thinning);
  }
  if (j.contains("width_model")) {
    const json& w = j["width_model"];
    cfg.phi = w.value("phi_m", cfg.phi);
    cfg.mean_floor_m = w.value("mean_floor_m", cfg.mean_floor_m);
    cfg.width_candidate = w.value("candidate", cfg.width_candidate);
  }
  if (j.contains("priors")) {
    const json& p = j["priors"];
    if (p.contains("A_range")) {
      cfg.prior.A_lo = p["A_range"].at(0).get<double>();
      cfg.prior.A_hi = p["A_range"].at(1).get<double>();
    }
    if (p.contains("sigma2_omega")) {
      cfg.prior.sigma2_omega_prior.shape = p["sigma2_omega"].value("shape", 2.0);
      cfg.prior.sigma2_omega_prior.scale = p["sigma2_omega"].value("scale", 1e8);
    }
    if (p.contains("tau2")) {
      cfg.prior.tau2_prior.shape = p["tau2"].value("shape", 2.0);
      cfg.prior.tau2_prior.scale = p["tau2"].value("scale", 1e4);
    }
    if (p.contains("sigma2_H")) {
      cfg.prior.sigma2_H_prior.shape = p["sigma2_H"].value("shape", 2.0);
      cfg.prior.sigma2_H_prior.scale = p["sigma2_H"].value("scale", 1e6);
      cfg.prior.sample_sigma2_H = p["sigma2_H"].value("sampled", true);
      cfg.prior.fixed_sigma2_H = p["sigma2_H"].value("fixed_value", cfg.prior.fixed_sigma2_H);
    }
    if (p.contains("h0")) {
      cfg.prior.h0_prior.sd = p["h0"].value("sd", 500.0);
      if (p["h0"].contains("mean")) {
        cfg.prior.h0_prior.mean = p["h0"].at("mean").get<double>();
        cfg.h0_prior_from_data = false;
      }
    }
  }
  if (j.contains("chain")) {
    const json& c = j["chain"];
    cfg.chain.n_iterations = c.value("iterations", cfg.chain.n_iterations);
    cfg.chain.n_chains = c.value("chains", cfg.chain.n_chains);
    cfg.chain.burn_in_fraction = c.value("burn_in_fraction", cfg.chain.burn_in_fraction);
    cfg.chain.target_retained = c.value("target_retained", cfg.chain.target_retained);
    cfg.chain.thin = c.value("thin", cfg.chain.thin);
    cfg.chain.adapt = c.value("adapt", cfg.chain.adapt);
  }
  if (j.contains("dynamics")) {
    cfg.C0 = j["dynamics"].value("C0", cfg.C0);
    cfg.h_max = j["dynamics"].value("h_max_m", cfg.h_max);
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    cfg.builtin_profile = d.value("builtin_profile", true);
    cfg.data.thickness = d.value("thickness_csv", std::string{});
    cfg.data.velocity = d.value("velocity_csv", std::string{});
    cfg.data.elevation = d.value("elevation_csv", std::string{});
    cfg.data.accumulation = d.value("accumulation_csv", std::string{});
    cfg.data.thinning = d.value("thinning_csv", std::string{});
    if (d.contains("width_candidates")) {
      for (const auto& [name, p] : d["width_candidates"].items()) {
        cfg.data.width_candidates[name] = p.get<std::string>();
      }
    }
  }
  if (j.contains("simulation")) {
    const json& s = j["simulation"];
    if (s.contains("n_train")) cfg.sim_n_train = s["n_train"].get<std::vector<int>>();
    if (s.contains("noise_sd")) cfg.sim_noise_sd = s["noise_sd"].get<std::vector<double>>();
    cfg.sim_true_A = s.value("true_A", cfg.sim_true_A);
    cfg.n_prediction_points = s.value("n_prediction_points", cfg.n_prediction_points);
    if (s.contains("sigma2_H_prior")) {
      cfg.sim_sigma2_H_prior.shape = s["sigma2_H_prior"].value("shape", 2.0);
      cfg.sim_sigma2_H_prior.scale = s["sigma2_H_prior"].value("scale", 2500.0);
    }
    cfg.sim_velocity_lambda = s.value("velocity_lambda", cfg.sim_velocity_lambda);
  }
  if (j.contains("naive")) {
    if (j["naive"].contains("A_values")) {
      cfg.naive_A_values = j["naive"]["A_values"].get<std::vector<double>>();
    }
  }

  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  constants.validate();
  prior.validate();
  chain.validate();
  if (!(quad_spacing > 0.0)) throw ValidationError("config: quad_spacing_m must be positive");
  if (!builtin_profile) {
    const std::vector<std::pair<std::string, std::string>> paths = {
        {"thickness_csv", data.thickness}, {"velocity_csv", data.velocity},
        {"elevation_csv", data.elevation}, {"accumulation_csv", data.accumulation},
        {"thinning_csv", data.thinning}};
    for (const auto& [key, p] : paths) {
      if (p.empty()) throw ValidationError("config: data." + key + " required unless builtin_profile");
      if (!std::filesystem::exists(p)) throw ValidationError("config: missing file " + p);
    }
    for (const auto& [name, p] : data.width_candidates) {
      if (!std::filesystem::exists(p)) {
        throw ValidationError("config: missing width candidate file " + p);
      }
    }
  }
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["constants"] = {{"rho", constants.rho}, {"g", constants.g}};
  j["grid"] = {{"quad_spacing_m", quad_spacing}, {"domain_length_m", domain_length}};
  j["smoothing"] = {{"velocity", smoother_to_json(smooth_velocity)},
                    {"elevation", smoother_to_json(smooth_elevation)},
                    {"accumulation", smoother_to_json(smooth_accumulation)},
                    {"thinning", smoother_to_json(smooth_thinning)}};
  j["width_model"] = {{"phi_m", phi}, {"mean_floor_m", mean_floor_m}, {"candidate", width_candidate}};
  json h0 = {{"sd", prior.h0_prior.sd}};
  if (!h0_prior_from_data) h0["mean"] = prior.h0_prior.mean;
  j["priors"] = {
      {"A_range", {prior.A_lo, prior.A_hi}},
      {"sigma2_omega", {{"shape", prior.sigma2_omega_prior.shape}, {"scale", prior.sigma2_omega_prior.scale}}},
      {"tau2", {{"shape", prior.tau2_prior.shape}, {"scale", prior.tau2_prior.scale}}},
      {"sigma2_H",
       {{"shape", prior.sigma2_H_prior.shape},
        {"scale", prior.sigma2_H_prior.scale},
        {"sampled", prior.sample_sigma2_H},
        {"fixed_value", prior.fixed_sigma2_H}}},
      {"h0", h0}};
  j["chain"] = {{"iterations", chain.n_iterations},
                {"chains", chain.n_chains},
                {"burn_in_fraction", chain.burn_in_fraction},
                {"target_retained", chain.target_retained},
                {"thin", chain.thin},
                {"adapt", chain.adapt}};
  j["dynamics"] = {{"C0", C0}, {"h_max_m", h_max}};
  json data_j = {{"builtin_profile", builtin_profile}};
  if (!builtin_profile) {
    data_j["thickness_csv"] = data.thickness;
    data_j["velocity_csv"] = data.velocity;
    data_j["elevation_csv"] = data.elevation;
    data_j["accumulation_csv"] = data.accumulation;
    data_j["thinning_csv"] = data.thinning;
    json cands = json::object();
    for (const auto& [name, p] : data.width_candidates) cands[name] = p;
    data_j["width_candidates"] = cands;
  }
  j["data"] = data_j;
  j["simulation"] = {
      {"n_train", sim_n_train},
      {"noise_sd", sim_noise_sd},
      {"true_A", sim_true_A},
      {"n_prediction_points", n_prediction_points},
      {"sigma2_H_prior",
       {{"shape", sim_sigma2_H_prior.shape}, {"scale", sim_sigma2_H_prior.scale}}},
      {"velocity_lambda", sim_velocity_lambda}};
  j["naive"] = {{"A_values", naive_A_values}};
  return j;
}

ObservationSet load_observations(const RunConfig& cfg) {
  ObservationSet obs;
  obs.thickness = read_series_csv(cfg.data.thickness);
  obs.velocity = read_series_csv(cfg.data.velocity);
  obs.elevation = read_series_csv(cfg.data.elevation);
  obs.accumulation = read_series_csv(cfg.data.accumulation);
  obs.thinning = read_series_csv(cfg.data.thinning);
  for (const auto& [name, path] : cfg.data.width_candidates) {
    obs.width_candidates[name] = read_series_csv(path);
  }
  obs.validate();
  return obs;
}

}  // namespace glacier
