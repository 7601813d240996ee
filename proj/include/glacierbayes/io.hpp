#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "glacierbayes/inference.hpp"
#include "glacierbayes/observations.hpp"
#include "glacierbayes/series.hpp"

namespace glacier {

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double v);
double parse_double_strict(const std::string& text, std::size_t line);

// Two-column CSV with header "x_m,value". Rows are sorted ascending by x_m;
// duplicate locations and non-finite values are rejected.
Series read_series_csv(const std::string& path);
void write_series_csv(const std::string& path, const Series& series);

// Long-format table for plot-ready export: x_m, quantity, statistic, value.
struct TableRow {
  double x = 0.0;
  std::string quantity;
  std::string statistic;
  double value = 0.0;
};
void write_long_table_csv(const std::string& path, const std::vector<TableRow>& rows);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

// Posterior samples as a flat CSV (one row per retained state, omega columns
// indexed by quadrature point) plus a JSON sidecar carrying the quadrature
// grid, acceptance rates and chain bookkeeping.
void write_samples(const std::string& csv_path, const std::string& meta_path,
                   const PosteriorSamples& samples, const std::vector<double>& quad_x);
PosteriorSamples read_samples(const std::string& csv_path, const std::string& meta_path,
                              std::vector<double>* quad_x_out = nullptr);

struct SeriesPaths {
  std::string thickness;
  std::string velocity;
  std::string elevation;
  std::string accumulation;
  std::string thinning;
  std::map<std::string, std::string> width_candidates;  // name -> path
};

struct SmootherConfig {
  std::string kind = "spline";  // or "moving-average"
  double lambda = 0.0;
  bool gcv = true;
};

// Full run configuration: parsed from a JSON file, then overridden by
// per-command flags. The original file bytes are preserved as the snapshot.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  PhysicalConstants constants;
  double quad_spacing = 1000.0;
  double domain_length = 0.0;  // 0 = inferred from the data

  SmootherConfig smooth_velocity, smooth_elevation, smooth_accumulation, smooth_thinning;

  double phi = 40000.0;
  double mean_floor_m = 1.0;
  std::string width_candidate;  // "" = narrowest

  PriorSpec prior;
  bool h0_prior_from_data = true;

  ChainConfig chain;

  double C0 = 0.0;
  double h_max = 10000.0;

  bool builtin_profile = true;
  SeriesPaths data;

  // simulation-study settings
  std::vector<int> sim_n_train{5, 10, 25};
  std::vector<double> sim_noise_sd{10.0, 50.0, 100.0};
  double sim_true_A = 1e-18;
  std::size_t n_prediction_points = 40;
  // thickness-error prior used inside experiment cells; measurement-scale by
  // default, unlike the conservative general-purpose prior above
  InverseGammaPrior sim_sigma2_H_prior{2.0, 2500.0};
  // fixed velocity pre-smoothing penalty for experiment cells (synthetic
  // velocity is noise-free, so GCV would skip the pre-smoothing step)
  double sim_velocity_lambda = 5e12;

  // naive inversion settings
  std::vector<double> naive_A_values{0.0, 1e-18, 1e-17};

  std::string snapshot;  // raw bytes of the loaded config file

  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
};

FieldSmoothers to_field_smoothers(const RunConfig& cfg);

// Loads the five observation series (and width candidates) from the
// configured CSV paths.
ObservationSet load_observations(const RunConfig& cfg);

}  // namespace glacier
