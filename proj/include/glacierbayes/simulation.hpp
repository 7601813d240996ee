#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glacierbayes/inference.hpp"
#include "glacierbayes/observations.hpp"

namespace glacier {

// Synthetic "true" glacier used when no field data is supplied: a 272.8 km
// flowline with thin-ice troughs near 130, 200 and 250 km and a width that
// narrows downstream. All series are deterministic functions of x.
struct TruthProfile {
  std::string version_tag;
  double domain_length = 0.0;
  Series thickness;     // dense truth, m
  Series width;         // dense truth, m
  Series elevation;     // m
  Series accumulation;  // m/yr
  Series thinning;      // m/yr

  double thickness_at(double x) const { return linear_interp_at(thickness, x); }
  double width_at(double x) const { return linear_interp_at(width, x); }

  void validate() const;
};

TruthProfile builtin_truth_profile();

// CSV round-trip of the truth profile (thickness/width/elevation/
// accumulation/thinning.csv in a directory); load(dump(p)) == p.
void dump_truth_profile(const TruthProfile& profile, const std::string& dir);
TruthProfile load_truth_profile(const std::string& dir);

// Shared assembly of an inference problem from raw observations: grid,
// pre-smoothing, width mean function, priors.
struct PipelineConfig {
  PhysicalConstants constants;
  double quad_spacing = 1000.0;  // m
  double domain_length = 0.0;    // 0 = span of the observation series
  FieldSmoothers smoothers;      // defaults to GCV splines
  double phi = 40000.0;          // m, fixed width-model range
  double mean_floor_m = 1.0;
  std::string width_candidate;   // "" = narrowest available (smallest mean)
  PriorSpec prior;
  bool h0_prior_from_data = true;  // center the h0 prior on the first thickness obs
  double C0 = 0.0;
  double h_max = 10000.0;

  PipelineConfig() {
    smoothers.velocity.choose_lambda_by_gcv = true;
    smoothers.elevation.choose_lambda_by_gcv = true;
    smoothers.accumulation.choose_lambda_by_gcv = true;
    smoothers.thinning.choose_lambda_by_gcv = true;
  }
};

InferenceProblem build_problem(const ObservationSet& obs, const PipelineConfig& cfg);

struct ExperimentSpec {
  int n_train = 5;             // number of synthetic thickness observations
  double noise_sd = 50.0;      // m
  double true_A = 1e-18;       // Pa^-3/yr
  std::uint64_t seed = 0;
  ChainConfig chain;
  PipelineConfig pipeline;
  std::size_t n_prediction_points = 40;

  ExperimentSpec() {
    // Measurement-scale prior for the thickness error variance: the generic
    // default (scale 1e6) floors sigma_H near 300 m, which would swamp the
    // 10-100 m error schemes this study sweeps.
    pipeline.prior.sigma2_H_prior = InverseGammaPrior{2.0, 2500.0};
    // Synthetic velocity is noise-free, so GCV would pick near-interpolation;
    // the source pipeline pre-smooths velocity regardless, which is what
    // flattens the km-scale signal and drives the coverage behavior. The
    // penalty corresponds to a ~9 km low-pass cutoff.
    pipeline.smoothers.velocity.choose_lambda_by_gcv = false;
    pipeline.smoothers.velocity.lambda = 5e12;
  }

  void validate() const;
};

// Equally spaced interior training locations, noisy thickness at them, and
// surface velocity simulated from the dynamics with the true A.
ObservationSet generate_observations(const TruthProfile& truth, const ExperimentSpec& spec);

// Fraction of quadrature locations whose true width lies inside the pointwise
// central 95% interval of the sampled widths.
double width_coverage(const PosteriorSamples& samples, std::span<const double> width_true_quad);

struct ExperimentResult {
  int n_train = 0;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  double A_mean = 0.0, A_lo = 0.0, A_hi = 0.0;
  double width_coverage_95 = 0.0;
  double thickness_coverage_95 = 0.0;  // truth inside the band at prediction points
  PredictionBands bands;
  std::array<double, kNumBlocks> mean_acceptance{};
  double runtime_seconds = 0.0;
  std::string error;  // nonempty when the cell failed

  bool ok() const { return error.empty(); }
};

ExperimentResult run_experiment(const TruthProfile& truth, const ExperimentSpec& spec);

// Runs every cell, continuing past individual failures.
std::vector<ExperimentResult> run_experiment_grid(const TruthProfile& truth,
                                                  std::span<const ExperimentSpec> specs);

// Per-cell seeds derive from the master seed and the cell coordinates so any
// cell can be reproduced in isolation.
std::uint64_t experiment_seed(std::uint64_t master, int n_train, double noise_sd);

}  // namespace glacier
