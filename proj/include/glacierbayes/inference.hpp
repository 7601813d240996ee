#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glacierbayes/dynamics.hpp"
#include "glacierbayes/gp_width.hpp"
#include "glacierbayes/grid.hpp"
#include "glacierbayes/observations.hpp"
#include "glacierbayes/rng.hpp"
#include "glacierbayes/smoothing.hpp"

namespace glacier {

// density proportional to x^{-(shape+1)} exp(-scale/x)
struct InverseGammaPrior {
  double shape = 2.0;
  double scale = 1.0;

  double log_density(double x) const;
  double sample(Rng& rng) const;
  double mode() const { return scale / (shape + 1.0); }
  void validate() const;
};

// Normal truncated to (0, inf); used for the divide thickness.
struct TruncatedNormalPrior {
  double mean = 1000.0;
  double sd = 500.0;

  double log_density(double x) const;
  double sample(Rng& rng) const;
  void validate() const;
};

struct PriorSpec {
  double A_lo = 0.0;
  double A_hi = 1e-16;
  InverseGammaPrior sigma2_omega_prior{2.0, 1e8};
  InverseGammaPrior tau2_prior{2.0, 1e4};
  InverseGammaPrior sigma2_H_prior{2.0, 1e6};
  TruncatedNormalPrior h0_prior{1000.0, 500.0};

  // The reduced posterior of the source model lists sigma2_H among the priors
  // without pinning whether it was sampled; default is to sample it.
  bool sample_sigma2_H = true;
  double fixed_sigma2_H = 2500.0;

  void validate() const;
};

// One MCMC state. omega_quad lives on the quadrature grid.
struct ParameterState {
  double A = 0.0;
  double h0 = 1000.0;
  double sigma2_H = 2500.0;
  double sigma2_omega = 1e8 / 3.0;
  double tau2 = 1e4 / 3.0;
  std::vector<double> omega_quad;

  void validate(const PriorSpec& prior) const;
};

struct ProposalScales {
  double A = 0.6;
  double h0 = 0.15;
  double sigma2_H = 1.2;
  double sigma2_omega = 0.8;
  double tau2 = 0.8;
  double omega_smooth = 0.3;  // leading eigenmodes: large width excursions
  double omega_rough = 1.0;   // trailing eigenmodes: near-nugget wiggles
};

inline constexpr std::size_t kNumBlocks = 6;

struct ChainConfig {
  std::int64_t n_iterations = 20000;
  int n_chains = 3;
  std::uint64_t seed = 0;
  double burn_in_fraction = 0.5;
  std::size_t target_retained = 1000;  // sets thinning when thin == 0
  std::size_t thin = 0;
  ProposalScales scales;
  bool adapt = true;  // scale adaptation during burn-in only
  // how many leading correlation eigenmodes form the "smooth" width sub-block
  std::size_t omega_smooth_modes = 32;

  void validate() const;
  std::int64_t burn_in() const;
  std::size_t effective_thin() const;
};

enum class Block { A = 0, H0 = 1, Sigma2H = 2, WidthHypers = 3, OmegaSmooth = 4, OmegaRough = 5 };
inline constexpr std::array<Block, kNumBlocks> kBlockCycle{
    Block::A, Block::H0, Block::Sigma2H, Block::WidthHypers, Block::OmegaSmooth,
    Block::OmegaRough};
inline constexpr std::array<const char*, kNumBlocks> kBlockNames{
    "A", "h0", "sigma2_H", "width_hypers", "omega_smooth", "omega_rough"};

struct PosteriorSamples {
  std::vector<std::vector<ParameterState>> chains;  // post burn-in, thinned
  std::vector<std::array<double, kNumBlocks>> acceptance_rates;  // per chain, post burn-in
  std::int64_t n_iterations = 0;
  std::int64_t burn_in = 0;
  std::size_t thin = 1;

  std::size_t total_states() const;
};

// Everything the posterior evaluation needs, bundled once and shared
// immutably across chains.
struct InferenceProblem {
  FlowlineGrid grid;
  SurfaceFields fields;
  std::vector<double> h_obs;  // observed thickness at grid.obs_x
  WidthModel width_model;     // fixed range phi and mean function
  PriorSpec prior;
  PhysicalConstants constants;
  double C0 = 0.0;
  double h_max = 10000.0;
  // When set, the likelihood is identically zero so chains sample the prior.
  bool constant_likelihood = false;

  void validate() const;
};

double log_likelihood(const ParameterState& state, const InferenceProblem& problem);
double log_prior(const ParameterState& state, const InferenceProblem& problem);
double log_posterior(const ParameterState& state, const InferenceProblem& problem);

// The one accept/reject primitive every block update goes through.
bool mh_accept(double delta_log_posterior, Rng& rng);

// Eigendecomposition of the unit-variance Matern correlation on the
// quadrature grid. The range is fixed during sampling, so
// Sigma(s2, t2) = s2 * M + t2 * I shares the eigenbasis for all states and
// the width transform costs one matrix-vector product per proposal.
class WidthBasis {
public:
  WidthBasis(std::span<const double> quad_x, double phi);

  Eigen::Index size() const { return lam_.size(); }
  double eigenvalue(Eigen::Index i) const { return lam_[i]; }
  Eigen::VectorXd omega_from_z(const Eigen::VectorXd& z, double s2, double t2,
                               const Eigen::VectorXd& mean) const;
  Eigen::VectorXd z_from_omega(const Eigen::VectorXd& omega, double s2, double t2,
                               const Eigen::VectorXd& mean) const;
  // eigenbasis coordinates of omega - mean
  Eigen::VectorXd project(const Eigen::VectorXd& omega, const Eigen::VectorXd& mean) const;
  // N(omega; mean, s2 M + t2 I) evaluated from those coordinates in O(m)
  double centered_log_density(const Eigen::VectorXd& proj, double s2, double t2) const;

private:
  Eigen::MatrixXd basis_;   // orthonormal eigenvectors
  Eigen::VectorXd lam_;     // eigenvalues clamped at zero
};

class Sampler;

struct ChainState {
  ParameterState params;
  Eigen::VectorXd z;       // whitened width coordinates
  double log_like = 0.0;   // cached; -inf when infeasible
  double ssr = 0.0;        // cached sum of squared thickness residuals
  bool feasible = true;
};

// Metropolis-Hastings over (A, h0, sigma2_H, (sigma2_omega, tau2), omega).
// Scalar blocks walk on transformed scales (logit for A over its prior range,
// log for positive parameters) with the matching Jacobian terms. The width
// update perturbs the whitened coordinates, split into a smooth sub-block
// (leading correlation eigenmodes, which move the width at the range scale
// and feel the likelihood) and a rough sub-block (trailing near-nugget modes)
// so each can hold a workable step size. The width-hyperparameter block keeps
// the whitened coordinates fixed (non-centered parameterization).
class Sampler {
public:
  Sampler(const InferenceProblem& problem, const ChainConfig& config);

  ChainState make_state(const ParameterState& params) const;
  ChainState draw_initial_state(Rng& rng) const;

  bool step(ChainState& state, Block block, Rng& rng);

  void adapt(Block block, double rate);
  const ProposalScales& scales() const { return scales_; }
  const InferenceProblem& problem() const { return *problem_; }

private:
  double block_log_target(const ChainState& s) const;
  void refresh_likelihood(ChainState& s) const;

  const InferenceProblem* problem_;
  WidthBasis basis_;
  Eigen::VectorXd mean_;
  ProposalScales scales_;
  Eigen::Index smooth_modes_;  // size of the smooth width sub-block
};

// mh_step of the module contract: one block update on a copy of the state.
std::pair<ChainState, bool> mh_step(Sampler& sampler, const ChainState& state, Block block,
                                    Rng& rng);

PosteriorSamples run_chain(const ParameterState& init, const ChainConfig& config,
                           const InferenceProblem& problem);

// n_chains with dispersed prior-drawn starting states on derived seeds.
PosteriorSamples run_chains(const ChainConfig& config, const InferenceProblem& problem);

struct PredictionBands {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> lo, hi;              // pointwise 2.5% / 97.5%
  std::vector<double> lo_noise, hi_noise;  // plus observational error
  std::size_t n_states = 0;
  std::size_t n_dropped = 0;
};

PredictionBands predict_thickness(const PosteriorSamples& samples,
                                  const InferenceProblem& problem,
                                  std::span<const double> prediction_x);

struct ParameterDiagnostic {
  std::string name;
  double rhat = 1.0;
  double ess = 0.0;
};

std::vector<ParameterDiagnostic> chain_diagnostics(const PosteriorSamples& samples);

}  // namespace glacier
