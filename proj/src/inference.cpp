#include "glacierbayes/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "glacierbayes/errors.hpp"

namespace glacier {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

// Marsaglia-Tsang; shape >= 1 is all the priors here need.
double gamma_sample(double shape, double rate, Rng& rng) {
  if (shape < 1.0) throw ValidationError("gamma_sample: shape must be >= 1");
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - rng.uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double delta_or_zero(double current, double proposed) {
  // -inf vs -inf compares as equal rather than NaN.
  if (current == -kInf && proposed == -kInf) return 0.0;
  return proposed - current;
}

}  // namespace

void InverseGammaPrior::validate() const {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw ValidationError("inverse-gamma prior: shape and scale must be positive");
  }
}

double InverseGammaPrior::log_density(double x) const {
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double InverseGammaPrior::sample(Rng& rng) const {
  return 1.0 / gamma_sample(shape, scale, rng);
}

void TruncatedNormalPrior::validate() const {
  if (!(sd > 0.0)) throw ValidationError("truncated-normal prior: sd must be positive");
}

double TruncatedNormalPrior::log_density(double x) const {
  if (!(x > 0.0)) return -kInf;
  const double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z - std::log(normal_cdf(mean / sd));
}

double TruncatedNormalPrior::sample(Rng& rng) const {
  // Rejection; the divide thickness prior sits far from zero so this is tame.
  for (int it = 0; it < 100000; ++it) {
    const double x = rng.normal(mean, sd);
    if (x > 0.0) return x;
  }
  throw NumericalError("truncated-normal sampling failed to find a positive draw");
}

void PriorSpec::validate() const {
  if (!(A_lo < A_hi)) throw ValidationError("prior: A range must have lower < upper");
  if (!(A_lo >= 0.0)) throw ValidationError("prior: A range must be nonnegative");
  sigma2_omega_prior.validate();
  tau2_prior.validate();
  sigma2_H_prior.validate();
  h0_prior.validate();
  if (!sample_sigma2_H && !(fixed_sigma2_H > 0.0)) {
    throw ValidationError("prior: fixed sigma2_H must be positive");
  }
}

void ParameterState::validate(const PriorSpec& prior) const {
  if (!(A >= prior.A_lo && A <= prior.A_hi)) {
    throw ValidationError("state: A outside prior support");
  }
  if (!(h0 > 0.0) || !(sigma2_H > 0.0) || !(sigma2_omega > 0.0) || !(tau2 > 0.0)) {
    throw ValidationError("state: h0 and all variances must be positive");
  }
  if (omega_quad.empty()) throw ValidationError("state: omega_quad is empty");
  for (double w : omega_quad) {
    if (!(w > 0.0)) throw ValidationError("state: omega_quad must be positive");
  }
}

void ChainConfig::validate() const {
  if (n_iterations < 0) throw ValidationError("chain config: n_iterations must be >= 0");
  if (n_chains < 1) throw ValidationError("chain config: n_chains must be >= 1");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw ValidationError("chain config: burn_in_fraction must be in [0, 1)");
  }
  if (target_retained < 1) throw ValidationError("chain config: target_retained must be >= 1");
}

std::int64_t ChainConfig::burn_in() const {
  return static_cast<std::int64_t>(static_cast<double>(n_iterations) * burn_in_fraction);
}

std::size_t ChainConfig::effective_thin() const {
  if (thin > 0) return thin;
  const std::int64_t retained = n_iterations - burn_in();
  if (retained <= 0) return 1;
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(retained) / target_retained);
}

std::size_t PosteriorSamples::total_states() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.size();
  return n;
}

void InferenceProblem::validate() const {
  grid.validate();
  constants.validate();
  prior.validate();
  width_model.validate();
  if (h_obs.size() != grid.n_obs() || grid.n_obs() == 0) {
    throw ValidationError("problem: h_obs must match a nonempty observation grid");
  }
  if (fields.v_s_at_obs.size() != grid.n_obs() || fields.s_at_obs.size() != grid.n_obs() ||
      fields.a_at_quad.size() != grid.n_quad() || fields.tau_at_quad.size() != grid.n_quad()) {
    throw ValidationError("problem: field lengths do not match the grid");
  }
  if (width_model.quad_x != grid.quad_x) {
    throw ValidationError("problem: width model must live on the quadrature grid");
  }
  if (!(h_max > 0.0) || !(C0 >= 0.0)) {
    throw ValidationError("problem: h_max must be positive and C0 nonnegative");
  }
}

double log_likelihood(const ParameterState& state, const InferenceProblem& problem) {
  if (problem.constant_likelihood) return 0.0;
  for (double w : state.omega_quad) {
    if (!(w > 0.0)) return -kInf;  // nonpositive width is outside the physics
  }
  DynamicsParams params;
  params.A = state.A;
  params.h0 = state.h0;
  params.C0 = problem.C0;
  RootSelection sel;
  sel.strategy = RootStrategy::continuity;
  sel.h_max = problem.h_max;
  const ForwardResult fr =
      forward_model(problem.grid, problem.fields, state.omega_quad, params, sel,
                    problem.constants);
  if (!fr.complete()) return -kInf;
  double ssr = 0.0;
  for (std::size_t j = 0; j < problem.h_obs.size(); ++j) {
    const double r = problem.h_obs[j] - fr.thickness[j];
    ssr += r * r;
  }
  const double n = static_cast<double>(problem.h_obs.size());
  return -0.5 * n * (kLog2Pi + std::log(state.sigma2_H)) - 0.5 * ssr / state.sigma2_H;
}

double log_prior(const ParameterState& state, const InferenceProblem& problem) {
  const PriorSpec& prior = problem.prior;
  if (!(state.A >= prior.A_lo && state.A <= prior.A_hi)) return -kInf;
  double lp = -std::log(prior.A_hi - prior.A_lo);
  lp += prior.h0_prior.log_density(state.h0);
  if (prior.sample_sigma2_H) lp += prior.sigma2_H_prior.log_density(state.sigma2_H);
  lp += prior.sigma2_omega_prior.log_density(state.sigma2_omega);
  lp += prior.tau2_prior.log_density(state.tau2);
  if (lp == -kInf) return -kInf;

  WidthModel m = problem.width_model;
  m.hyper.sigma2_omega = state.sigma2_omega;
  m.hyper.tau2 = state.tau2;
  lp += width_log_density(state.omega_quad, m, problem.grid.quad_x);
  return lp;
}

double log_posterior(const ParameterState& state, const InferenceProblem& problem) {
  const double lp = log_prior(state, problem);
  if (lp == -kInf) return -kInf;
  return lp + log_likelihood(state, problem);
}

bool mh_accept(double delta_log_posterior, Rng& rng) {
  if (delta_log_posterior >= 0.0) return true;
  return std::log(1.0 - rng.uniform01()) < delta_log_posterior;
}

WidthBasis::WidthBasis(std::span<const double> quad_x, double phi) {
  const auto m = static_cast<Eigen::Index>(quad_x.size());
  WidthHyperparams unit;
  unit.sigma2_omega = 1.0;
  unit.phi = phi;
  unit.tau2 = 0.0;
  Eigen::MatrixXd corr = build_cov_matrix(quad_x, unit, 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.info() != Eigen::Success) {
    throw NumericalError("width correlation eigendecomposition failed");
  }
  basis_ = es.eigenvectors();
  lam_ = es.eigenvalues().cwiseMax(0.0);
  (void)m;
}

Eigen::VectorXd WidthBasis::omega_from_z(const Eigen::VectorXd& z, double s2, double t2,
                                         const Eigen::VectorXd& mean) const {
  const Eigen::VectorXd sd = (s2 * lam_.array() + t2).cwiseMax(0.0).sqrt();
  return mean + basis_ * (sd.array() * z.array()).matrix();
}

Eigen::VectorXd WidthBasis::z_from_omega(const Eigen::VectorXd& omega, double s2, double t2,
                                         const Eigen::VectorXd& mean) const {
  const Eigen::VectorXd proj = project(omega, mean);
  Eigen::VectorXd z(proj.size());
  for (Eigen::Index i = 0; i < proj.size(); ++i) {
    const double var = std::max(s2 * lam_[i] + t2, 0.0);
    z[i] = var > 0.0 ? proj[i] / std::sqrt(var) : 0.0;
  }
  return z;
}

Eigen::VectorXd WidthBasis::project(const Eigen::VectorXd& omega,
                                    const Eigen::VectorXd& mean) const {
  return basis_.transpose() * (omega - mean);
}

double WidthBasis::centered_log_density(const Eigen::VectorXd& proj, double s2, double t2) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < proj.size(); ++i) {
    const double var = s2 * lam_[i] + t2;
    if (!(var > 0.0)) return -kInf;
    acc += proj[i] * proj[i] / var + std::log(var);
  }
  return -0.5 * acc - 0.5 * static_cast<double>(proj.size()) * kLog2Pi;
}

Sampler::Sampler(const InferenceProblem& problem, const ChainConfig& config)
    : problem_(&problem),
      basis_(problem.grid.quad_x, problem.width_model.hyper.phi),
      mean_(Eigen::Map<const Eigen::VectorXd>(
          problem.width_model.mean_at_quad.data(),
          static_cast<Eigen::Index>(problem.width_model.mean_at_quad.size()))),
      scales_(config.scales),
      smooth_modes_(std::min<Eigen::Index>(
          static_cast<Eigen::Index>(config.omega_smooth_modes), basis_.size())) {}

void Sampler::refresh_likelihood(ChainState& s) const {
  const InferenceProblem& pb = *problem_;
  if (pb.constant_likelihood) {
    s.log_like = 0.0;
    s.ssr = 0.0;
    s.feasible = true;
    return;
  }
  s.log_like = -kInf;
  s.ssr = 0.0;
  s.feasible = false;
  for (double w : s.params.omega_quad) {
    if (!(w > 0.0)) return;
  }
  DynamicsParams params;
  params.A = s.params.A;
  params.h0 = s.params.h0;
  params.C0 = pb.C0;
  RootSelection sel;
  sel.strategy = RootStrategy::continuity;
  sel.h_max = pb.h_max;
  const ForwardResult fr =
      forward_model(pb.grid, pb.fields, s.params.omega_quad, params, sel, pb.constants);
  if (!fr.complete()) return;
  double ssr = 0.0;
  for (std::size_t j = 0; j < pb.h_obs.size(); ++j) {
    const double r = pb.h_obs[j] - fr.thickness[j];
    ssr += r * r;
  }
  const double n = static_cast<double>(pb.h_obs.size());
  s.ssr = ssr;
  s.feasible = true;
  s.log_like = -0.5 * n * (kLog2Pi + std::log(s.params.sigma2_H)) - 0.5 * ssr / s.params.sigma2_H;
}

ChainState Sampler::make_state(const ParameterState& params) const {
  ChainState s;
  s.params = params;
  const Eigen::Map<const Eigen::VectorXd> omega(
      params.omega_quad.data(), static_cast<Eigen::Index>(params.omega_quad.size()));
  s.z = basis_.z_from_omega(omega, params.sigma2_omega, params.tau2, mean_);
  refresh_likelihood(s);
  return s;
}

ChainState Sampler::draw_initial_state(Rng& rng) const {
  const PriorSpec& prior = problem_->prior;
  ParameterState p;
  p.A = rng.uniform(prior.A_lo, prior.A_hi);
  p.h0 = prior.h0_prior.sample(rng);
  p.sigma2_H = prior.sample_sigma2_H ? prior.sigma2_H_prior.sample(rng) : prior.fixed_sigma2_H;
  p.sigma2_omega = prior.sigma2_omega_prior.sample(rng);
  p.tau2 = prior.tau2_prior.sample(rng);

  ChainState s;
  s.params = std::move(p);
  s.z.resize(basis_.size());
  for (Eigen::Index i = 0; i < s.z.size(); ++i) s.z[i] = rng.normal();
  const Eigen::VectorXd omega =
      basis_.omega_from_z(s.z, s.params.sigma2_omega, s.params.tau2, mean_);
  s.params.omega_quad.assign(omega.data(), omega.data() + omega.size());
  refresh_likelihood(s);
  return s;
}

bool Sampler::step(ChainState& state, Block block, Rng& rng) {
  const InferenceProblem& pb = *problem_;
  const PriorSpec& prior = pb.prior;

  switch (block) {
    case Block::A: {
      const double span = prior.A_hi - prior.A_lo;
      double t = (state.params.A - prior.A_lo) / span;
      t = std::clamp(t, 1e-300, 1.0 - 1e-16);
      const double theta = std::log(t / (1.0 - t));
      const double theta_new = theta + scales_.A * rng.normal();
      const double t_new = 1.0 / (1.0 + std::exp(-theta_new));
      ChainState trial = state;
      trial.params.A = prior.A_lo + span * t_new;
      refresh_likelihood(trial);
      const double jac = std::log(t_new * (1.0 - t_new)) - std::log(t * (1.0 - t));
      if (mh_accept(delta_or_zero(state.log_like, trial.log_like) + jac, rng)) {
        state = std::move(trial);
        return true;
      }
      return false;
    }
    case Block::H0: {
      ChainState trial = state;
      trial.params.h0 = state.params.h0 * std::exp(scales_.h0 * rng.normal());
      refresh_likelihood(trial);
      const double dprior =
          prior.h0_prior.log_density(trial.params.h0) - prior.h0_prior.log_density(state.params.h0);
      const double jac = std::log(trial.params.h0) - std::log(state.params.h0);
      if (mh_accept(dprior + delta_or_zero(state.log_like, trial.log_like) + jac, rng)) {
        state = std::move(trial);
        return true;
      }
      return false;
    }
    case Block::Sigma2H: {
      if (!prior.sample_sigma2_H) return false;
      const double v = state.params.sigma2_H;
      const double v_new = v * std::exp(scales_.sigma2_H * rng.normal());
      // Feasibility and residuals do not depend on sigma2_H; reuse the cache.
      double dlike = 0.0;
      double loglike_new = state.log_like;
      if (!pb.constant_likelihood && state.feasible) {
        const double n = static_cast<double>(pb.h_obs.size());
        loglike_new = -0.5 * n * (kLog2Pi + std::log(v_new)) - 0.5 * state.ssr / v_new;
        dlike = loglike_new - state.log_like;
      }
      const double dprior =
          prior.sigma2_H_prior.log_density(v_new) - prior.sigma2_H_prior.log_density(v);
      const double jac = std::log(v_new) - std::log(v);
      if (mh_accept(dprior + dlike + jac, rng)) {
        state.params.sigma2_H = v_new;
        state.log_like = loglike_new;
        return true;
      }
      return false;
    }
    case Block::WidthHypers: {
      // Interweaved update (ancillary-sufficient pair): first a non-centered
      // proposal that holds the whitened coordinates fixed, then a centered
      // one that holds the width itself fixed. The composition mixes the
      // variance parameters across the strong (sigma2_omega, omega) coupling
      // far better than either parameterization alone.
      bool accepted = false;

      {  // non-centered: z fixed, omega moves with the hyperparameters
        const double s2 = state.params.sigma2_omega;
        const double t2 = state.params.tau2;
        const double s2_new = s2 * std::exp(scales_.sigma2_omega * rng.normal());
        const double t2_new = t2 * std::exp(scales_.tau2 * rng.normal());
        ChainState trial = state;
        trial.params.sigma2_omega = s2_new;
        trial.params.tau2 = t2_new;
        const Eigen::VectorXd omega = basis_.omega_from_z(state.z, s2_new, t2_new, mean_);
        trial.params.omega_quad.assign(omega.data(), omega.data() + omega.size());
        refresh_likelihood(trial);
        const double dprior =
            prior.sigma2_omega_prior.log_density(s2_new) -
            prior.sigma2_omega_prior.log_density(s2) + prior.tau2_prior.log_density(t2_new) -
            prior.tau2_prior.log_density(t2);
        const double jac = std::log(s2_new) - std::log(s2) + std::log(t2_new) - std::log(t2);
        if (mh_accept(dprior + delta_or_zero(state.log_like, trial.log_like) + jac, rng)) {
          state = std::move(trial);
          accepted = true;
        }
      }

      {  // centered: omega (and hence the likelihood) fixed, z recomputed
        const double s2 = state.params.sigma2_omega;
        const double t2 = state.params.tau2;
        const double s2_new = s2 * std::exp(scales_.sigma2_omega * rng.normal());
        const double t2_new = t2 * std::exp(scales_.tau2 * rng.normal());
        const Eigen::VectorXd proj = basis_.project(
            Eigen::Map<const Eigen::VectorXd>(state.params.omega_quad.data(),
                                              static_cast<Eigen::Index>(
                                                  state.params.omega_quad.size())),
            mean_);
        const double dwidth = basis_.centered_log_density(proj, s2_new, t2_new) -
                              basis_.centered_log_density(proj, s2, t2);
        const double dprior =
            prior.sigma2_omega_prior.log_density(s2_new) -
            prior.sigma2_omega_prior.log_density(s2) + prior.tau2_prior.log_density(t2_new) -
            prior.tau2_prior.log_density(t2);
        const double jac = std::log(s2_new) - std::log(s2) + std::log(t2_new) - std::log(t2);
        if (mh_accept(dprior + dwidth + jac, rng)) {
          state.params.sigma2_omega = s2_new;
          state.params.tau2 = t2_new;
          for (Eigen::Index i = 0; i < state.z.size(); ++i) {
            const double var = std::max(s2_new * basis_.eigenvalue(i) + t2_new, 0.0);
            state.z[i] = var > 0.0 ? proj[i] / std::sqrt(var) : 0.0;
          }
          accepted = true;
        }
      }
      return accepted;
    }
    case Block::OmegaSmooth:
    case Block::OmegaRough: {
      // eigenvalues are ascending, so the smooth sub-block is the tail
      const Eigen::Index m = state.z.size();
      const Eigen::Index split = m - smooth_modes_;
      Eigen::Index lo, hi;
      double scale;
      if (block == Block::OmegaSmooth) {
        lo = split;
        hi = m;
        scale = scales_.omega_smooth;
      } else {
        lo = 0;
        hi = split;
        scale = scales_.omega_rough;
      }
      if (lo >= hi) return false;
      ChainState trial = state;
      trial.z = state.z;
      for (Eigen::Index i = lo; i < hi; ++i) trial.z[i] += scale * rng.normal();
      const Eigen::VectorXd omega =
          basis_.omega_from_z(trial.z, state.params.sigma2_omega, state.params.tau2, mean_);
      trial.params.omega_quad.assign(omega.data(), omega.data() + omega.size());
      refresh_likelihood(trial);
      const double dprior = -0.5 * (trial.z.squaredNorm() - state.z.squaredNorm());
      if (mh_accept(dprior + delta_or_zero(state.log_like, trial.log_like), rng)) {
        state = std::move(trial);
        return true;
      }
      return false;
    }
  }
  return false;
}

void Sampler::adapt(Block block, double rate) {
  auto tune = [](double& scale, double rate, double target) {
    scale *= std::exp(0.6 * (rate - target));
    scale = std::clamp(scale, 1e-8, 1e4);
  };
  switch (block) {
    case Block::A: tune(scales_.A, rate, 0.44); break;
    case Block::H0: tune(scales_.h0, rate, 0.44); break;
    case Block::Sigma2H: tune(scales_.sigma2_H, rate, 0.44); break;
    case Block::WidthHypers:
      tune(scales_.sigma2_omega, rate, 0.35);
      tune(scales_.tau2, rate, 0.35);
      break;
    case Block::OmegaSmooth: tune(scales_.omega_smooth, rate, 0.234); break;
    case Block::OmegaRough: tune(scales_.omega_rough, rate, 0.234); break;
  }
}

std::pair<ChainState, bool> mh_step(Sampler& sampler, const ChainState& state, Block block,
                                    Rng& rng) {
  ChainState next = state;
  const bool accepted = sampler.step(next, block, rng);
  return {std::move(next), accepted};
}

namespace {

struct ChainRun {
  std::vector<ParameterState> samples;
  std::array<double, kNumBlocks> rates{};
};

ChainRun run_single_chain(Sampler sampler, ChainState state, const ChainConfig& config,
                          Rng rng) {
  const std::int64_t burn = config.burn_in();
  const std::size_t thin = config.effective_thin();

  std::array<std::int64_t, kNumBlocks> accepted{}, proposed{};
  std::array<int, kNumBlocks> window_acc{}, window_tot{};
  constexpr int kWindow = 50;

  ChainRun out;
  for (std::int64_t it = 0; it < config.n_iterations; ++it) {
    const bool in_burn_in = it < burn;
    for (Block block : kBlockCycle) {
      if (block == Block::Sigma2H && !sampler.problem().prior.sample_sigma2_H) continue;
      const auto b = static_cast<std::size_t>(block);
      const bool ok = sampler.step(state, block, rng);
      if (in_burn_in) {
        if (config.adapt) {
          window_tot[b] += 1;
          window_acc[b] += ok ? 1 : 0;
          if (window_tot[b] == kWindow) {
            sampler.adapt(block, static_cast<double>(window_acc[b]) / kWindow);
            window_tot[b] = 0;
            window_acc[b] = 0;
          }
        }
      } else {
        proposed[b] += 1;
        accepted[b] += ok ? 1 : 0;
      }
    }
    if (!in_burn_in && static_cast<std::size_t>(it - burn) % thin == 0) {
      out.samples.push_back(state.params);
    }
  }
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    out.rates[b] = proposed[b] > 0
                       ? static_cast<double>(accepted[b]) / static_cast<double>(proposed[b])
                       : 0.0;
  }
  return out;
}

}  // namespace

PosteriorSamples run_chain(const ParameterState& init, const ChainConfig& config,
                           const InferenceProblem& problem) {
  problem.validate();
  config.validate();
  Sampler sampler(problem, config);
  ChainState state = sampler.make_state(init);
  Rng rng(Rng::derive(config.seed, 1));

  PosteriorSamples out;
  out.n_iterations = config.n_iterations;
  out.burn_in = config.burn_in();
  out.thin = config.effective_thin();
  ChainRun run = run_single_chain(std::move(sampler), std::move(state), config, std::move(rng));
  out.chains.push_back(std::move(run.samples));
  out.acceptance_rates.push_back(run.rates);
  return out;
}

PosteriorSamples run_chains(const ChainConfig& config, const InferenceProblem& problem) {
  problem.validate();
  config.validate();

  PosteriorSamples out;
  out.n_iterations = config.n_iterations;
  out.burn_in = config.burn_in();
  out.thin = config.effective_thin();
  for (int c = 0; c < config.n_chains; ++c) {
    Sampler sampler(problem, config);
    Rng rng(Rng::derive(config.seed, static_cast<std::uint64_t>(c) + 1));
    ChainState state = sampler.draw_initial_state(rng);
    ChainRun run =
        run_single_chain(std::move(sampler), std::move(state), config, std::move(rng));
    out.chains.push_back(std::move(run.samples));
    out.acceptance_rates.push_back(run.rates);
  }
  return out;
}

namespace {

// p-quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double idx = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

// Quantile of the equally weighted mixture sum_i N(centers[i], sds[i]^2),
// found by bisection on its CDF. Exact smoothing of the predictive draws, no
// extra randomness.
double mixture_quantile(const std::vector<double>& centers, const std::vector<double>& sds,
                        double p) {
  double lo = kInf, hi = -kInf;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    lo = std::min(lo, centers[i] - 12.0 * sds[i] - 1.0);
    hi = std::max(hi, centers[i] + 12.0 * sds[i] + 1.0);
  }
  auto cdf = [&](double t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      acc += sds[i] > 0.0 ? normal_cdf((t - centers[i]) / sds[i])
                          : (t >= centers[i] ? 1.0 : 0.0);
    }
    return acc / static_cast<double>(centers.size());
  };
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

PredictionBands predict_thickness(const PosteriorSamples& samples,
                                  const InferenceProblem& problem,
                                  std::span<const double> prediction_x) {
  if (samples.total_states() == 0) {
    throw ValidationError("predict_thickness: no posterior samples");
  }
  const std::size_t np = prediction_x.size();
  std::vector<double> v_s(np), slope(np);
  for (std::size_t j = 0; j < np; ++j) {
    v_s[j] = std::max(problem.fields.velocity_at(prediction_x[j]), 0.0);
    slope[j] = problem.fields.slope_at(prediction_x[j]);
  }

  RootSelection sel;
  sel.strategy = RootStrategy::continuity;
  sel.h_max = problem.h_max;

  std::vector<std::vector<double>> profiles;  // one row per retained state
  std::vector<double> noise_sd;
  std::size_t dropped = 0;
  for (const auto& chain : samples.chains) {
    for (const ParameterState& st : chain) {
      DynamicsParams params;
      params.A = st.A;
      params.h0 = st.h0;
      params.C0 = problem.C0;
      bool bad = false;
      for (double w : st.omega_quad) {
        if (!(w > 0.0)) bad = true;
      }
      ForwardResult fr;
      if (!bad) {
        fr = forward_model_at(problem.grid, prediction_x, v_s, slope, problem.fields.a_at_quad,
                              problem.fields.tau_at_quad, st.omega_quad, params, sel,
                              problem.constants);
        bad = !fr.complete();
      }
      if (bad) {
        ++dropped;
        continue;
      }
      profiles.push_back(std::move(fr.thickness));
      noise_sd.push_back(std::sqrt(st.sigma2_H));
    }
  }

  const std::size_t total = profiles.size() + dropped;
  if (profiles.empty() || dropped * 2 > total) {
    throw NumericalError("predict_thickness: more than half of the posterior states have no "
                         "forward solution at the prediction locations");
  }

  PredictionBands bands;
  bands.x.assign(prediction_x.begin(), prediction_x.end());
  bands.n_states = profiles.size();
  bands.n_dropped = dropped;
  bands.mean.resize(np);
  bands.lo.resize(np);
  bands.hi.resize(np);
  bands.lo_noise.resize(np);
  bands.hi_noise.resize(np);
  std::vector<double> column(profiles.size());
  for (std::size_t j = 0; j < np; ++j) {
    for (std::size_t i = 0; i < profiles.size(); ++i) column[i] = profiles[i][j];
    bands.mean[j] = std::accumulate(column.begin(), column.end(), 0.0) /
                    static_cast<double>(column.size());
    bands.lo[j] = empirical_quantile(column, 0.025);
    bands.hi[j] = empirical_quantile(column, 0.975);
    bands.lo_noise[j] = mixture_quantile(column, noise_sd, 0.025);
    bands.hi_noise[j] = mixture_quantile(column, noise_sd, 0.975);
  }
  return bands;
}

namespace {

struct ScalarExtractor {
  std::string name;
  double (*get)(const ParameterState&, std::size_t);
  std::size_t index;
};

std::vector<ParameterDiagnostic> diagnostics_for(
    const std::vector<std::vector<ParameterState>>& chains,
    const std::vector<ScalarExtractor>& extractors) {
  const std::size_t c = chains.size();
  const std::size_t len = chains[0].size();

  std::vector<ParameterDiagnostic> out;
  for (const auto& ex : extractors) {
    std::vector<std::vector<double>> x(c, std::vector<double>(len));
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < len; ++i) x[j][i] = ex.get(chains[j][i], ex.index);
    }

    std::vector<double> means(c);
    double w_acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double m = 0.0;
      for (double v : x[j]) m += v;
      m /= static_cast<double>(len);
      means[j] = m;
      double s2 = 0.0;
      for (double v : x[j]) s2 += (v - m) * (v - m);
      w_acc += s2 / static_cast<double>(len - 1);
    }
    const double W = w_acc / static_cast<double>(c);
    double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(c);
    double var_means = 0.0;
    for (double m : means) var_means += (m - grand) * (m - grand);
    var_means = c > 1 ? var_means / static_cast<double>(c - 1) : 0.0;

    const double L = static_cast<double>(len);
    const double var_plus = (L - 1.0) / L * W + var_means;

    ParameterDiagnostic d;
    d.name = ex.name;
    if (W == 0.0) {
      d.rhat = var_means == 0.0 ? 1.0 : kInf;
      d.ess = static_cast<double>(c * len);
    } else {
      d.rhat = std::max(1.0, std::sqrt(var_plus / W));
      // Variogram autocorrelation estimate with Geyer's initial-positive rule.
      double sum_rho = 0.0;
      for (std::size_t t = 1; t + 1 < len; t += 2) {
        double rho_pair = 0.0;
        bool stop = false;
        for (std::size_t tt = t; tt <= t + 1; ++tt) {
          double vt = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            for (std::size_t i = tt; i < len; ++i) {
              const double dlt = x[j][i] - x[j][i - tt];
              vt += dlt * dlt;
            }
          }
          vt /= static_cast<double>(c * (len - tt));
          rho_pair += 1.0 - vt / (2.0 * var_plus);
        }
        if (rho_pair < 0.0) {
          stop = true;
        } else {
          sum_rho += rho_pair;
        }
        if (stop) break;
      }
      d.ess = static_cast<double>(c * len) / (1.0 + 2.0 * sum_rho);
      d.ess = std::max(d.ess, 1.0);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<ParameterDiagnostic> chain_diagnostics(const PosteriorSamples& samples) {
  if (samples.chains.size() < 2) {
    throw ValidationError("chain_diagnostics: needs at least 2 chains");
  }
  const std::size_t len = samples.chains[0].size();
  for (const auto& c : samples.chains) {
    if (c.size() != len) throw ValidationError("chain_diagnostics: mismatched chain lengths");
  }
  if (len < 4) throw ValidationError("chain_diagnostics: chains too short");

  const std::size_t m = samples.chains[0][0].omega_quad.size();
  std::vector<ScalarExtractor> extractors = {
      {"A", [](const ParameterState& s, std::size_t) { return s.A; }, 0},
      {"h0", [](const ParameterState& s, std::size_t) { return s.h0; }, 0},
      {"sigma2_H", [](const ParameterState& s, std::size_t) { return s.sigma2_H; }, 0},
      {"sigma2_omega", [](const ParameterState& s, std::size_t) { return s.sigma2_omega; }, 0},
      {"tau2", [](const ParameterState& s, std::size_t) { return s.tau2; }, 0},
  };
  if (m > 0) {
    auto omega_at = [](const ParameterState& s, std::size_t i) { return s.omega_quad[i]; };
    extractors.push_back({"omega[first]", omega_at, 0});
    extractors.push_back({"omega[mid]", omega_at, m / 2});
    extractors.push_back({"omega[last]", omega_at, m - 1});
  }
  return diagnostics_for(samples.chains, extractors);
}

}  // namespace glacier
