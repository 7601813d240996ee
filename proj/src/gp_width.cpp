#include "glacierbayes/gp_width.hpp"

#include <cmath>

#include "glacierbayes/errors.hpp"
#include "glacierbayes/rng.hpp"

namespace glacier {

namespace {
constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kLog2Pi = 1.8378770664093453;

Eigen::VectorXd to_vec(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

void WidthHyperparams::validate() const {
  if (!(sigma2_omega > 0.0)) throw ValidationError("width model: sigma2_omega must be positive");
  if (!(phi > 0.0)) throw ValidationError("width model: phi must be positive");
  if (!(tau2 >= 0.0)) throw ValidationError("width model: tau2 must be nonnegative");
}

void WidthModel::validate() const {
  hyper.validate();
  if (quad_x.size() != mean_at_quad.size() || quad_x.size() < 2) {
    throw ValidationError("width model: mean function and grid sizes inconsistent");
  }
  for (double m : mean_at_quad) {
    if (!(m > 0.0)) throw ValidationError("width model: mean function must be positive");
  }
}

std::vector<double> WidthModel::mean_at(std::span<const double> locations) const {
  std::vector<double> out(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) {
    out[i] = linear_interp_at(quad_x, mean_at_quad, locations[i]);
  }
  return out;
}

double matern32_cov(double d, const WidthHyperparams& hyper) {
  if (d < 0.0) throw ValidationError("matern32_cov: distance must be nonnegative");
  if (d == 0.0) return hyper.sigma2_omega + hyper.tau2;
  const double r = kSqrt3 * d / hyper.phi;
  return hyper.sigma2_omega * (1.0 + r) * std::exp(-r);
}

Eigen::MatrixXd build_cov_matrix(std::span<const double> locations,
                                 const WidthHyperparams& hyper, double jitter) {
  hyper.validate();
  const auto n = static_cast<Eigen::Index>(locations.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov(i, i) = matern32_cov(0.0, hyper) + jitter;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double c = matern32_cov(std::abs(locations[i] - locations[j]), hyper);
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  return cov;
}

CholeskyResult cholesky_with_jitter(std::span<const double> locations,
                                    const WidthHyperparams& hyper, double initial_jitter,
                                    double max_jitter) {
  double jitter = initial_jitter;
  while (true) {
    Eigen::LLT<Eigen::MatrixXd> llt(build_cov_matrix(locations, hyper, jitter));
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
    if (jitter >= max_jitter) {
      throw NumericalError("width covariance not positive definite even at maximum jitter");
    }
    jitter = jitter == 0.0 ? 1e-8 * hyper.sigma2_omega : jitter * 10.0;
    if (jitter > max_jitter) jitter = max_jitter;
  }
}

std::vector<double> width_mean_function(const FlowlineGrid& grid, const SurfaceFields& fields,
                                        std::span<const double> h_obs,
                                        const Series& narrowest_width, const PhysicalConstants& c,
                                        double C0, double floor_m) {
  if (h_obs.size() != grid.n_obs()) {
    throw ValidationError("width_mean_function: h_obs must match the observation grid");
  }
  validate_series(narrowest_width, 2, "width candidate");

  DynamicsParams params;
  params.A = 0.0;
  params.C0 = C0;
  const std::vector<double> cand_quad = linear_interp(narrowest_width, grid.quad_x);
  const FluxProfile flux =
      cumulative_flux(grid, fields.a_at_quad, fields.tau_at_quad, cand_quad, params);

  // With A = 0 the polynomial collapses to F = v_s h omega, so the width at
  // an observation is F / (v_s H_obs).
  std::vector<double> w_at_obs(grid.n_obs());
  for (std::size_t j = 0; j < grid.n_obs(); ++j) {
    const double vh = fields.v_s_at_obs[j] * h_obs[j];
    if (vh == 0.0) {
      throw ValidationError("width_mean_function: zero velocity or thickness at an observation");
    }
    w_at_obs[j] = flux.flux_at_obs[j] / vh;
  }

  Series knots;
  if (grid.n_obs() == 1) {
    // A single observation pins a constant mean.
    knots = {{grid.quad_x.front(), w_at_obs[0]}, {grid.quad_x.back(), w_at_obs[0]}};
  } else {
    knots = make_series(grid.obs_x, w_at_obs);
  }
  std::vector<double> mean = linear_interp(knots, grid.quad_x);
  for (double& m : mean) m = std::max(m, floor_m);
  return mean;
}

std::vector<double> sample_width_prior(const WidthModel& model,
                                       std::span<const double> locations, std::uint64_t seed) {
  model.validate();
  const CholeskyResult chol = cholesky_with_jitter(
      locations, model.hyper, 0.0, 1e-2 * model.hyper.sigma2_omega);
  const std::vector<double> mean = model.mean_at(locations);

  Rng rng(seed);
  Eigen::VectorXd z(static_cast<Eigen::Index>(locations.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const Eigen::VectorXd sample = to_vec(mean) + chol.L * z;
  return {sample.data(), sample.data() + sample.size()};
}

double width_log_density(std::span<const double> omega, const WidthModel& model,
                         std::span<const double> locations) {
  model.validate();
  if (omega.size() != locations.size()) {
    throw ValidationError("width_log_density: omega length must match locations");
  }
  const CholeskyResult chol = cholesky_with_jitter(
      locations, model.hyper, 0.0, 1e-2 * model.hyper.sigma2_omega);
  const std::vector<double> mean = model.mean_at(locations);

  const Eigen::VectorXd resid = to_vec(omega) - to_vec(mean);
  const Eigen::VectorXd alpha = chol.L.triangularView<Eigen::Lower>().solve(resid);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < chol.L.rows(); ++i) log_det += std::log(chol.L(i, i));
  const double n = static_cast<double>(omega.size());
  return -0.5 * alpha.squaredNorm() - log_det - 0.5 * n * kLog2Pi;
}

ConditionalPrediction conditional_predict(std::span<const double> omega_at_quad,
                                          const WidthModel& model,
                                          std::span<const double> new_locations) {
  model.validate();
  if (omega_at_quad.size() != model.quad_x.size()) {
    throw ValidationError("conditional_predict: omega length must match the quadrature grid");
  }
  const CholeskyResult chol = cholesky_with_jitter(
      model.quad_x, model.hyper, 0.0, 1e-2 * model.hyper.sigma2_omega);

  const Eigen::VectorXd resid = to_vec(omega_at_quad) - to_vec(model.mean_at_quad);
  const auto m = static_cast<Eigen::Index>(model.quad_x.size());
  const auto p = static_cast<Eigen::Index>(new_locations.size());

  Eigen::MatrixXd cross(m, p);  // cov(quad, new)
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      cross(i, j) = matern32_cov(std::abs(model.quad_x[i] - new_locations[j]), model.hyper);
    }
  }

  // L L^T weights = cross  =>  weights = Sigma^{-1} cross
  const Eigen::MatrixXd half = chol.L.triangularView<Eigen::Lower>().solve(cross);
  const Eigen::VectorXd alpha = chol.L.triangularView<Eigen::Lower>().solve(resid);
  const std::vector<double> prior_mean = model.mean_at(new_locations);

  ConditionalPrediction pred;
  pred.mean.resize(new_locations.size());
  pred.variance.resize(new_locations.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    pred.mean[j] = prior_mean[j] + half.col(j).dot(alpha);
    const double var = matern32_cov(0.0, model.hyper) - half.col(j).squaredNorm();
    pred.variance[j] = std::max(var, 0.0);
  }
  return pred;
}

}  // namespace glacier
