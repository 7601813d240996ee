#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "glacierbayes/constants.hpp"
#include "glacierbayes/dynamics.hpp"
#include "glacierbayes/grid.hpp"
#include "glacierbayes/series.hpp"
#include "glacierbayes/smoothing.hpp"

namespace glacier {

// Matern covariance with smoothness fixed at 3/2: the width is smooth but not
// infinitely so. tau2 is a nugget applied only at zero distance.
struct WidthHyperparams {
  double sigma2_omega = 1.0;  // marginal variance, m^2
  double phi = 40000.0;       // range, m
  double tau2 = 0.0;          // nugget, m^2

  static constexpr double nu = 1.5;

  void validate() const;
};

struct WidthModel {
  WidthHyperparams hyper;
  std::vector<double> quad_x;
  std::vector<double> mean_at_quad;  // m, strictly positive

  void validate() const;
  std::vector<double> mean_at(std::span<const double> locations) const;
};

double matern32_cov(double d, const WidthHyperparams& hyper);

Eigen::MatrixXd build_cov_matrix(std::span<const double> locations,
                                 const WidthHyperparams& hyper, double jitter);

struct CholeskyResult {
  Eigen::MatrixXd L;   // lower factor of covariance + jitter * I
  double jitter = 0.0; // jitter that made the factorization succeed
};

// LLT with jitter escalation: starts at initial_jitter and multiplies by 10
// until the factorization succeeds or the cap is passed.
CholeskyResult cholesky_with_jitter(std::span<const double> locations,
                                    const WidthHyperparams& hyper, double initial_jitter,
                                    double max_jitter);

// Physics-derived prior mean: run the flux integration with A = 0 and the
// given candidate width, back out the width that reproduces the observed
// thickness at each observation, and interpolate onto the quadrature grid.
std::vector<double> width_mean_function(const FlowlineGrid& grid, const SurfaceFields& fields,
                                        std::span<const double> h_obs,
                                        const Series& narrowest_width, const PhysicalConstants& c,
                                        double C0 = 0.0, double floor_m = 1.0);

std::vector<double> sample_width_prior(const WidthModel& model,
                                       std::span<const double> locations, std::uint64_t seed);

double width_log_density(std::span<const double> omega, const WidthModel& model,
                         std::span<const double> locations);

struct ConditionalPrediction {
  std::vector<double> mean;
  std::vector<double> variance;
};

// Gaussian conditioning of the width process on its quadrature-grid values.
ConditionalPrediction conditional_predict(std::span<const double> omega_at_quad,
                                          const WidthModel& model,
                                          std::span<const double> new_locations);

}  // namespace glacier
