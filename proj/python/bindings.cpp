// Python bindings for the main operations: smoothing, dynamics, the width GP,
// and the synthetic experiment driver. Vector arguments are plain sequences;
// matrices come back as numpy arrays.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "glacierbayes/dynamics.hpp"
#include "glacierbayes/gp_width.hpp"
#include "glacierbayes/inference.hpp"
#include "glacierbayes/io.hpp"
#include "glacierbayes/simulation.hpp"
#include "glacierbayes/smoothing.hpp"

namespace py = pybind11;
using namespace glacier;

namespace {

RootStrategy strategy_from(const std::string& name) {
  if (name == "continuity") return RootStrategy::continuity;
  if (name == "nearest") return RootStrategy::nearest_to_reference;
  if (name == "max") return RootStrategy::max_real_positive;
  throw ValidationError("unknown root strategy '" + name + "'");
}

WidthHyperparams hyper_from(double sigma2_omega, double phi, double tau2) {
  WidthHyperparams h;
  h.sigma2_omega = sigma2_omega;
  h.phi = phi;
  h.tau2 = tau2;
  return h;
}

WidthModel model_from(const std::vector<double>& quad_x, const std::vector<double>& mean,
                      double sigma2_omega, double phi, double tau2) {
  WidthModel m;
  m.hyper = hyper_from(sigma2_omega, phi, tau2);
  m.quad_x = quad_x;
  m.mean_at_quad = mean;
  return m;
}

FlowlineGrid grid_from(const std::vector<double>& quad_x, const std::vector<double>& obs_x) {
  return make_grid(quad_x, obs_x, quad_x.back());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Flowline glacier thickness reconstruction: mass conservation + SIA dynamics, "
            "Matern-3/2 width prior, and Metropolis-Hastings inference";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("linear_interp",
        [](const std::vector<double>& x, const std::vector<double>& values,
           const std::vector<double>& targets) {
          return linear_interp(make_series(x, values), targets);
        },
        py::arg("x"), py::arg("values"), py::arg("targets"),
        "Piecewise-linear interpolation with endpoint clamping");

  m.def("smooth_series",
        [](const std::vector<double>& x, const std::vector<double>& y, py::object lam) {
          SplineFit fit = lam.is_none() ? smoothing_spline_gcv(x, y)
                                        : smoothing_spline(x, y, lam.cast<double>());
          return py::make_tuple(fit.fitted, fit.lambda, fit.trace);
        },
        py::arg("x"), py::arg("y"), py::arg("lam") = py::none(),
        "Natural cubic smoothing spline; lam=None picks lambda by GCV. "
        "Returns (fitted, lambda, effective_df)");

  m.def("central_difference_slope",
        [](const std::vector<double>& x, const std::vector<double>& elevation) {
          return series_values(central_difference_slope(make_series(x, elevation)));
        },
        py::arg("x"), py::arg("elevation"));

  m.def("sia_correction",
        [](double v_s, double s, double h, double A, double rho, double g) {
          PhysicalConstants c;
          c.rho = rho;
          c.g = g;
          return sia_correction(v_s, s, h, A, c);
        },
        py::arg("v_s"), py::arg("s"), py::arg("h"), py::arg("A"), py::arg("rho") = 917.0,
        py::arg("g") = 9.81);

  m.def("cumulative_flux",
        [](const std::vector<double>& quad_x, const std::vector<double>& obs_x,
           const std::vector<double>& a, const std::vector<double>& tau,
           const std::vector<double>& omega, double C0) {
          DynamicsParams p;
          p.C0 = C0;
          p.h0 = 1.0;
          return cumulative_flux(grid_from(quad_x, obs_x), a, tau, omega, p).flux_at_obs;
        },
        py::arg("quad_x"), py::arg("obs_x"), py::arg("a"), py::arg("tau"), py::arg("omega"),
        py::arg("C0") = 0.0);

  m.def("thickness_roots",
        [](double F, double v_s, double s, double omega, double A, double h_max, double rho,
           double g) {
          PhysicalConstants c;
          c.rho = rho;
          c.g = g;
          return thickness_roots(F, v_s, s, omega, A, c, h_max);
        },
        py::arg("F"), py::arg("v_s"), py::arg("s"), py::arg("omega"), py::arg("A"),
        py::arg("h_max") = 10000.0, py::arg("rho") = 917.0, py::arg("g") = 9.81,
        "All nonnegative real roots of the thickness polynomial, ascending");

  m.def("solve_thickness",
        [](double F, double v_s, double s, double omega, double A, const std::string& strategy,
           double reference, double h_max) -> std::optional<double> {
          PhysicalConstants c;
          RootSelection sel;
          sel.strategy = strategy_from(strategy);
          sel.h_max = h_max;
          return solve_thickness(F, v_s, s, omega, A, c, sel, reference);
        },
        py::arg("F"), py::arg("v_s"), py::arg("s"), py::arg("omega"), py::arg("A"),
        py::arg("strategy") = "continuity", py::arg("reference") = 0.0,
        py::arg("h_max") = 10000.0, "Selected root, or None when no solution exists");

  m.def("forward_model",
        [](const std::vector<double>& quad_x, const std::vector<double>& eval_x,
           const std::vector<double>& v_s, const std::vector<double>& s,
           const std::vector<double>& a, const std::vector<double>& tau,
           const std::vector<double>& omega, double A, double h0, double C0, double h_max) {
          DynamicsParams p;
          p.A = A;
          p.h0 = h0;
          p.C0 = C0;
          RootSelection sel;
          sel.h_max = h_max;
          const ForwardResult fr = forward_model_at(grid_from(quad_x, eval_x), eval_x, v_s, s, a,
                                                    tau, omega, p, sel, PhysicalConstants{});
          return py::make_tuple(fr.thickness, fr.gap);
        },
        py::arg("quad_x"), py::arg("eval_x"), py::arg("v_s"), py::arg("s"), py::arg("a"),
        py::arg("tau"), py::arg("omega"), py::arg("A"), py::arg("h0"), py::arg("C0") = 0.0,
        py::arg("h_max") = 10000.0, "Returns (thickness, gap_flags)");

  m.def("synthetic_velocity",
        [](const std::vector<double>& quad_x, const std::vector<double>& obs_x,
           const std::vector<double>& h_true, const std::vector<double>& s,
           const std::vector<double>& a, const std::vector<double>& tau,
           const std::vector<double>& omega, double A, double C0) {
          DynamicsParams p;
          p.A = A;
          p.h0 = h_true.front();
          p.C0 = C0;
          return synthetic_velocity(grid_from(quad_x, obs_x), h_true, s, a, tau, omega, p,
                                    PhysicalConstants{});
        },
        py::arg("quad_x"), py::arg("obs_x"), py::arg("h_true"), py::arg("s"), py::arg("a"),
        py::arg("tau"), py::arg("omega"), py::arg("A"), py::arg("C0") = 0.0);

  m.def("matern32_cov",
        [](double d, double sigma2_omega, double phi, double tau2) {
          return matern32_cov(d, hyper_from(sigma2_omega, phi, tau2));
        },
        py::arg("d"), py::arg("sigma2_omega"), py::arg("phi"), py::arg("tau2") = 0.0);

  m.def("build_cov_matrix",
        [](const std::vector<double>& locations, double sigma2_omega, double phi, double tau2,
           double jitter) {
          return build_cov_matrix(locations, hyper_from(sigma2_omega, phi, tau2), jitter);
        },
        py::arg("locations"), py::arg("sigma2_omega"), py::arg("phi"), py::arg("tau2") = 0.0,
        py::arg("jitter") = 0.0);

  m.def("sample_width_prior",
        [](const std::vector<double>& quad_x, const std::vector<double>& mean,
           double sigma2_omega, double phi, double tau2, const std::vector<double>& locations,
           std::uint64_t seed) {
          return sample_width_prior(model_from(quad_x, mean, sigma2_omega, phi, tau2), locations,
                                    seed);
        },
        py::arg("quad_x"), py::arg("mean"), py::arg("sigma2_omega"), py::arg("phi"),
        py::arg("tau2"), py::arg("locations"), py::arg("seed"));

  m.def("width_log_density",
        [](const std::vector<double>& omega, const std::vector<double>& quad_x,
           const std::vector<double>& mean, double sigma2_omega, double phi, double tau2,
           const std::vector<double>& locations) {
          return width_log_density(omega, model_from(quad_x, mean, sigma2_omega, phi, tau2),
                                   locations);
        },
        py::arg("omega"), py::arg("quad_x"), py::arg("mean"), py::arg("sigma2_omega"),
        py::arg("phi"), py::arg("tau2"), py::arg("locations"));

  m.def("conditional_predict",
        [](const std::vector<double>& omega_at_quad, const std::vector<double>& quad_x,
           const std::vector<double>& mean, double sigma2_omega, double phi, double tau2,
           const std::vector<double>& new_locations) {
          const auto pred = conditional_predict(
              omega_at_quad, model_from(quad_x, mean, sigma2_omega, phi, tau2), new_locations);
          return py::make_tuple(pred.mean, pred.variance);
        },
        py::arg("omega_at_quad"), py::arg("quad_x"), py::arg("mean"), py::arg("sigma2_omega"),
        py::arg("phi"), py::arg("tau2"), py::arg("new_locations"),
        "Returns (conditional_mean, conditional_variance)");

  m.def("builtin_truth_profile", []() {
    const TruthProfile p = builtin_truth_profile();
    py::dict out;
    out["version_tag"] = p.version_tag;
    out["domain_length"] = p.domain_length;
    auto pack = [](const Series& s) {
      return py::make_tuple(series_x(s), series_values(s));
    };
    out["thickness"] = pack(p.thickness);
    out["width"] = pack(p.width);
    out["elevation"] = pack(p.elevation);
    out["accumulation"] = pack(p.accumulation);
    out["thinning"] = pack(p.thinning);
    return out;
  });

  m.def("run_experiment",
        [](int n_train, double noise_sd, double true_A, std::uint64_t seed,
           std::int64_t iterations, int chains, double quad_spacing) {
          ExperimentSpec spec;
          spec.n_train = n_train;
          spec.noise_sd = noise_sd;
          spec.true_A = true_A;
          spec.seed = seed;
          spec.chain.n_iterations = iterations;
          spec.chain.n_chains = chains;
          spec.pipeline.quad_spacing = quad_spacing;
          const ExperimentResult r = run_experiment(builtin_truth_profile(), spec);
          py::dict out;
          out["ok"] = r.ok();
          out["error"] = r.error;
          out["A_mean"] = r.A_mean;
          out["A_lo"] = r.A_lo;
          out["A_hi"] = r.A_hi;
          out["width_coverage_95"] = r.width_coverage_95;
          out["thickness_coverage_95"] = r.thickness_coverage_95;
          out["prediction_x"] = r.bands.x;
          out["thickness_mean"] = r.bands.mean;
          out["thickness_lo"] = r.bands.lo;
          out["thickness_hi"] = r.bands.hi;
          return out;
        },
        py::arg("n_train") = 10, py::arg("noise_sd") = 50.0, py::arg("true_A") = 1e-18,
        py::arg("seed") = 0, py::arg("iterations") = 2000, py::arg("chains") = 2,
        py::arg("quad_spacing") = 2000.0,
        "One synthetic-experiment cell on the built-in profile");

  m.attr("__version__") = "0.1.0";
}
