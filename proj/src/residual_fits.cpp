#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "casimir/errors.hpp"
#include "casimir/estimation.hpp"
#include "fit_scales.hpp"

namespace casimir {

namespace {

using detail::kCcasScale;
using detail::kCelScale;
using detail::kD0Scale;
using detail::kExcursionSqScale;
using detail::kRateScale;
using detail::kV0Scale;

// Model of the residual shift as a function of the true gap, with its
// derivatives in d and in theta, and the mixed derivative the
// effective-variance weights need.
struct ShapeEval {
  double value = 0.0;
  double slope = 0.0;            // d f / d d
  Eigen::VectorXd grad;          // d f / d theta
  Eigen::VectorXd slope_grad;    // d^2 f / (d d  d theta)
};

struct Shape {
  std::vector<std::string> names;
  std::function<ShapeEval(double d, const Eigen::VectorXd& theta)> eval;

  double value(double d, const Eigen::VectorXd& theta) const { return eval(d, theta).value; }
};

// Residual of one point at scaled calibration c, as the joint model sees it.
double joint_residual(const ResidualPoint& q, const Eigen::Vector4d& c, double& d) {
  d = q.d_r + c(1) * kD0Scale;
  if (!(d > 0.0)) throw ContactError("gap became non-positive");
  const double vr = q.v_c - c(3) * kV0Scale;
  return q.delta_nu2 + c(0) + c(2) * kCelScale * vr * vr / (d * d * d);
}

// The amplitude theta(0) and d0 are strongly correlated through the steep
// gap dependence, and starting at the calibration centre leaves the solver
// in a long curved valley. Scan d0 along the regression line of the prior,
// solve the (linear) amplitude in closed form and keep the best start.
void profile_start(const std::vector<ResidualPoint>& pts, const Shape& shape,
                   const Eigen::Matrix4d& cov_scaled, Eigen::VectorXd& start) {
  const auto k = start.size() - 4;
  const Eigen::Vector4d c_hat = start.tail<4>();
  const Eigen::Vector4d slope = cov_scaled.col(1) / cov_scaled(1, 1);
  const double sd = std::sqrt(cov_scaled(1, 1));
  Eigen::VectorXd unit = start.head(k);
  unit(0) = 1.0;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_start = start;
  for (int step = -24; step <= 24; ++step) {
    const double delta = 0.25 * step * sd;
    const Eigen::Vector4d c = c_hat + slope * delta;
    try {
      double num = 0.0, den = 0.0;
      std::vector<double> res(pts.size()), basis(pts.size());
      for (std::size_t i = 0; i < pts.size(); ++i) {
        double d = 0.0;
        res[i] = joint_residual(pts[i], c, d);
        basis[i] = shape.value(d, unit);
        const double w = 1.0 / (pts[i].sigma_stat * pts[i].sigma_stat);
        num += w * basis[i] * res[i];
        den += w * basis[i] * basis[i];
      }
      if (!(den > 0.0)) continue;
      const double amp = num / den;
      double chi2 = delta * delta / cov_scaled(1, 1);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double r = (res[i] - amp * basis[i]) / pts[i].sigma_stat;
        chi2 += r * r;
      }
      if (chi2 < best) {
        best = chi2;
        best_start.head(k) = unit;
        best_start(0) = amp;
        best_start.tail<4>() = c;
      }
    } catch (const Error&) {
      continue;
    }
  }
  start = best_start;
}

// Fits the shape to the n smallest gaps. Joint treatment appends the four
// calibration parameters (scaled) after theta and one prior row each.
FitResult fit_shape(const ResidualRun& rr, int n, const Shape& shape,
                    const Eigen::VectorXd& theta0, ErrorTreatment treatment,
                    const LmOptions& lm) {
  const auto k = theta0.size();
  if (n > static_cast<int>(rr.points.size())) {
    throw DataError("requested " + std::to_string(n) + " points, run has " +
                    std::to_string(rr.points.size()));
  }
  if (n < k + 1) {
    throw DataError("need at least " + std::to_string(k + 1) + " points for a " +
                    std::to_string(k) + "-parameter fit");
  }
  const std::vector<ResidualPoint> pts(rr.points.begin(), rr.points.begin() + n);
  const CalibrationParams& cal = rr.calibration;
  const Eigen::Vector4d scales = detail::calibration_scales();

  ModelFunction model;
  model.parameter_names = shape.names;

  if (treatment == ErrorTreatment::kEffectiveVariance) {
    model.parameter_count = static_cast<std::size_t>(k);
    model.residual_count = pts.size();
    model.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const ResidualPoint& q = pts[i];
        const ShapeEval e = shape.eval(q.d, p);
        Eigen::Vector4d g = q.gradient;
        g(1) -= e.slope;
        const double var = q.sigma_stat * q.sigma_stat + std::max(0.0, g.dot(cal.covariance * g));
        r(static_cast<Eigen::Index>(i)) = (q.residual - e.value) / std::sqrt(var);
      }
    };
    model.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const ResidualPoint& q = pts[i];
        const ShapeEval e = shape.eval(q.d, p);
        Eigen::Vector4d g = q.gradient;
        g(1) -= e.slope;
        const Eigen::Vector4d sg = cal.covariance * g;
        const double cal_var = g.dot(sg);
        const double var = q.sigma_stat * q.sigma_stat + std::max(0.0, cal_var);
        const double sd = std::sqrt(var);
        const double diff = q.residual - e.value;
        for (Eigen::Index j = 0; j < k; ++j) {
          // var depends on theta through g(1) = gradient(1) - slope.
          const double dvar = cal_var > 0.0 ? -2.0 * sg(1) * e.slope_grad(j) : 0.0;
          jac(static_cast<Eigen::Index>(i), j) = -e.grad(j) / sd - diff * dvar / (2.0 * var * sd);
        }
      }
    };
    return lm_fit(model, theta0, lm);
  }

  const Eigen::Vector4d c_hat = cal.vector().cwiseQuotient(scales);
  const Eigen::Matrix4d cov_scaled =
      scales.cwiseInverse().asDiagonal() * cal.covariance * scales.cwiseInverse().asDiagonal();
  const Eigen::LLT<Eigen::Matrix4d> llt(cov_scaled);
  if (llt.info() != Eigen::Success) {
    throw DataError("calibration covariance is not positive definite");
  }
  const Eigen::Matrix4d l = llt.matrixL();

  model.parameter_count = static_cast<std::size_t>(k + 4);
  model.residual_count = pts.size() + 4;
  model.parameter_names.insert(model.parameter_names.end(), {"offset", "d0", "c_el", "v0"});
  model.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const Eigen::VectorXd theta = p.head(k);
    const Eigen::Vector4d c = p.tail<4>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double d = 0.0;
      const double res = joint_residual(pts[i], c, d);
      r(static_cast<Eigen::Index>(i)) = (res - shape.value(d, theta)) / pts[i].sigma_stat;
    }
    r.tail<4>() = l.triangularView<Eigen::Lower>().solve(c - c_hat);
  };
  const Eigen::Matrix4d l_inv = l.triangularView<Eigen::Lower>().solve(Eigen::Matrix4d::Identity());
  model.jacobian = [&, l_inv](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    jac.setZero();
    const Eigen::VectorXd theta = p.head(k);
    const Eigen::Vector4d c = p.tail<4>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const ResidualPoint& q = pts[i];
      const auto row = static_cast<Eigen::Index>(i);
      const double s = q.sigma_stat;
      double d = 0.0;
      joint_residual(q, c, d);
      const ShapeEval e = shape.eval(d, theta);
      const double vr = q.v_c - c(3) * kV0Scale;
      const double d3 = d * d * d;
      for (Eigen::Index j = 0; j < k; ++j) jac(row, j) = -e.grad(j) / s;
      jac(row, k) = 1.0 / s;
      jac(row, k + 1) = (-3.0 * c(2) * kCelScale * vr * vr / (d3 * d) - e.slope) * kD0Scale / s;
      jac(row, k + 2) = kCelScale * vr * vr / d3 / s;
      jac(row, k + 3) = -2.0 * c(2) * kCelScale * vr / d3 * kV0Scale / s;
    }
    jac.block(static_cast<Eigen::Index>(pts.size()), k, 4, 4) = l_inv;
  };
  Eigen::VectorXd start(k + 4);
  start << theta0, c_hat;
  profile_start(pts, shape, cov_scaled, start);
  return lm_fit(model, start, lm);
}

Shape casimir_shape() {
  return {{"c_cas"}, [](double d, const Eigen::VectorXd& t) {
            const double d5 = std::pow(d, 5);
            ShapeEval e;
            e.value = -t(0) * kCcasScale / d5;
            e.slope = 5.0 * t(0) * kCcasScale / (d5 * d);
            e.grad = Eigen::VectorXd::Constant(1, -kCcasScale / d5);
            e.slope_grad = Eigen::VectorXd::Constant(1, 5.0 * kCcasScale / (d5 * d));
            return e;
          }};
}

// Closed-form weighted slope of residual against -1/d^5.
double casimir_start(const ResidualRun& rr, int n) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n && i < static_cast<int>(rr.points.size()); ++i) {
    const ResidualPoint& q = rr.points[static_cast<std::size_t>(i)];
    const double x = -1.0 / std::pow(q.d, 5);
    const double w = 1.0 / (q.sigma_y * q.sigma_y);
    num += w * x * q.residual;
    den += w * x * x;
  }
  return den > 0.0 ? num / den / kCcasScale : 1.0;
}

void require_converged(const FitResult& f, const char* what) {
  if (!f.converged) {
    throw ConvergenceError(std::string(what) + " did not converge in " +
                           std::to_string(f.iterations) + " iterations");
  }
}

}  // namespace

double kc_sigma(double c_cas, double c_el, double var_c_cas, double var_c_el, double cov,
                const PhysicalConstants& k) {
  const double a = k.epsilon0 / (4.0 * c_el);
  const double b = -k.epsilon0 * c_cas / (4.0 * c_el * c_el);
  const double var = a * a * var_c_cas + b * b * var_c_el + 2.0 * a * b * cov;
  return std::sqrt(std::max(0.0, var));
}

CasimirFit fit_casimir(const ResidualRun& residuals, const CasimirFitOptions& options) {
  const int total = static_cast<int>(residuals.points.size());
  if (options.n_points < 2 && options.selection == PointSelection::kFixed) {
    throw DataError("Casimir fit needs at least 2 points");
  }
  const Shape shape = casimir_shape();
  const bool joint = options.treatment == ErrorTreatment::kJointCalibration;

  auto run_fit = [&](int n) {
    Eigen::VectorXd theta(1);
    theta << casimir_start(residuals, n);
    return fit_shape(residuals, n, shape, theta, options.treatment, options.lm);
  };

  CasimirFit out;
  for (int n = std::max(options.scan_min, 2); n <= total; ++n) {
    SelectionEntry e;
    e.n = n;
    try {
      const FitResult f = run_fit(n);
      e.c_cas = f.parameters(0) * kCcasScale;
      e.sigma_c_cas = f.sigma(0) * kCcasScale;
      e.chi2 = f.chi2;
      e.dof = f.dof;
      e.chi2_probability = f.chi2_probability;
      e.ok = f.converged;
    } catch (const Error&) {
      e.ok = false;
    }
    out.scan.push_back(e);
  }

  int n_sel = options.n_points;
  if (options.selection == PointSelection::kMaxProbability) {
    double best = -1.0;
    for (const auto& e : out.scan) {
      if (e.ok && e.chi2_probability > best) {
        best = e.chi2_probability;
        n_sel = e.n;
      }
    }
    if (best < 0.0) throw ConvergenceError("no point count in the selection scan converged");
  }
  if (n_sel > total) {
    throw DataError("Casimir fit needs " + std::to_string(n_sel) + " points, run has " +
                    std::to_string(total));
  }

  out.fit = run_fit(n_sel);
  require_converged(out.fit, "Casimir fit");
  out.n_used = n_sel;

  CasimirParams& c = out.params;
  c.c_cas = out.fit.parameters(0) * kCcasScale;
  c.sigma_c_cas = out.fit.sigma(0) * kCcasScale;
  if (joint) {
    c.c_el_used = out.fit.parameters(3) * kCelScale;
    c.sigma_c_el_used = out.fit.sigma(3) * kCelScale;
    c.cov_ccas_cel = out.fit.covariance(0, 3) * kCcasScale * kCelScale;
  } else {
    c.c_el_used = residuals.calibration.c_el;
    c.sigma_c_el_used = residuals.calibration.sigma(2);
    c.cov_ccas_cel = 0.0;
  }
  c.k_c = kc_from_coefficients(c.c_cas, c.c_el_used);
  c.sigma_k_c = kc_sigma(c.c_cas, c.c_el_used, c.sigma_c_cas * c.sigma_c_cas,
                         c.sigma_c_el_used * c.sigma_c_el_used, c.cov_ccas_cel);
  c.exponent = 5.0;
  out.sign_anomaly = !(c.c_cas > 0.0);
  return out;
}

ExponentFit fit_free_exponent(const ResidualRun& residuals, int n_points,
                              ErrorTreatment treatment, const LmOptions& lm) {
  if (n_points < 3) throw DataError("free-exponent fit needs at least 3 points");
  if (n_points > static_cast<int>(residuals.points.size())) {
    throw DataError("free-exponent fit needs " + std::to_string(n_points) + " points");
  }
  ExponentFit out;
  const double d_ref = out.reference_gap;
  Shape shape{{"amplitude", "exponent"}, [d_ref](double d, const Eigen::VectorXd& t) {
                const double ratio = std::pow(d_ref / d, t(1));
                const double log_ratio = std::log(d_ref / d);
                ShapeEval e;
                e.value = -t(0) * ratio;
                e.slope = t(0) * t(1) * ratio / d;
                e.grad = Eigen::Vector2d(-ratio, -t(0) * ratio * log_ratio);
                e.slope_grad = Eigen::Vector2d(t(1) * ratio / d, t(0) * ratio / d * (1.0 + t(1) * log_ratio));
                return e;
              }};

  // Two-point log-log start from the nearest and farthest selected gaps.
  const ResidualPoint& a = residuals.points.front();
  const ResidualPoint& b = residuals.points[static_cast<std::size_t>(n_points - 1)];
  double n0 = 5.0;
  if (a.residual < 0.0 && b.residual < 0.0 && b.d > a.d) {
    n0 = std::log(a.residual / b.residual) / std::log(b.d / a.d);
  }
  if (!std::isfinite(n0) || n0 < 0.5 || n0 > 12.0) n0 = 5.0;
  const double amp0 = std::abs(a.residual) * std::pow(a.d / d_ref, n0);

  Eigen::VectorXd theta(2);
  theta << amp0, n0;
  out.fit = fit_shape(residuals, n_points, shape, theta, treatment, lm);
  require_converged(out.fit, "free-exponent fit");
  out.amplitude = out.fit.parameters(0);
  out.sigma_amplitude = out.fit.sigma(0);
  out.exponent = out.fit.parameters(1);
  out.sigma_exponent = out.fit.sigma(1);
  return out;
}

WedgeFit fit_wedge_deviation(const ResidualRun& residuals, int n_points,
                             ErrorTreatment treatment, const LmOptions& lm) {
  if (n_points < 3) throw DataError("wedge fit needs at least 3 points");
  Shape shape{{"c_cas", "excursion_sq"}, [](double d, const Eigen::VectorXd& t) {
                const double a2 = t(1) * kExcursionSqScale / 4.0;
                const double d2 = d * d;
                const double den = d2 - a2;
                if (!(den > 0.0)) throw DomainError("wedge touches");
                const double den4 = den * den * den * den;
                const double den5 = den4 * den;
                const double amp = t(0) * kCcasScale;
                // f = -amp u, u = d (d^2 + a2) / den^4; partials of u in d and a2.
                const double u = d * (d2 + a2) / den4;
                const double u_d = (3.0 * d2 + a2) / den4 - 8.0 * d2 * (d2 + a2) / den5;
                const double u_a = d / den4 + 4.0 * d * (d2 + a2) / den5;
                const double u_da = 1.0 / den4 + 4.0 * (3.0 * d2 + a2) / den5 - 8.0 * d2 / den5 -
                                    40.0 * d2 * (d2 + a2) / (den5 * den);
                const double a_t = kExcursionSqScale / 4.0;
                ShapeEval e;
                e.value = -amp * u;
                e.slope = -amp * u_d;
                e.grad = Eigen::Vector2d(-kCcasScale * u, -amp * u_a * a_t);
                e.slope_grad = Eigen::Vector2d(-kCcasScale * u_d, -amp * u_da * a_t);
                return e;
              }};
  Eigen::VectorXd theta(2);
  theta << casimir_start(residuals, n_points), 0.0;

  WedgeFit out;
  out.fit = fit_shape(residuals, n_points, shape, theta, treatment, lm);
  require_converged(out.fit, "wedge fit");
  out.c_cas = out.fit.parameters(0) * kCcasScale;
  out.sigma_c_cas = out.fit.sigma(0) * kCcasScale;
  out.excursion_sq = out.fit.parameters(1) * kExcursionSqScale;
  out.sigma_excursion_sq = out.fit.sigma(1) * kExcursionSqScale;
  out.deviation = std::sqrt(std::max(0.0, out.excursion_sq));
  out.sigma_deviation = std::sqrt(out.sigma_excursion_sq);
  return out;
}

DriftFit fit_with_drift(const std::vector<MeasurementRun>& calibration_runs,
                        const MeasurementRun& cancellation_run, const ApparatusConfig& nominal,
                        const DriftFitOptions& options) {
  std::vector<const MeasurementRun*> runs;
  for (const auto& r : calibration_runs) runs.push_back(&r);
  runs.push_back(&cancellation_run);
  for (const MeasurementRun* r : runs) {
    bool advancing = r->points.size() < 2;
    for (const RunPoint& p : r->points) {
      if (!std::isfinite(p.t)) throw ConfigError("run '" + r->label + "' has missing timestamps", "t_s");
      if (p.t != r->points.front().t) advancing = true;
    }
    if (!advancing) throw ConfigError("run '" + r->label + "' has missing timestamps", "t_s");
  }

  struct P {
    double d_r, v_c, t, y, sigma;
  };
  std::vector<P> pts;
  for (const MeasurementRun* r : runs) {
    for (const RunPoint& p : r->points) {
      pts.push_back({relative_displacement(p.v_pzt, p.d_s, nominal), p.v_c, p.t, p.delta_nu2,
                     p.sigma_delta_nu2});
    }
  }

  // Start from the calibration runs alone (same drift treatment), with d0
  // pushed back if it would put a cancellation point in contact, then a
  // closed-form Casimir amplitude on the cancellation run.
  CalibrationOptions cal_options;
  cal_options.fit_drift = options.fit_drift;
  const CalibrationFit cal = fit_calibration_global(calibration_runs, nominal, cal_options);
  Eigen::Vector4d c_start = cal.params.vector().cwiseQuotient(detail::calibration_scales());
  const std::size_t first_cancel = pts.size() - cancellation_run.points.size();
  double d_r_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = first_cancel; i < pts.size(); ++i) d_r_min = std::min(d_r_min, pts[i].d_r);
  constexpr double kMinStartGap = 1e-7;
  if (d_r_min + c_start(1) * kD0Scale < kMinStartGap) {
    c_start(1) = (kMinStartGap - d_r_min) / kD0Scale;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = first_cancel; i < pts.size(); ++i) {
    const P& q = pts[i];
    const double d = q.d_r + c_start(1) * kD0Scale;
    const double vr = q.v_c - c_start(3) * kV0Scale;
    const double res = q.y + c_start(0) + c_start(2) * kCelScale * vr * vr / (d * d * d) -
                       cal.drift_rate * q.t;
    const double x = -kCcasScale / std::pow(d, 5);
    const double w = 1.0 / (q.sigma * q.sigma);
    num += w * x * res;
    den += w * x * x;
  }
  const double c_cas0 = den > 0.0 ? num / den : 1.0;
  const auto m = static_cast<Eigen::Index>(pts.size());
  const Eigen::Index np = options.fit_drift ? 6 : 5;

  ModelFunction model;
  model.parameter_count = static_cast<std::size_t>(np);
  model.residual_count = pts.size();
  model.parameter_names = {"offset", "d0", "c_el", "v0", "c_cas"};
  if (options.fit_drift) model.parameter_names.push_back("drift_rate");
  model.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double rate = options.fit_drift ? p(5) * kRateScale : 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const P& q = pts[static_cast<std::size_t>(i)];
      const double d = q.d_r + p(1) * kD0Scale;
      if (!(d > 0.0)) throw ContactError("gap became non-positive");
      const double d2 = d * d;
      const double vr = q.v_c - p(3) * kV0Scale;
      const double model_y = -p(0) - p(2) * kCelScale * vr * vr / (d2 * d) -
                             p(4) * kCcasScale / (d2 * d2 * d) + rate * q.t;
      r(i) = (q.y - model_y) / q.sigma;
    }
  };
  model.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const P& q = pts[static_cast<std::size_t>(i)];
      const double d = q.d_r + p(1) * kD0Scale;
      const double d2 = d * d;
      const double d3 = d2 * d;
      const double vr = q.v_c - p(3) * kV0Scale;
      const double c_el = p(2) * kCelScale;
      const double c_cas = p(4) * kCcasScale;
      const double w = -1.0 / q.sigma;  // r = (y - model) / sigma
      jac(i, 0) = -1.0 * w;
      jac(i, 1) = (3.0 * c_el * vr * vr / (d3 * d) + 5.0 * c_cas / (d3 * d3)) * kD0Scale * w;
      jac(i, 2) = -vr * vr / d3 * kCelScale * w;
      jac(i, 3) = 2.0 * c_el * vr / d3 * kV0Scale * w;
      jac(i, 4) = -1.0 / (d3 * d2) * kCcasScale * w;
      if (options.fit_drift) jac(i, 5) = q.t * kRateScale * w;
    }
  };

  Eigen::VectorXd start(np);
  start.head<4>() = c_start;
  start(4) = c_cas0;
  if (options.fit_drift) start(5) = cal.drift_rate / kRateScale;

  DriftFit out;
  out.drift_fitted = options.fit_drift;
  out.fit = lm_fit(model, start, options.lm);
  require_converged(out.fit, options.fit_drift ? "drift fit" : "drift-free global fit");
  const Eigen::VectorXd& p = out.fit.parameters;
  const Eigen::Vector4d scales = detail::calibration_scales();
  out.calibration = CalibrationParams::from_vector(
      p.head<4>().cwiseProduct(scales),
      scales.asDiagonal() * out.fit.covariance.topLeftCorner<4, 4>() * scales.asDiagonal());

  CasimirParams& c = out.casimir;
  c.c_cas = p(4) * kCcasScale;
  c.sigma_c_cas = out.fit.sigma(4) * kCcasScale;
  c.c_el_used = out.calibration.c_el;
  c.sigma_c_el_used = out.calibration.sigma(2);
  c.cov_ccas_cel = out.fit.covariance(4, 2) * kCcasScale * kCelScale;
  c.k_c = kc_from_coefficients(c.c_cas, c.c_el_used);
  c.sigma_k_c = kc_sigma(c.c_cas, c.c_el_used, c.sigma_c_cas * c.sigma_c_cas,
                         c.sigma_c_el_used * c.sigma_c_el_used, c.cov_ccas_cel);
  if (options.fit_drift) {
    out.drift_rate = p(5) * kRateScale;
    out.sigma_drift_rate = out.fit.sigma(5) * kRateScale;
  }
  c.drift_rate = out.drift_rate;
  return out;
}

}  // namespace casimir
