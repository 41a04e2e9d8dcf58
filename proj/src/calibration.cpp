#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "casimir/errors.hpp"
#include "casimir/estimation.hpp"
#include "fit_scales.hpp"

namespace casimir {

namespace {

using detail::kCelScale;
using detail::kD0Scale;
using detail::kRateScale;
using detail::kV0Scale;

struct CalPoint {
  double d_r;
  double v_c;
  double t;
  double y;
  double sigma;
  int run;
};

std::vector<CalPoint> gather(const std::vector<MeasurementRun>& runs,
                             const ApparatusConfig& nominal) {
  std::vector<CalPoint> pts;
  for (std::size_t g = 0; g < runs.size(); ++g) {
    for (const RunPoint& p : runs[g].points) {
      if (!(p.sigma_delta_nu2 > 0.0)) {
        throw DataError("run '" + runs[g].label + "' has a non-positive sigma");
      }
      pts.push_back({relative_displacement(p.v_pzt, p.d_s, nominal), p.v_c, p.t, p.delta_nu2,
                     p.sigma_delta_nu2, static_cast<int>(g)});
    }
  }
  return pts;
}

void check_identifiable(const std::vector<MeasurementRun>& runs) {
  if (runs.size() < 3) {
    throw IdentifiabilityError("calibration needs at least three runs at distinct bias, got " +
                               std::to_string(runs.size()));
  }
  for (const auto& run : runs) {
    if (run.points.size() < 4) {
      throw DataError("run '" + run.label + "' has fewer than 4 points");
    }
    for (const auto& p : run.points) {
      if (p.v_c != run.points.front().v_c) {
        throw DataError("run '" + run.label + "' mixes bias voltages");
      }
    }
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = i + 1; j < runs.size(); ++j) {
      if (std::abs(runs[i].bias() - runs[j].bias()) < 1e-6) {
        throw IdentifiabilityError("calibration runs share the bias " +
                                   std::to_string(runs[i].bias() * 1e3) + " mV");
      }
    }
  }
}

}  // namespace

CalibrationFit fit_calibration_global(const std::vector<MeasurementRun>& runs,
                                      const ApparatusConfig& nominal,
                                      const CalibrationOptions& options) {
  check_identifiable(runs);
  const std::vector<CalPoint> pts = gather(runs, nominal);
  const int n_off = options.per_run_offset ? static_cast<int>(runs.size()) : 1;
  const auto m = static_cast<Eigen::Index>(pts.size());

  // Start: with d0 = 0 the model is linear in the expanded parabola
  // -off - (a V^2 + b V + c) / d^3, so C_el = a and V0 = -b / 2a.
  const int n_lin = n_off + 3 + (options.fit_drift ? 1 : 0);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m, n_lin);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const CalPoint& p = pts[static_cast<std::size_t>(i)];
    const double w = 1.0 / p.sigma;
    const double inv_d3 = 1.0 / (p.d_r * p.d_r * p.d_r);
    basis(i, options.per_run_offset ? p.run : 0) = -w;
    basis(i, n_off) = -p.v_c * p.v_c * inv_d3 * w;
    basis(i, n_off + 1) = -p.v_c * inv_d3 * w;
    basis(i, n_off + 2) = -inv_d3 * w;
    if (options.fit_drift) basis(i, n_off + 3) = p.t * kRateScale * w;
    rhs(i) = p.y * w;
  }
  const Eigen::VectorXd lin = basis.colPivHouseholderQr().solve(rhs);
  double c_el0 = lin(n_off);
  double v00 = c_el0 > 0.0 ? -lin(n_off + 1) / (2.0 * c_el0) : 0.0;
  if (!(c_el0 > 0.0) || !std::isfinite(c_el0)) c_el0 = published::kElectrostaticCoefficient;
  if (options.v0_initial) v00 = *options.v0_initial;

  const Eigen::Index np = n_off + 3 + (options.fit_drift ? 1 : 0);
  ModelFunction model;
  model.parameter_count = static_cast<std::size_t>(np);
  model.residual_count = pts.size();
  for (int g = 0; g < n_off; ++g) {
    model.parameter_names.push_back(n_off == 1 ? "offset" : "offset_" + std::to_string(g));
  }
  model.parameter_names.insert(model.parameter_names.end(), {"d0", "c_el", "v0"});
  if (options.fit_drift) model.parameter_names.push_back("drift_rate");
  model.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double d0 = p(n_off) * kD0Scale;
    const double c = p(n_off + 1) * kCelScale;
    const double v0 = p(n_off + 2) * kV0Scale;
    for (Eigen::Index i = 0; i < m; ++i) {
      const CalPoint& q = pts[static_cast<std::size_t>(i)];
      const double d = q.d_r + d0;
      if (!(d > 0.0)) throw ContactError("calibration gap became non-positive");
      const double vr = q.v_c - v0;
      const double off = p(options.per_run_offset ? q.run : 0);
      const double drift = options.fit_drift ? p(n_off + 3) * kRateScale * q.t : 0.0;
      r(i) = (q.y - (-off - c * vr * vr / (d * d * d) + drift)) / q.sigma;
    }
  };
  model.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    const double d0 = p(n_off) * kD0Scale;
    const double c = p(n_off + 1) * kCelScale;
    const double v0 = p(n_off + 2) * kV0Scale;
    jac.setZero();
    for (Eigen::Index i = 0; i < m; ++i) {
      const CalPoint& q = pts[static_cast<std::size_t>(i)];
      const double d = q.d_r + d0;
      const double d3 = d * d * d;
      const double vr = q.v_c - v0;
      const double w = 1.0 / q.sigma;
      jac(i, options.per_run_offset ? q.run : 0) = w;
      jac(i, n_off) = -3.0 * c * vr * vr / (d3 * d) * kD0Scale * w;
      jac(i, n_off + 1) = vr * vr / d3 * kCelScale * w;
      jac(i, n_off + 2) = -2.0 * c * vr / d3 * kV0Scale * w;
      if (options.fit_drift) jac(i, n_off + 3) = -q.t * kRateScale * w;
    }
  };

  Eigen::VectorXd start(np);
  for (int g = 0; g < n_off; ++g) start(g) = lin(g);
  start(n_off) = 0.0;
  start(n_off + 1) = c_el0 / kCelScale;
  start(n_off + 2) = v00 / kV0Scale;
  if (options.fit_drift) start(n_off + 3) = lin(n_off + 3);

  CalibrationFit out;
  out.fit = lm_fit(model, start, options.lm);
  if (!out.fit.converged) {
    throw ConvergenceError("calibration fit did not converge in " +
                           std::to_string(out.fit.iterations) + " iterations");
  }

  // Map to {offset, d0, C_el, V0}; per-run offsets collapse to their mean.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(4, np);
  for (int g = 0; g < n_off; ++g) t(0, g) = 1.0 / n_off;
  t(1, n_off) = kD0Scale;
  t(2, n_off + 1) = kCelScale;
  t(3, n_off + 2) = kV0Scale;
  const Eigen::Vector4d v = t * out.fit.parameters;
  const Eigen::Matrix4d cov = t * out.fit.covariance * t.transpose();
  out.params = CalibrationParams::from_vector(v, cov);
  for (int g = 0; g < n_off; ++g) out.run_offsets.push_back(out.fit.parameters(g));
  if (options.fit_drift) out.drift_rate = out.fit.parameters(n_off + 3) * kRateScale;
  return out;
}

ResidualRun subtract_electrostatic(const MeasurementRun& run, const CalibrationParams& cal,
                                   const ApparatusConfig& nominal) {
  ResidualRun out;
  out.calibration = cal;
  out.label = run.label;
  const double sigma_d = cal.sigma(1);
  for (const RunPoint& p : run.points) {
    ResidualPoint q;
    q.v_pzt = p.v_pzt;
    q.v_c = p.v_c;
    q.t = p.t;
    q.delta_nu2 = p.delta_nu2;
    q.d_r = relative_displacement(p.v_pzt, p.d_s, nominal);
    q.d = gap_distance(p.v_pzt, p.d_s, nominal, cal.d0);
    const double vr = p.v_c - cal.v0;
    const double d3 = q.d * q.d * q.d;
    q.residual = p.delta_nu2 - (-cal.delta_nu2_offset - cal.c_el * vr * vr / d3);
    q.gradient << 1.0, -3.0 * cal.c_el * vr * vr / (d3 * q.d), vr * vr / d3,
        -2.0 * cal.c_el * vr / d3;
    q.sigma_stat = p.sigma_delta_nu2;
    const double var_cal = q.gradient.dot(cal.covariance * q.gradient);
    q.sigma_y = std::sqrt(q.sigma_stat * q.sigma_stat + std::max(0.0, var_cal));
    q.sigma_d = sigma_d;
    out.points.push_back(q);
  }
  std::stable_sort(out.points.begin(), out.points.end(),
                   [](const ResidualPoint& a, const ResidualPoint& b) { return a.d < b.d; });
  return out;
}

ParabolaFit fit_deflection_parabola(const DeflectionSeries& series, double reading_sigma,
                                    const LmOptions& lm) {
  const auto& rd = series.readings;
  std::vector<double> v, delta;
  for (std::size_t i = 0; i < rd.size(); ++i) {
    if (rd[i].reference) continue;
    double sum = 0.0;
    int count = 0;
    if (i > 0 && rd[i - 1].reference) {
      sum += rd[i - 1].reading;
      ++count;
    }
    if (i + 1 < rd.size() && rd[i + 1].reference) {
      sum += rd[i + 1].reading;
      ++count;
    }
    if (count == 0) throw DataError("bias reading without a zero-bias reference");
    v.push_back(rd[i].v_c);
    delta.push_back(rd[i].reading - sum / count);
  }
  const auto m = static_cast<Eigen::Index>(v.size());
  if (m < 3) throw DataError("parabola fit needs at least 3 bias values");

  // Linear start: delta = a V^2 + b V with a = K, b = -2 K V0.
  Eigen::MatrixXd basis(m, 2);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    basis(i, 0) = v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    basis(i, 1) = v[static_cast<std::size_t>(i)];
    rhs(i) = delta[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector2d lin = basis.colPivHouseholderQr().solve(rhs);
  if (!(lin(0) > 0.0)) {
    throw DataError("deflection parabola has non-positive curvature at d = " +
                    std::to_string(series.distance) + " m");
  }
  const double k_scale = lin(0);
  const bool weighted = reading_sigma > 0.0;
  // Each difference carries the bias reading plus half of two references.
  const double w = weighted ? 1.0 / (reading_sigma * std::sqrt(1.5)) : 1.0;

  ModelFunction model;
  model.parameter_count = 2;
  model.residual_count = static_cast<std::size_t>(m);
  model.parameter_names = {"curvature", "v0"};
  model.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double k = p(0) * k_scale;
    const double v0 = p(1) * kV0Scale;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double x = v[static_cast<std::size_t>(i)];
      r(i) = (delta[static_cast<std::size_t>(i)] - k * (x * x - 2.0 * x * v0)) * w;
    }
  };
  model.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    const double k = p(0) * k_scale;
    const double v0 = p(1) * kV0Scale;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double x = v[static_cast<std::size_t>(i)];
      jac(i, 0) = -(x * x - 2.0 * x * v0) * k_scale * w;
      jac(i, 1) = 2.0 * k * x * kV0Scale * w;
    }
  };
  Eigen::VectorXd start(2);
  start << 1.0, -lin(1) / (2.0 * lin(0)) / kV0Scale;

  ParabolaFit out;
  out.fit = lm_fit(model, start, lm);
  if (!out.fit.converged) throw ConvergenceError("deflection parabola fit did not converge");
  if (!weighted) out.fit.covariance *= out.fit.chi2 / out.fit.dof;
  out.curvature = out.fit.parameters(0) * k_scale;
  out.v0 = out.fit.parameters(1) * kV0Scale;
  out.sigma_curvature = out.fit.sigma(0) * k_scale;
  out.sigma_v0 = out.fit.sigma(1) * kV0Scale;
  if (!(out.curvature > 0.0)) {
    throw DataError("deflection parabola has non-positive curvature at d = " +
                    std::to_string(series.distance) + " m");
  }
  return out;
}

}  // namespace casimir
