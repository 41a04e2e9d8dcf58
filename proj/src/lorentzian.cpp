#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "casimir/errors.hpp"
#include "casimir/estimation.hpp"

namespace casimir {

namespace {

constexpr double kDetectionRatio = 3.0;

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

}  // namespace

LorentzianFit fit_lorentzian(const SpectrumRecord& spectrum, double stat_floor,
                             const LmOptions& lm) {
  const auto& f = spectrum.frequencies;
  const auto& y = spectrum.power;
  if (f.size() != y.size() || f.size() < 8) {
    throw DataError("spectrum needs at least 8 matching frequency/power bins");
  }
  const auto peak_it = std::max_element(y.begin(), y.end());
  const double peak = *peak_it;
  const double base = median_of(y);
  if (!(peak > 0.0) || !(base >= 0.0) || (base > 0.0 && peak / base < kDetectionRatio)) {
    throw DetectionError("no resolvable resonance: peak / median power below 3");
  }

  const double scale = peak;
  const double bin = spectrum.bin_width > 0.0 ? spectrum.bin_width : f[1] - f[0];
  // Start from the peak of a 3-bin running mean so a single noise spike
  // does not capture the fit.
  std::size_t i_peak = 0;
  double smooth_peak = -1.0;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    const double s = (y[i - 1] + y[i] + y[i + 1]) / 3.0;
    if (s > smooth_peak) {
      smooth_peak = s;
      i_peak = i;
    }
  }
  const double c0 = f[i_peak];
  const double half_level = base + (smooth_peak - base) / 2.0;
  const auto above = std::count_if(y.begin(), y.end(), [&](double v) { return v > half_level; });
  const double gamma0 = std::max(3.0, static_cast<double>(above)) * bin;
  const double min_width = bin / 2.0;

  const std::size_t m = f.size();
  ModelFunction model;
  model.parameter_count = 4;
  model.residual_count = m;
  model.parameter_names = {"center_shift", "linewidth", "amplitude", "baseline"};
  model.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double h = p(1) / 2.0;
    // Lines narrower than a bin are not resolvable by the analyzer.
    if (!(p(1) > min_width)) throw DomainError("linewidth below the bin resolution");
    for (std::size_t i = 0; i < m; ++i) {
      const double u = f[i] - (c0 + p(0));
      const double line = h * h / (u * u + h * h);
      r(static_cast<Eigen::Index>(i)) = y[i] / scale - (p(2) * line + p(3));
    }
  };
  model.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    const double h = p(1) / 2.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double u = f[i] - (c0 + p(0));
      const double den = u * u + h * h;
      jac(row, 0) = -p(2) * h * h * 2.0 * u / (den * den);
      jac(row, 1) = -p(2) * h * u * u / (den * den);
      jac(row, 2) = -h * h / den;
      jac(row, 3) = -1.0;
    }
  };

  Eigen::VectorXd start(4);
  start << 0.0, gamma0, (smooth_peak - base) / scale, base / scale;
  LorentzianFit out;
  out.fit = lm_fit(model, start, lm);
  if (!out.fit.converged) throw ConvergenceError("Lorentzian fit did not converge");

  // Unit weights: the residual scatter sets the error scale.
  const double variance_scale = out.fit.chi2 / out.fit.dof;
  out.fit.covariance *= variance_scale;
  const Eigen::VectorXd& p = out.fit.parameters;
  out.params.center = c0 + p(0);
  out.params.linewidth = p(1);
  out.params.amplitude = p(2) * scale;
  out.params.baseline = p(3) * scale;
  const double fit_sigma = out.fit.sigma(0);
  out.params.sigma_center = std::sqrt(fit_sigma * fit_sigma + stat_floor * stat_floor);
  return out;
}

}  // namespace casimir
