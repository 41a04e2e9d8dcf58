// Acceptance run: one line per criterion, tolerances fixed below. Exits
// nonzero when any criterion fails.

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "casimir/estimation.hpp"
#include "casimir/io.hpp"
#include "casimir/least_squares.hpp"
#include "casimir/pipeline.hpp"
#include "casimir/simulator.hpp"

using namespace casimir;
namespace fs = std::filesystem;
namespace p = casimir::published;

namespace {

// Tolerances.
constexpr double kIdentityTol = 0.01;           // relative, K_C value
constexpr double kIdentitySigmaTol = 0.05;      // relative, K_C sigma
constexpr int kCalibrationSeeds = 300;
constexpr double kPullSdLo = 0.8;
constexpr double kPullSdHi = 1.2;
constexpr double kWithinPublishedFraction = 0.68;
constexpr int kCasimirSeeds = 100;
constexpr double kCasimirWindow = 0.34e-28;     // Hz^2 m^5 around 2.34e-28
constexpr double kCasimirFraction = 0.95;
constexpr double kKcPrecision = 0.15;           // relative
constexpr double kExponentWindow = 0.1;
constexpr double kApproxFactor = 2.0;           // "approximately": within a factor of 2
constexpr double kTiltBound = 3e-5;             // rad
constexpr int kLorentzianSeeds = 1000;
constexpr double kLorentzianTol = 0.30;
constexpr double kJacobianTol = 1e-5;
constexpr double kQuadratureTol = 1e-10;
constexpr int kKsSeeds = 300;
constexpr double kKsAlpha = 0.01;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("[%s] %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double fraction(const std::vector<double>& v, const std::function<bool(double)>& pred) {
  return static_cast<double>(std::count_if(v.begin(), v.end(), pred)) / static_cast<double>(v.size());
}

// One-sample KS test against U(0, 1); asymptotic Kolmogorov tail with the
// small-sample correction of Stephens.
double ks_uniform_p(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - u[i], u[i] - static_cast<double>(i) / n});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    q += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

// ---------------------------------------------------------------- campaigns

struct CampaignSample {
  CalibrationParams calibration;
  double calibration_p = 0.0;
  CasimirParams casimir;
  double casimir_p = 0.0;
  double exponent = 0.0;
  double sigma_exponent = 0.0;
  double wedge_q = 0.0;
  double wedge_sigma_q = 0.0;
  double wedge_sigma_deviation = 0.0;
  CasimirParams drift;
  double drift_p = 0.0;
  bool ok = false;
};

std::vector<CampaignSample> run_campaigns(int seeds) {
  std::vector<CampaignSample> out;
  for (int s = 1; s <= seeds; ++s) {
    const CampaignReport r = reproduce_published(static_cast<std::uint64_t>(s));
    CampaignSample c;
    c.ok = r.all_ok() && r.extraction && r.extraction->exponent && r.extraction->wedge &&
           r.extraction->drift;
    if (c.ok) {
      const ExtractionResult& e = *r.extraction;
      c.calibration = e.calibration.params;
      c.calibration_p = e.calibration.fit.chi2_probability;
      c.casimir = e.casimir.params;
      c.casimir_p = e.casimir.fit.chi2_probability;
      c.exponent = e.exponent->exponent;
      c.sigma_exponent = e.exponent->sigma_exponent;
      c.wedge_q = e.wedge->excursion_sq;
      c.wedge_sigma_q = e.wedge->sigma_excursion_sq;
      c.wedge_sigma_deviation = e.wedge->sigma_deviation;
      c.drift = e.drift->casimir;
      c.drift_p = e.drift->fit.chi2_probability;
    }
    out.push_back(c);
  }
  return out;
}

int count_ok(const std::vector<CampaignSample>& v) {
  return static_cast<int>(std::count_if(v.begin(), v.end(), [](const CampaignSample& c) { return c.ok; }));
}

// ----------------------------------------------------------------- criteria

void check_identity() {
  const double k = kc_from_coefficients(p::kCasimirShiftCoefficient, p::kElectrostaticCoefficient);
  const double s = kc_sigma(p::kCasimirShiftCoefficient, p::kElectrostaticCoefficient,
                            std::pow(p::kCasimirShiftCoefficientSigma, 2),
                            std::pow(p::kElectrostaticCoefficientSigma, 2), 0.0);
  const double ek = std::abs(k / p::kCasimirCoefficient - 1.0);
  const double es = std::abs(s / p::kCasimirCoefficientSigma - 1.0);
  report(ek <= kIdentityTol && es <= kIdentitySigmaTol, "kc-identity",
         fmt("K_C = %.4e (rel err %.2e, tol %.0e), sigma = %.4e (rel err %.2e, tol %.0e)", k, ek,
             kIdentityTol, s, es, kIdentitySigmaTol));
}

void check_calibration(const std::vector<CampaignSample>& runs, const ApparatusConfig& truth) {
  const double truths[4] = {truth.shift_offset_true, truth.distance_correction_true,
                            truth.electrostatic_coefficient(), truth.offset_voltage_true};
  const double published_sigma[4] = {p::kShiftOffsetSigma, p::kDistanceCorrectionSigma,
                                     p::kElectrostaticCoefficientSigma, p::kDynamicOffsetVoltageSigma};
  const char* names[4] = {"offset", "d0", "c_el", "v0"};
  bool ok = count_ok(runs) == static_cast<int>(runs.size());
  std::string detail = fmt("%d/%zu campaigns ok;", count_ok(runs), runs.size());
  for (int i = 0; i < 4; ++i) {
    std::vector<double> est, pull, sig;
    for (const CampaignSample& c : runs) {
      if (!c.ok) continue;
      const double v = c.calibration.vector()(i);
      est.push_back(v);
      sig.push_back(c.calibration.sigma(i));
      pull.push_back((v - truths[i]) / c.calibration.sigma(i));
    }
    const double psd = sd(pull);
    const double bias = std::abs(mean(est) - truths[i]) / published_sigma[i];
    const double within =
        fraction(est, [&](double v) { return std::abs(v - truths[i]) <= published_sigma[i]; });
    const bool this_ok = psd >= kPullSdLo && psd <= kPullSdHi && bias <= 1.0 &&
                         within >= kWithinPublishedFraction && median(sig) <= published_sigma[i];
    ok = ok && this_ok;
    detail += fmt(" %s: pull sd %.2f, |bias| %.2f sig_pub, %.0f%% within sig_pub, sig/sig_pub %.2f;",
                  names[i], psd, bias, 100 * within, median(sig) / published_sigma[i]);
  }
  detail += fmt(" (pull sd in [%.1f, %.1f], >= %.0f%% within, sigma <= published)", kPullSdLo, kPullSdHi,
                100 * kWithinPublishedFraction);
  report(ok, "calibration-round-trip", detail);
}

void check_casimir(const std::vector<CampaignSample>& runs, const ApparatusConfig& truth) {
  std::vector<double> c_cas, k_rel, prec, pull;
  for (const CampaignSample& c : runs) {
    if (!c.ok) continue;
    c_cas.push_back(c.casimir.c_cas);
    k_rel.push_back(c.casimir.k_c / truth.casimir_coefficient_true - 1.0);
    prec.push_back(c.casimir.sigma_k_c / c.casimir.k_c);
    pull.push_back((c.casimir.k_c - truth.casimir_coefficient_true) / c.casimir.sigma_k_c);
  }
  const double in_window = fraction(c_cas, [](double v) {
    return std::abs(v - p::kCasimirShiftCoefficient) <= kCasimirWindow;
  });
  const double k_within = fraction(k_rel, [](double v) { return std::abs(v) <= kKcPrecision; });
  const double precision = median(prec);
  const bool ok = count_ok(runs) == static_cast<int>(runs.size()) && in_window >= kCasimirFraction &&
                  k_within >= kCasimirFraction && precision <= kKcPrecision;
  report(ok, "casimir-round-trip",
         fmt("%d seeds: C_Cas mean %.4e sd %.2e, %.0f%% within +-%.2e; K_C %.0f%% within %.0f%%, "
             "sigma_K/K %.2f%% (<= %.0f%%), K_C pull sd %.2f",
             count_ok(runs), mean(c_cas), sd(c_cas), 100 * in_window, kCasimirWindow, 100 * k_within,
             100 * kKcPrecision, 100 * precision, 100 * kKcPrecision, sd(pull)));
}

void check_exponent(const std::vector<CampaignSample>& runs) {
  std::vector<double> n, s, pull;
  for (const CampaignSample& c : runs) {
    if (!c.ok) continue;
    n.push_back(c.exponent);
    s.push_back(c.sigma_exponent);
    pull.push_back((c.exponent - p::kExponent) / c.sigma_exponent);
  }
  const double m = mean(n);
  const double psd = sd(pull);
  const bool ok = std::abs(m - p::kExponent) <= kExponentWindow && median(s) <= p::kExponentSigma &&
                  psd >= kPullSdLo && psd <= kPullSdHi;
  report(ok, "exponent",
         fmt("mean n %.3f (|n-5| <= %.1f), median sigma %.3f (<= %.1f), pull sd %.2f", m, kExponentWindow,
             median(s), p::kExponentSigma, psd));
}

void check_drift(const std::vector<CampaignSample>& runs, const ApparatusConfig& truth) {
  std::vector<double> k, s;
  for (const CampaignSample& c : runs) {
    if (!c.ok) continue;
    k.push_back(c.drift.k_c);
    s.push_back(c.drift.sigma_k_c);
  }
  const double sigma = median(s);
  const double lo = p::kDriftCasimirCoefficientSigma / kApproxFactor;
  const double hi = p::kDriftCasimirCoefficientSigma * kApproxFactor;
  const double z = (mean(k) - p::kDriftCasimirCoefficient) /
                   std::hypot(sigma, p::kDriftCasimirCoefficientSigma);
  const bool ok = sigma >= lo && sigma <= hi && std::abs(z) < 3.0;
  report(ok, "drift-variant",
         fmt("K_C mean %.4e (truth %.4e), median sigma %.3e (want [%.2e, %.2e]), z vs published %.2f",
             mean(k), truth.casimir_coefficient_true, sigma, lo, hi, z));
}

void check_parallelization(const std::vector<CampaignSample>& runs) {
  const CampaignConfig c = default_campaign();
  const ParallelizationResult r = stage_parallelize(c);
  const bool geometry = c.apparatus.bridge_resolution == p::kBridgeResolution &&
                        c.parallelization.min_gap == 0.4e-6 && c.parallelization.quantized;
  report(geometry && !r.aborted && r.residual_tilt <= kTiltBound, "parallelization",
         fmt("residual tilt %.2e rad (<= %.0e), %zu accepted steps, quantum %.1e F", r.residual_tilt,
             kTiltBound, r.trace.size(), c.apparatus.bridge_resolution));

  std::vector<double> q, sq, sdev;
  for (const CampaignSample& s : runs) {
    if (!s.ok) continue;
    q.push_back(s.wedge_q);
    sq.push_back(s.wedge_sigma_q);
    sdev.push_back(s.wedge_sigma_deviation);
  }
  // Flat truth: q centred on zero, resolution near the published 30 nm.
  const double z = mean(q) / (sd(q) / std::sqrt(static_cast<double>(q.size())));
  const double res = median(sdev);
  const double lo = p::kWedgeDeviationSigma / kApproxFactor;
  const double hi = p::kWedgeDeviationSigma * kApproxFactor;
  report(std::abs(z) < 3.0 && res >= lo && res <= hi, "wedge-flat-truth",
         fmt("mean q %.2e m^2 (z %.2f), scatter of sqrt|q| %.1f nm, resolution %.1f nm (want [%.0f, %.0f] nm)",
             mean(q), z, 1e9 * std::sqrt(sd(q)), 1e9 * res, 1e9 * lo, 1e9 * hi));
}

void check_lorentzian() {
  const ApparatusConfig cfg = default_apparatus();
  std::vector<double> err;
  double min_sigma = std::numeric_limits<double>::infinity();
  int failed = 0;
  for (int s = 1; s <= kLorentzianSeeds; ++s) {
    NoiseConfig n;
    n.rng_seed = static_cast<std::uint64_t>(s);
    const SpectrumRecord rec = synthesize_spectrum(cfg.free_frequency, cfg.linewidth(), n, 0.0);
    try {
      const LorentzianFit f = fit_lorentzian(rec);
      err.push_back(f.params.center - cfg.free_frequency);
      min_sigma = std::min(min_sigma, f.params.sigma_center);
    } catch (const std::exception&) {
      ++failed;
    }
  }
  const double scatter = sd(err);
  const bool ok = failed == 0 && std::abs(scatter / p::kFrequencyStatSigma - 1.0) <= kLorentzianTol &&
                  min_sigma >= p::kFrequencyStatSigma;
  report(ok, "lorentzian",
         fmt("%d seeds, %d failed; centre scatter %.2f mHz (7 mHz +-%.0f%%), smallest sigma %.3f mHz",
             kLorentzianSeeds, failed, 1e3 * scatter, 100 * kLorentzianTol, 1e3 * min_sigma));
}

// ------------------------------------------------------------------ oracles

struct PowerLaw {
  std::vector<double> x, y, s;
};

ModelFunction power_law_model(const PowerLaw& d) {
  ModelFunction m;
  m.parameter_count = 3;
  m.residual_count = d.x.size();
  m.residuals = [&d](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < d.x.size(); ++i)
      r(static_cast<Eigen::Index>(i)) = (d.y[i] - (q(0) * std::pow(d.x[i], -q(1)) + q(2))) / d.s[i];
  };
  m.jacobian = [&d](const Eigen::VectorXd& q, Eigen::MatrixXd& j) {
    for (std::size_t i = 0; i < d.x.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double xn = std::pow(d.x[i], -q(1));
      j(k, 0) = -xn / d.s[i];
      j(k, 1) = q(0) * xn * std::log(d.x[i]) / d.s[i];
      j(k, 2) = -1.0 / d.s[i];
    }
  };
  return m;
}

// Worst grid-vs-LM discrepancy in units of the grid cell.
bool grid_oracle(std::string& detail) {
  double worst_cells = 0.0;
  bool ok = true;
  for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    PowerLaw d;
    for (int i = 0; i < 20; ++i) {
      const double x = 0.5 + 0.1 * i;
      const double y = 2.0 * std::pow(x, -3.0) + 0.5;
      const double s = 0.01 * std::abs(y) + 0.01;
      d.x.push_back(x);
      d.y.push_back(y + s * g(rng));
      d.s.push_back(s);
    }
    const ModelFunction m = power_law_model(d);
    Eigen::VectorXd start(3);
    start << 1.0, 2.0, 0.0;
    const FitResult f = lm_fit(m, start);
    const int n = 60;
    Eigen::Vector3d step, lo;
    for (int i = 0; i < 3; ++i) {
      step(i) = 8.0 * f.sigma(i) / n;
      lo(i) = f.parameters(i) - 4.0 * f.sigma(i) + 0.37 * step(i);  // off-centre grid
    }
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd arg(3), q(3), r(20);
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j)
        for (int k = 0; k <= n; ++k) {
          q << lo(0) + i * step(0), lo(1) + j * step(1), lo(2) + k * step(2);
          m.residuals(q, r);
          if (r.squaredNorm() < best) {
            best = r.squaredNorm();
            arg = q;
          }
        }
    ok = ok && f.converged && f.chi2 <= best + 1e-9;
    for (int i = 0; i < 3; ++i) worst_cells = std::max(worst_cells, std::abs(arg(i) - f.parameters(i)) / step(i));
  }
  ok = ok && worst_cells <= 1.0;
  detail += fmt("grid: LM chi2 <= best node, worst offset %.2f cells (<= 1);", worst_cells);
  return ok;
}

double relative_jacobian_error(const ModelFunction& m, const Eigen::VectorXd& q) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(m.residual_count), static_cast<Eigen::Index>(m.parameter_count));
  m.jacobian(q, a);
  const Eigen::MatrixXd n = numeric_jacobian(m, q);
  return (a - n).norm() / a.norm();
}

LmOptions probe(double& worst, int& count) {
  LmOptions lm;
  lm.on_start = [&worst, &count](const ModelFunction& m, const Eigen::VectorXd& start) {
    if (!m.jacobian) {
      worst = std::numeric_limits<double>::infinity();
      return;
    }
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (int i = 0; i < 20; ++i) {
      Eigen::VectorXd q = start;
      for (Eigen::Index k = 0; k < q.size(); ++k) q(k) += u(rng) * std::max(std::abs(q(k)), 1.0);
      worst = std::max(worst, relative_jacobian_error(m, q));
      ++count;
    }
  };
  return lm;
}

bool jacobian_oracle(std::string& detail) {
  const CampaignConfig c = default_campaign();
  double worst = 0.0;
  int count = 0;
  int models = 0;

  NoiseConfig n;
  n.rng_seed = 5;
  fit_lorentzian(synthesize_spectrum(c.apparatus.free_frequency, c.apparatus.linewidth(), n, 0.0),
                 p::kFrequencyStatSigma, probe(worst, count));
  ++models;

  const DeflectionSweep sweep = run_deflection_sweep(c.apparatus, {4e-6}, c.deflection.biases, n);
  fit_deflection_parabola(sweep.series[0], c.noise.deflection_reading_sigma, probe(worst, count));
  ++models;

  const std::vector<MeasurementRun> cal = simulate_calibration_runs(c, 5);
  CalibrationOptions co;
  co.lm = probe(worst, count);
  const CalibrationFit cf = fit_calibration_global(cal, c.apparatus, co);
  co.per_run_offset = true;
  fit_calibration_global(cal, c.apparatus, co);
  models += 2;

  const MeasurementRun canc = simulate_cancellation_run(c, c.listed_cancellation_bias(), 5);
  const ResidualRun res = subtract_electrostatic(canc, cf.params, c.apparatus);
  for (ErrorTreatment t : {ErrorTreatment::kJointCalibration, ErrorTreatment::kEffectiveVariance}) {
    CasimirFitOptions o;
    o.treatment = t;
    o.lm = probe(worst, count);
    fit_casimir(res, o);
    fit_free_exponent(res, p::kCasimirPointCount, t, probe(worst, count));
    fit_wedge_deviation(res, p::kCasimirPointCount, t, probe(worst, count));
    models += 3;
  }

  const std::vector<MeasurementRun> drift = simulate_drift_campaign(c, c.listed_cancellation_bias(), 5);
  DriftFitOptions d;
  d.lm = probe(worst, count);
  fit_with_drift({drift.begin(), drift.end() - 1}, drift.back(), c.apparatus, d);
  ++models;

  detail += fmt(" Jacobians: %d models, %d probes, worst rel err %.1e (<= %.0e);", models, count, worst,
                kJacobianTol);
  return worst <= kJacobianTol;
}

bool quadrature_oracle(std::string& detail) {
  using boost::math::quadrature::gauss_kronrod;
  const double c_cas = p::kCasimirShiftCoefficient;
  double worst = 0.0;
  for (double d : {0.5e-6, 0.7e-6, 1.1e-6, 3e-6}) {
    for (double e : {1e-9, 30e-9, 100e-9, 300e-9}) {
      // Shift averaged across the wedge width.
      const double direct = wedge_averaged_shift_excursion(d, e, c_cas);
      const double quad =
          gauss_kronrod<double, 61>::integrate([&](double x) { return -c_cas / std::pow(x, 5); },
                                               d - e / 2, d + e / 2, 15, 1e-14) /
          e;
      worst = std::max(worst, std::abs(direct / quad - 1.0));

      // Capacitance of the same wedge.
      WedgeGeometry g;
      g.tilt = e / g.width;
      const double cap = tilt_capacitance(d, g);
      const double eps0 = PhysicalConstants{}.epsilon0;
      const double cquad = gauss_kronrod<double, 61>::integrate(
          [&](double x) { return eps0 * g.length / (d + g.tilt * x); }, -g.width / 2, g.width / 2, 15, 1e-14);
      worst = std::max(worst, std::abs(cap / cquad - 1.0));
    }
  }
  detail += fmt(" quadrature: worst rel err %.1e (<= %.0e)", worst, kQuadratureTol);
  return worst <= kQuadratureTol;
}

void check_oracles() {
  std::string detail;
  bool ok = grid_oracle(detail);
  ok = jacobian_oracle(detail) && ok;
  ok = quadrature_oracle(detail) && ok;
  report(ok, "oracle-equivalence", detail);
}

void check_chi2(const std::vector<CampaignSample>& runs) {
  // Casimir-free campaign: the calibration model is exact.
  CampaignConfig free = default_campaign();
  free.apparatus.casimir_coefficient_true = 0.0;
  std::vector<double> p_free;
  for (int s = 1; s <= kKsSeeds; ++s) {
    const std::vector<MeasurementRun> cal = simulate_calibration_runs(free, static_cast<std::uint64_t>(s));
    p_free.push_back(fit_calibration_global(cal, free.apparatus).fit.chi2_probability);
  }
  std::vector<double> p_cal, p_cas, p_drift;
  for (const CampaignSample& c : runs) {
    if (!c.ok) continue;
    p_cal.push_back(c.calibration_p);
    p_cas.push_back(c.casimir_p);
    p_drift.push_back(c.drift_p);
  }
  const double a = ks_uniform_p(p_free), b = ks_uniform_p(p_cal), c = ks_uniform_p(p_cas),
               d = ks_uniform_p(p_drift);
  const bool ok = p_cal.size() >= static_cast<std::size_t>(kKsSeeds) && a > kKsAlpha && b > kKsAlpha &&
                  c > kKsAlpha && d > kKsAlpha;
  report(ok, "chi2-probability-uniform",
         fmt("KS p over %d seeds (> %.2f): calibration without Casimir %.3f, campaign calibration %.3f, "
             "Casimir %.3f, drift %.3f",
             kKsSeeds, kKsAlpha, a, b, c, d));
}

std::string slurp(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_determinism() {
  const std::string a = report_to_json(reproduce_published(1)).dump();
  const std::string b = report_to_json(reproduce_published(1)).dump();
  const std::string other = report_to_json(reproduce_published(2)).dump();

  const fs::path root = fs::temp_directory_path() / "casimir_acceptance_determinism";
  fs::remove_all(root);
  write_campaign_outputs(root / "a", reproduce_published(1));
  write_campaign_outputs(root / "b", reproduce_published(1));
  int files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    if (slurp(e.path()) != slurp(root / "b" / fs::relative(e.path(), root / "a"))) ++differing;
  }
  fs::remove_all(root);
  report(a == b && a != other && files > 0 && differing == 0, "determinism",
         fmt("report JSON identical for seed 1 (%zu bytes), differs for seed 2; %d/%d output files identical",
             a.size(), files - differing, files));
}

}  // namespace

int main() {
  const ApparatusConfig truth = default_apparatus();
  check_identity();
  const std::vector<CampaignSample> campaigns = run_campaigns(kCalibrationSeeds);
  check_calibration(campaigns, truth);
  check_casimir({campaigns.begin(), campaigns.begin() + kCasimirSeeds}, truth);
  check_exponent(campaigns);
  check_drift(campaigns, truth);
  check_parallelization(campaigns);
  check_lorentzian();
  check_oracles();
  check_chi2(campaigns);
  check_determinism();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
