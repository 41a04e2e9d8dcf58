#pragma once

// Fit models of the measurement: Lorentzian line fits, the global
// electrostatic calibration, electrostatic subtraction, and the Casimir,
// free-exponent, wedge and drift-augmented fits built on lm_fit.

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "casimir/least_squares.hpp"
#include "casimir/physics.hpp"
#include "casimir/simulator.hpp"

namespace casimir {

// ---------------------------------------------------------------- Lorentzian

struct LorentzianParams {
  double center = 0.0;     // Hz
  double linewidth = 0.0;  // Hz, full width at half maximum
  double amplitude = 0.0;  // V^2 / Hz above baseline
  double baseline = 0.0;   // V^2 / Hz
  double sigma_center = 0.0;  // Hz, fit error with the statistical floor in quadrature
};

struct LorentzianFit {
  LorentzianParams params;
  FitResult fit;  // parameters: center - start, linewidth, amplitude, baseline
};

/// Unweighted fit; the covariance is rescaled by chi2/dof. Throws
/// DetectionError when peak / median power < 3.
LorentzianFit fit_lorentzian(const SpectrumRecord& spectrum,
                             double stat_floor = published::kFrequencyStatSigma,
                             const LmOptions& lm = {});

// --------------------------------------------------------------- calibration

struct CalibrationOptions {
  bool per_run_offset = false;
  // Adds one shared linear-in-time shift drift (timestamps local to each run).
  bool fit_drift = false;
  // Contact-potential starting value; unset means the linear pre-fit value.
  std::optional<double> v0_initial;
  LmOptions lm;
};

struct CalibrationFit {
  CalibrationParams params;
  FitResult fit;  // scaled parameters: offsets [Hz^2], d0 [1e-7 m], C_el [1e-13], V0 [mV]
  std::vector<double> run_offsets;  // one per run in per-run mode, else one entry
  double drift_rate = 0.0;          // Hz^2 / s, zero unless fitted
};

/// Global fit of -offset - C_el (V_c - V0)^2 / (d_r + d0)^3 over at least
/// three runs at pairwise distinct bias. Throws IdentifiabilityError on
/// degenerate bias sets and DataError on runs with fewer than 4 points.
CalibrationFit fit_calibration_global(const std::vector<MeasurementRun>& runs,
                                      const ApparatusConfig& nominal,
                                      const CalibrationOptions& options = {});

// ------------------------------------------------------ residual Casimir data

struct ResidualPoint {
  double v_pzt = 0.0;
  double v_c = 0.0;
  double t = 0.0;
  double delta_nu2 = 0.0;  // measured
  double d_r = 0.0;        // relative displacement
  double d = 0.0;          // d_r + d0
  double residual = 0.0;   // measured minus the fitted electrostatic model
  double sigma_stat = 0.0;
  double sigma_y = 0.0;    // statistical and calibration terms in quadrature
  double sigma_d = 0.0;
  Eigen::Vector4d gradient = Eigen::Vector4d::Zero();  // d residual / d calibration
};

// Points are sorted by ascending gap.
struct ResidualRun {
  std::vector<ResidualPoint> points;
  CalibrationParams calibration;
  std::string label;
};

ResidualRun subtract_electrostatic(const MeasurementRun& run, const CalibrationParams& cal,
                                   const ApparatusConfig& nominal);

// How the calibration uncertainty enters the fits of residual data.
enum class ErrorTreatment {
  // Calibration parameters refitted as nuisances under their Gaussian prior.
  kJointCalibration,
  // Diagonal per-point effective variance, distance error folded in by the
  // model slope.
  kEffectiveVariance,
};

enum class PointSelection { kFixed, kMaxProbability };

struct CasimirFitOptions {
  int n_points = published::kCasimirPointCount;
  PointSelection selection = PointSelection::kFixed;
  ErrorTreatment treatment = ErrorTreatment::kJointCalibration;
  int scan_min = 5;
  LmOptions lm;
};

struct SelectionEntry {
  int n = 0;
  double c_cas = 0.0;
  double sigma_c_cas = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  double chi2_probability = 0.0;
  bool ok = false;
};

struct CasimirFit {
  CasimirParams params;
  FitResult fit;
  int n_used = 0;
  bool sign_anomaly = false;  // C_Cas <= 0: force not attractive
  std::vector<SelectionEntry> scan;
};

/// Fit -C_Cas / d^5 over the n smallest gaps and derive K_C.
CasimirFit fit_casimir(const ResidualRun& residuals, const CasimirFitOptions& options = {});

struct ExponentFit {
  double exponent = 0.0;
  double sigma_exponent = 0.0;
  double amplitude = 0.0;  // Hz^2, magnitude of the shift at d_ref
  double sigma_amplitude = 0.0;
  double reference_gap = 1e-6;  // m
  FitResult fit;
};

/// Fit -B (d_ref / d)^n over the n_points smallest gaps.
ExponentFit fit_free_exponent(const ResidualRun& residuals, int n_points,
                              ErrorTreatment treatment = ErrorTreatment::kJointCalibration,
                              const LmOptions& lm = {});

struct WedgeFit {
  // q = (theta W)^2 is the fitted quantity; negative values are the analytic
  // continuation of the closed form.
  double excursion_sq = 0.0;        // m^2
  double sigma_excursion_sq = 0.0;  // m^2
  double deviation = 0.0;           // m, sqrt(max(q, 0))
  double sigma_deviation = 0.0;     // m, sqrt(sigma_q): resolution at q = 0
  double c_cas = 0.0;
  double sigma_c_cas = 0.0;
  FitResult fit;
};

WedgeFit fit_wedge_deviation(const ResidualRun& residuals, int n_points,
                             ErrorTreatment treatment = ErrorTreatment::kJointCalibration,
                             const LmOptions& lm = {});

struct DriftFitOptions {
  bool fit_drift = true;
  LmOptions lm;
};

struct DriftFit {
  CalibrationParams calibration;
  CasimirParams casimir;
  double drift_rate = 0.0;  // Hz^2 / s
  double sigma_drift_rate = 0.0;
  bool drift_fitted = true;
  FitResult fit;  // scaled: offset, d0, C_el, V0, C_Cas [1e-28], rate [Hz^2 / ks]
};

/// Global fit over the calibration runs and the cancellation run with the
/// Casimir term on every point and one shared linear-in-time shift drift.
/// Throws ConfigError when a run lacks timestamps.
DriftFit fit_with_drift(const std::vector<MeasurementRun>& calibration_runs,
                        const MeasurementRun& cancellation_run, const ApparatusConfig& nominal,
                        const DriftFitOptions& options = {});

/// sigma of K_C = (eps0/4) C_Cas / C_el given the joint second moments.
double kc_sigma(double c_cas, double c_el, double var_c_cas, double var_c_el, double cov,
                const PhysicalConstants& k = {});

// ------------------------------------------------------------------- statics

struct ParabolaFit {
  double curvature = 0.0;  // V (interferometer) per V^2 of bias
  double v0 = 0.0;         // V
  double sigma_curvature = 0.0;
  double sigma_v0 = 0.0;
  FitResult fit;
};

/// Vertex fit of one alternation series. Each bias reading is referenced to
/// the mean of its neighbouring zero-bias readings, which leaves
/// K [(V - V0)^2 - V0^2]. Throws DataError on non-positive curvature.
ParabolaFit fit_deflection_parabola(const DeflectionSeries& series, double reading_sigma,
                                    const LmOptions& lm = {});

}  // namespace casimir
