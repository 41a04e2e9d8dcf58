#pragma once

// End-to-end campaign: parallelization, offset voltage from statics,
// electrostatic calibration and Casimir extraction against the simulator.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "casimir/estimation.hpp"
#include "casimir/physics.hpp"
#include "casimir/simulator.hpp"

namespace casimir {

struct ScanRange {
  double d_max = 0.0;  // m, first (largest) true gap
  double d_min = 0.0;  // m
  int points = 0;
  double dwell = 0.0;  // s per point
};

struct ParallelizationConfig {
  double min_gap = 0.4e-6;        // m, closest approach during the search
  double start_tilt_1 = 4.37e-4;  // rad
  double start_tilt_2 = -2.91e-4; // rad
  double initial_step = 1e-4;     // rad
  double min_step = 1e-8;         // rad
  bool quantized = true;
};

struct DeflectionConfig {
  std::vector<double> distances{3e-6, 4e-6, 5e-6, 6e-6};  // m
  std::vector<double> biases{-0.26, -0.2, -0.14, -0.1, -0.02, 0.02, 0.08, 0.14};  // V
};

struct AnalysisConfig {
  int casimir_points = published::kCasimirPointCount;
  PointSelection selection = PointSelection::kFixed;
  ErrorTreatment treatment = ErrorTreatment::kJointCalibration;
  bool per_run_offset = false;
  // Passes of calibration refit with the fitted Casimir shift removed from the
  // calibration runs, each followed by a new extraction. Zero keeps the plain
  // sequential analysis, whose calibration absorbs the Casimir tail.
  int casimir_correction_passes = 2;
};

struct CampaignConfig {
  ApparatusConfig apparatus = default_apparatus();
  NoiseConfig noise;
  DriftConfig drift;
  // Exactly one entry lies within 15 mV of the true contact potential; that
  // one marks the cancellation run, the rest are calibration runs.
  std::vector<double> biases{-205.8e-3, -137.2e-3, 68.6e-3, -68.6e-3};  // V
  // Unset: the cancellation run uses the fitted static V0.
  std::optional<double> cancellation_bias;  // V
  ScanRange calibration_scan{10e-6, 3e-6, 40, 55.0};
  ScanRange cancellation_scan{3e-6, 0.5e-6, 34, 60.0};
  double drift_variant_span = published::kDriftSpan;  // Hz^2 over the cancellation run
  DeflectionConfig deflection;
  ParallelizationConfig parallelization;
  AnalysisConfig analysis;
  std::vector<std::uint64_t> seeds{1};

  void validate() const;
  std::vector<double> calibration_biases() const;
  double listed_cancellation_bias() const;
};

CampaignConfig default_campaign();

struct ParallelizationResult {
  double tilt_1 = 0.0;
  double tilt_2 = 0.0;
  double residual_tilt = 0.0;  // max(|tilt_1|, |tilt_2|)
  double capacitance = 0.0;    // F, last reading (quantized when enabled)
  double flat_capacitance = 0.0;  // F, zero tilt at the same minimum gap, unquantized
  bool aborted = false;        // contact during the search
  std::vector<CapacitanceSample> trace;  // accepted positions, start first
};

struct OffsetVoltageResult {
  double v0 = 0.0;  // V
  double sigma_v0 = 0.0;
  std::vector<double> distances;   // m
  std::vector<double> v0_each;     // V
  std::vector<double> k_i;         // m / V^2
  double effective_mass = 0.0;     // kg
  double sigma_effective_mass = 0.0;
  double mass_ratio = 0.0;         // m_eff / m0
  double sigma_mass_ratio = 0.0;
};

struct CalibrationStageResult {
  CalibrationFit fit;
  bool chi2_in_band = true;  // probability within [0.01, 0.99]
  std::vector<MeasurementRun> runs;
};

struct ExtractionResult {
  double cancellation_bias = 0.0;  // V
  MeasurementRun run;
  // Calibration the final extraction used; differs from the stage result when
  // correction passes ran.
  CalibrationFit calibration;
  int correction_passes = 0;
  ResidualRun residuals;
  CasimirFit casimir;
  std::optional<ExponentFit> exponent;
  std::optional<WedgeFit> wedge;
  std::optional<DriftFit> drift;        // drift variant, drift term on
  std::optional<DriftFit> drift_null;   // same data, drift term off
  std::vector<MeasurementRun> drift_runs;
  std::optional<double> drift_span_truth;  // Hz^2, known only for simulated drift runs
  std::vector<std::string> warnings;
};

std::vector<MeasurementRun> simulate_calibration_runs(const CampaignConfig& config,
                                                      std::uint64_t seed);
MeasurementRun simulate_cancellation_run(const CampaignConfig& config, double bias,
                                         std::uint64_t seed);
/// The drift variant campaign: calibration runs then the cancellation run,
/// all with one shared rate = span / cancellation-run duration.
std::vector<MeasurementRun> simulate_drift_campaign(const CampaignConfig& config, double bias,
                                                    std::uint64_t seed);

ParallelizationResult stage_parallelize(const CampaignConfig& config);
OffsetVoltageResult stage_offset_voltage(const CampaignConfig& config, std::uint64_t seed);
CalibrationStageResult stage_calibrate(const CampaignConfig& config,
                                       std::optional<double> v0_estimate, std::uint64_t seed);
ExtractionResult stage_extract_casimir(const CampaignConfig& config,
                                       const CalibrationStageResult& cal, double bias,
                                       std::uint64_t seed);
/// Extraction from existing runs (no simulation): subtraction, selection
/// scan, Casimir, exponent and wedge fits.
ExtractionResult extract_from_runs(const CalibrationParams& cal, const MeasurementRun& run,
                                   const ApparatusConfig& nominal, const AnalysisConfig& analysis);

/// Calibration refit after removing -c_cas / d^5 (d from the previous fit)
/// from every calibration point.
CalibrationFit refit_calibration_without_casimir(const std::vector<MeasurementRun>& runs,
                                                 const CalibrationFit& previous, double c_cas,
                                                 const ApparatusConfig& nominal,
                                                 bool per_run_offset);

/// Bias used for the cancellation run: the override, else the static V0
/// rounded to 0.1 mV, else the listed near-cancellation entry.
double cancellation_bias_for(const CampaignConfig& config,
                             const std::optional<OffsetVoltageResult>& offset);

struct ComparisonRow {
  std::string name;
  std::string unit;
  double published = 0.0;
  double published_sigma = 0.0;
  double recovered = 0.0;
  double recovered_sigma = 0.0;
  double truth = 0.0;
  double pull_truth = 0.0;    // (recovered - truth) / recovered_sigma
  double z_published = 0.0;   // (recovered - published) / combined sigma
  bool informational = false;  // excluded from the |z| < 3 gate
};

struct StageStatus {
  std::string stage;
  bool ok = true;
  std::string error_kind;  // config, contact, data, convergence, other
  std::string message;
};

struct CampaignReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  CampaignConfig config;
  std::optional<ParallelizationResult> parallelization;
  std::optional<OffsetVoltageResult> offset;
  std::optional<CalibrationStageResult> calibration;
  std::optional<ExtractionResult> extraction;
  std::vector<ComparisonRow> comparison;
  std::vector<StageStatus> stages;

  bool all_ok() const;
};

/// Runs every stage; stage failures are recorded and later stages continue
/// where their inputs allow.
CampaignReport run_campaign(const CampaignConfig& config, std::uint64_t seed);
CampaignReport reproduce_published(std::uint64_t seed);

std::vector<ComparisonRow> build_comparison(const CampaignReport& report);

}  // namespace casimir
