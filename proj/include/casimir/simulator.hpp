#pragma once

// Seeded digital twin of the apparatus: analyzer spectra, static-deflection
// sweeps, capacitance maps and PZT gap scans.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "casimir/physics.hpp"

namespace casimir {

struct NoiseConfig {
  double frequency_stat_sigma = published::kFrequencyStatSigma;  // Hz
  // Analyzer noise floor as an amplitude spectral density; the default puts
  // the Lorentzian centre scatter at the 7 mHz level.
  double spectrum_noise_floor = 4.2e-4;                          // V / sqrt(Hz)
  double spectrum_peak_psd = 1.0e-6;                              // V^2 / Hz
  double resolution_bandwidth = published::kResolutionBandwidth;  // Hz
  int rms_averages = published::kRmsAverages;
  double analyzer_center = published::kFreeFrequency;             // Hz
  double analyzer_span = 4.0;                                     // Hz
  double deflection_reading_sigma = 1.0e-3;                       // V
  // RMS wander of the laser drift over one sweep; unset means five times the
  // largest deflection signal of the sweep.
  std::optional<double> laser_drift_amplitude;                    // V
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct DriftConfig {
  double shift_drift_rate = 0.0;  // Hz^2 / s
  // When positive, overrides the rate as total_span / run duration.
  double total_span = 0.0;        // Hz^2
  double thermal_d0_drift = 0.0;  // m / s

  double rate_for(double duration) const;
  bool active() const { return shift_drift_rate != 0.0 || total_span != 0.0 || thermal_d0_drift != 0.0; }
};

struct ScanStep {
  double v_pzt = 0.0;  // V
  double v_c = 0.0;    // V
  double dwell = 0.0;  // s
};

// PZT voltage programme of one run. Construction enforces strictly increasing
// V_PZT and the acquisition budget.
class ScanPlan {
 public:
  ScanPlan() = default;
  explicit ScanPlan(std::vector<ScanStep> steps,
                    double budget = published::kAcquisitionBudget);

  /// Steps placing the true gap at each target (descending order of gap),
  /// accounting for the static bending at that gap.
  static ScanPlan for_gaps(const ApparatusConfig& cfg, double v_c, const std::vector<double>& gaps,
                           double dwell, bool casimir_on = true,
                           double budget = published::kAcquisitionBudget,
                           const PhysicalConstants& k = {});
  /// n gaps evenly spaced from d_max down to d_min.
  static std::vector<double> linear_gaps(double d_max, double d_min, int n);

  const std::vector<ScanStep>& steps() const { return steps_; }
  double budget() const { return budget_; }
  double duration() const;
  bool empty() const { return steps_.empty(); }

 private:
  std::vector<ScanStep> steps_;
  double budget_ = published::kAcquisitionBudget;
};

struct SpectrumRecord {
  std::vector<double> frequencies;  // Hz, bin centres
  std::vector<double> power;        // V^2 / Hz
  double bin_width = 0.0;           // Hz
  double timestamp = 0.0;           // s
};

struct RunPoint {
  double v_pzt = 0.0;             // V
  double v_c = 0.0;               // V
  double t = 0.0;                 // s
  double delta_nu2 = 0.0;         // Hz^2
  double sigma_delta_nu2 = 0.0;   // Hz^2
  double d_s = 0.0;               // m
};

struct MeasurementRun {
  std::vector<RunPoint> points;
  std::string label;
  std::string role;  // "calibration", "cancellation" or empty
  std::uint64_t seed = 0;
  std::string config_hash;

  double bias() const;  // V_c of the first point
};

struct DeflectionReading {
  double v_c = 0.0;       // V
  bool reference = false; // zero-bias reading of the alternation
  double t = 0.0;         // s
  double reading = 0.0;   // V, interferometer output
};

struct DeflectionSeries {
  double distance = 0.0;  // m
  std::vector<DeflectionReading> readings;
};

struct DeflectionSweep {
  std::vector<DeflectionSeries> series;
};

struct CapacitanceSample {
  double tilt_1 = 0.0;  // rad, about the axis across plate_width
  double tilt_2 = 0.0;  // rad, about the axis across plate_length
  double capacitance = 0.0;  // F
};

/// Static bending solved self-consistently at a given undeformed gap. The
/// returned pair is {gap, d_s}. Throws ContactError past pull-in.
std::pair<double, double> bent_gap(double undeformed_gap, double v_r, const ApparatusConfig& cfg,
                                   bool casimir_on, const PhysicalConstants& k = {},
                                   int* iterations = nullptr);

SpectrumRecord synthesize_spectrum(double true_freq, double linewidth, const NoiseConfig& noise,
                                   double timestamp);

MeasurementRun run_gap_scan(const ApparatusConfig& cfg, const ScanPlan& plan,
                            const NoiseConfig& noise, const DriftConfig& drift, bool casimir_on,
                            const PhysicalConstants& k = {});

/// Interleaved zero / bias readings at each distance. Every bias reading is
/// preceded by a zero-bias reading and the series ends on one.
DeflectionSweep run_deflection_sweep(const ApparatusConfig& cfg,
                                     const std::vector<double>& distances,
                                     const std::vector<double>& biases, const NoiseConfig& noise,
                                     const PhysicalConstants& k = {});

/// Two independent wedges at a fixed minimum gap (closest approach), mean gap
/// min_gap + (|t1| W + |t2| L) / 2. Unquantized.
double bridge_capacitance(const ApparatusConfig& cfg, double tilt_1, double tilt_2,
                          double min_gap, const PhysicalConstants& k = {});
double quantize_capacitance(double c, double step);

std::vector<CapacitanceSample> map_capacitance(
    const ApparatusConfig& cfg, const std::vector<std::pair<double, double>>& tilt_grid,
    double min_gap, bool quantized = true, const PhysicalConstants& k = {});

/// splitmix64 step, used to derive independent per-run seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace casimir
