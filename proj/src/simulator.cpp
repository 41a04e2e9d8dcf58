#include "casimir/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "casimir/errors.hpp"

namespace casimir {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeflectionDwell = 10.0;  // s per interferometer reading
constexpr double kBendingTolerance = 1e-12;  // m
constexpr int kBendingMaxIterations = 50;

enum Stream : std::uint64_t {
  kSpectrumStream = 0x5350454354ULL,
  kScanStream = 0x5343414eULL,
  kDeflectionStream = 0x4445464cULL,
};

// Total attractive force and its gradient dF/dd (negative) at gap d.
struct Force {
  double value;
  double gradient;
};

Force attractive_force(double d, double v_r, const ApparatusConfig& cfg, bool casimir_on,
                       const PhysicalConstants& k) {
  const double s = cfg.plate_area;
  const double d2 = d * d;
  double f = k.epsilon0 * s * v_r * v_r / (2.0 * d2);
  double g = -k.epsilon0 * s * v_r * v_r / (d2 * d);
  if (casimir_on) {
    const double kc = cfg.casimir_coefficient_true;
    f += kc * s / (d2 * d2);
    g -= 4.0 * kc * s / (d2 * d2 * d);
  }
  return {f, g};
}

}  // namespace

void NoiseConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg, field);
  };
  if (!(frequency_stat_sigma >= 0.0)) fail("frequency_stat_sigma", "must be >= 0");
  if (!(spectrum_noise_floor >= 0.0)) fail("spectrum_noise_floor", "must be >= 0");
  if (!(spectrum_peak_psd > 0.0)) fail("spectrum_peak_psd", "must be positive");
  if (!(resolution_bandwidth > 0.0)) fail("resolution_bandwidth", "must be positive");
  if (rms_averages < 1) fail("rms_averages", "must be >= 1");
  if (!(analyzer_span > 2.0 * resolution_bandwidth)) fail("analyzer_span", "too narrow");
  if (!(deflection_reading_sigma >= 0.0)) fail("deflection_reading_sigma", "must be >= 0");
  if (laser_drift_amplitude && !(*laser_drift_amplitude >= 0.0))
    fail("laser_drift_amplitude", "must be >= 0");
}

double DriftConfig::rate_for(double duration) const {
  if (total_span != 0.0 && duration > 0.0) return total_span / duration;
  return shift_drift_rate;
}

ScanPlan::ScanPlan(std::vector<ScanStep> steps, double budget)
    : steps_(std::move(steps)), budget_(budget) {
  if (!(budget_ > 0.0)) throw ConfigError("scan budget must be positive", "budget");
  double total = 0.0;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const ScanStep& s = steps_[i];
    if (!(s.dwell >= 0.0)) throw ConfigError("negative dwell time", "dwell");
    if (i > 0 && !(s.v_pzt > steps_[i - 1].v_pzt)) {
      throw ConfigError("V_PZT must be strictly increasing (step " + std::to_string(i) + ")",
                        "v_pzt");
    }
    total += s.dwell;
  }
  if (total > budget_) {
    throw ConfigError("acquisition time " + std::to_string(total) + " s exceeds budget " +
                          std::to_string(budget_) + " s",
                      "dwell");
  }
}

double ScanPlan::duration() const {
  double total = 0.0;
  for (const auto& s : steps_) total += s.dwell;
  return total;
}

std::vector<double> ScanPlan::linear_gaps(double d_max, double d_min, int n) {
  if (n < 2 || !(d_max > d_min) || !(d_min > 0.0)) {
    throw ConfigError("gap range must satisfy d_max > d_min > 0 with n >= 2", "scan_range");
  }
  std::vector<double> gaps(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    gaps[static_cast<std::size_t>(i)] = d_max + (d_min - d_max) * i / (n - 1);
  }
  return gaps;
}

ScanPlan ScanPlan::for_gaps(const ApparatusConfig& cfg, double v_c,
                            const std::vector<double>& gaps, double dwell, bool casimir_on,
                            double budget, const PhysicalConstants& k) {
  std::vector<ScanStep> steps;
  steps.reserve(gaps.size());
  const double v_r = v_c - cfg.offset_voltage_true;
  const double stiffness = cfg.stiffness();
  for (double d : gaps) {
    if (!(d > 0.0)) throw ConfigError("target gap must be positive", "scan_range");
    const Force f = attractive_force(d, v_r, cfg, casimir_on, k);
    if (-f.gradient >= stiffness) {
      throw ContactError("target gap " + std::to_string(d) + " m is beyond pull-in");
    }
    const double d_s = f.value / stiffness;
    const double v_pzt = (cfg.reference_distance + cfg.distance_correction_true - d - d_s) /
                         cfg.actuation_coefficient;
    steps.push_back({v_pzt, v_c, dwell});
  }
  return ScanPlan(std::move(steps), budget);
}

double MeasurementRun::bias() const { return points.empty() ? 0.0 : points.front().v_c; }

std::pair<double, double> bent_gap(double undeformed_gap, double v_r, const ApparatusConfig& cfg,
                                   bool casimir_on, const PhysicalConstants& k, int* iterations) {
  if (!(undeformed_gap > 0.0)) {
    throw ContactError("plates in contact before bending (gap " + std::to_string(undeformed_gap) +
                       " m)");
  }
  const double stiffness = cfg.stiffness();
  // Newton on g(s) = s - F(u - s)/k, concave and increasing from s = 0, so
  // iterates approach the stable root monotonically from below.
  double s = 0.0;
  for (int it = 1; it <= kBendingMaxIterations; ++it) {
    const double d = undeformed_gap - s;
    if (!(d > 0.0)) break;
    const Force f = attractive_force(d, v_r, cfg, casimir_on, k);
    const double g = s - f.value / stiffness;
    const double slope = 1.0 + f.gradient / stiffness;
    if (!(slope > 0.0)) break;
    const double next = s - g / slope;
    if (std::abs(next - s) < kBendingTolerance) {
      if (iterations) *iterations = it;
      const double gap = undeformed_gap - next;
      if (!(gap > 0.0)) break;
      return {gap, next};
    }
    s = next;
  }
  throw ContactError("no stable static equilibrium at undeformed gap " +
                     std::to_string(undeformed_gap) + " m (pull-in)");
}

SpectrumRecord synthesize_spectrum(double true_freq, double linewidth, const NoiseConfig& noise,
                                   double timestamp) {
  noise.validate();
  if (!(linewidth > 0.0)) throw DomainError("linewidth must be positive");
  const double rbw = noise.resolution_bandwidth;
  const auto bins = static_cast<int>(std::lround(noise.analyzer_span / rbw));
  SpectrumRecord rec;
  rec.bin_width = rbw;
  rec.timestamp = timestamp;
  rec.frequencies.resize(static_cast<std::size_t>(bins));
  for (int i = 0; i < bins; ++i) {
    rec.frequencies[static_cast<std::size_t>(i)] = noise.analyzer_center + (i - bins / 2) * rbw;
  }
  if (true_freq < rec.frequencies.front() || true_freq > rec.frequencies.back()) {
    throw ConfigError("resonance " + std::to_string(true_freq) +
                          " Hz outside the analyzer window",
                      "analyzer_center");
  }

  std::mt19937_64 rng(derive_seed(noise.rng_seed ^ std::bit_cast<std::uint64_t>(timestamp),
                                  kSpectrumStream));
  std::exponential_distribution<double> exp1(1.0);
  const double half = linewidth / 2.0;
  const double floor_psd = noise.spectrum_noise_floor * noise.spectrum_noise_floor;
  rec.power.resize(rec.frequencies.size());
  for (std::size_t i = 0; i < rec.frequencies.size(); ++i) {
    const double x = rec.frequencies[i] - true_freq;
    const double line = noise.spectrum_peak_psd * half * half / (x * x + half * half);
    double acc = 0.0;
    for (int a = 0; a < noise.rms_averages; ++a) acc += floor_psd * exp1(rng);
    rec.power[i] = line + acc / noise.rms_averages;
  }
  return rec;
}

MeasurementRun run_gap_scan(const ApparatusConfig& cfg, const ScanPlan& plan,
                            const NoiseConfig& noise, const DriftConfig& drift, bool casimir_on,
                            const PhysicalConstants& k) {
  cfg.validate();
  noise.validate();
  if (plan.empty()) throw ConfigError("scan plan has no steps", "plan");

  const double c_el = cfg.electrostatic_coefficient(k);
  const double c_cas = casimir_on ? cfg.casimir_shift_coefficient(k) : 0.0;
  const double sigma = 2.0 * cfg.free_frequency * noise.frequency_stat_sigma;
  const double rate = drift.rate_for(plan.duration());

  std::mt19937_64 rng(derive_seed(noise.rng_seed, kScanStream));
  std::normal_distribution<double> gauss(0.0, 1.0);

  MeasurementRun run;
  run.seed = noise.rng_seed;
  run.points.reserve(plan.steps().size());
  double t = 0.0;
  for (const ScanStep& step : plan.steps()) {
    const double v_r = step.v_c - cfg.offset_voltage_true;
    double undeformed = cfg.reference_distance - cfg.actuation_coefficient * step.v_pzt +
                        cfg.distance_correction_true;
    if (drift.thermal_d0_drift != 0.0) undeformed += drift.thermal_d0_drift * t;
    const auto [gap, d_s] = bent_gap(undeformed, v_r, cfg, casimir_on, k);

    double shift = -cfg.shift_offset_true + frequency_shift_model(gap, v_r, c_el, c_cas);
    if (rate != 0.0) shift += rate * t;
    shift += sigma * gauss(rng);

    run.points.push_back({step.v_pzt, step.v_c, t, shift, sigma, d_s});
    t += step.dwell;
  }
  return run;
}

DeflectionSweep run_deflection_sweep(const ApparatusConfig& cfg,
                                     const std::vector<double>& distances,
                                     const std::vector<double>& biases, const NoiseConfig& noise,
                                     const PhysicalConstants& k) {
  cfg.validate();
  noise.validate();
  std::mt19937_64 rng(derive_seed(noise.rng_seed, kDeflectionStream));
  std::normal_distribution<double> gauss(0.0, 1.0);

  DeflectionSweep sweep;
  for (double d : distances) {
    if (!(d > 0.0)) throw DomainError("deflection distance must be positive");
    DeflectionSeries series;
    series.distance = d;

    std::vector<double> sequence;  // NaN marks a zero-bias reference
    for (double b : biases) {
      sequence.push_back(std::nan(""));
      sequence.push_back(b);
    }
    sequence.push_back(std::nan(""));

    double max_signal = static_deflection(0.0, d, cfg, k);
    for (double b : biases) max_signal = std::max(max_signal, static_deflection(b, d, cfg, k));
    max_signal /= cfg.interferometer_sensitivity;
    const double amplitude = noise.laser_drift_amplitude.value_or(5.0 * max_signal);
    const double n = static_cast<double>(sequence.size());
    // Integrated random walk: smooth enough that alternation cancels it at first order.
    const double velocity_step = amplitude * std::sqrt(3.0 / (n * n * n));

    double velocity = 0.0;
    double wander = 0.0;
    double t = 0.0;
    for (double entry : sequence) {
      const bool reference = std::isnan(entry);
      const double v_c = reference ? 0.0 : entry;
      const double signal = static_deflection(v_c, d, cfg, k) / cfg.interferometer_sensitivity;
      const double reading = signal + wander + noise.deflection_reading_sigma * gauss(rng);
      series.readings.push_back({v_c, reference, t, reading});
      velocity += velocity_step * gauss(rng);
      wander += velocity;
      t += kDeflectionDwell;
    }
    sweep.series.push_back(std::move(series));
  }
  return sweep;
}

double bridge_capacitance(const ApparatusConfig& cfg, double tilt_1, double tilt_2,
                          double min_gap, const PhysicalConstants& k) {
  if (!(min_gap > 0.0)) throw DomainError("plates in contact (minimum gap <= 0)");
  const double w = cfg.plate_width;
  const double l = cfg.plate_length();
  const double mean_gap = min_gap + std::abs(tilt_1) * w / 2.0 + std::abs(tilt_2) * l / 2.0;
  const double flat = k.epsilon0 * cfg.plate_area / mean_gap;
  const double c1 = tilt_capacitance(mean_gap, WedgeGeometry{tilt_1, w, l}, k);
  const double c2 = tilt_capacitance(mean_gap, WedgeGeometry{tilt_2, l, w}, k);
  return c1 * (c2 / flat) + cfg.stray_capacitance;
}

double quantize_capacitance(double c, double step) {
  if (!(step > 0.0)) return c;
  return std::round(c / step) * step;
}

std::vector<CapacitanceSample> map_capacitance(
    const ApparatusConfig& cfg, const std::vector<std::pair<double, double>>& tilt_grid,
    double min_gap, bool quantized, const PhysicalConstants& k) {
  std::vector<CapacitanceSample> out;
  out.reserve(tilt_grid.size());
  for (const auto& [t1, t2] : tilt_grid) {
    double c = bridge_capacitance(cfg, t1, t2, min_gap, k);
    if (quantized) c = quantize_capacitance(c, cfg.bridge_resolution);
    out.push_back({t1, t2, c});
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace casimir
