#include "casimir/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numeric>
#include <string>

#include "casimir/errors.hpp"
#include "casimir/io.hpp"

namespace casimir {

namespace {

// Seed streams of one campaign.
constexpr std::uint64_t kDeflectionSeed = 50;
constexpr std::uint64_t kCalibrationSeed = 100;
constexpr std::uint64_t kCancellationSeed = 200;
constexpr std::uint64_t kDriftSeed = 300;

constexpr double kNearCancellation = 15e-3;  // V

std::string mv_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1fmV", v * 1e3);
  return buf;
}

NoiseConfig seeded(const NoiseConfig& base, std::uint64_t seed, std::uint64_t stream) {
  NoiseConfig n = base;
  n.rng_seed = derive_seed(seed, stream);
  return n;
}

ScanPlan plan_for(const CampaignConfig& c, double bias, const ScanRange& range) {
  return ScanPlan::for_gaps(c.apparatus, bias,
                            ScanPlan::linear_gaps(range.d_max, range.d_min, range.points),
                            range.dwell, c.apparatus.casimir_coefficient_true > 0.0);
}

MeasurementRun scan(const CampaignConfig& c, double bias, const ScanRange& range,
                    const DriftConfig& drift, std::uint64_t seed, std::uint64_t stream,
                    const std::string& label, const std::string& role) {
  const ScanPlan plan = plan_for(c, bias, range);
  MeasurementRun run = run_gap_scan(c.apparatus, plan, seeded(c.noise, seed, stream), drift,
                                    c.apparatus.casimir_coefficient_true > 0.0);
  run.label = label;
  run.role = role;
  run.seed = seed;
  return run;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

StageStatus run_stage(const std::string& name, const std::function<void()>& body) {
  StageStatus st;
  st.stage = name;
  try {
    body();
  } catch (const ConfigError& e) {
    st = {name, false, "config", e.what()};
  } catch (const DomainError& e) {
    st = {name, false, "config", e.what()};
  } catch (const ContactError& e) {
    st = {name, false, "contact", e.what()};
  } catch (const DataError& e) {
    st = {name, false, "data", e.what()};
  } catch (const ConvergenceError& e) {
    st = {name, false, "convergence", e.what()};
  } catch (const std::exception& e) {
    st = {name, false, "other", e.what()};
  }
  return st;
}

}  // namespace

CampaignConfig default_campaign() { return CampaignConfig{}; }

std::vector<double> CampaignConfig::calibration_biases() const {
  std::vector<double> out;
  for (double b : biases) {
    if (std::abs(b - apparatus.offset_voltage_true) >= kNearCancellation) out.push_back(b);
  }
  return out;
}

double CampaignConfig::listed_cancellation_bias() const {
  for (double b : biases) {
    if (std::abs(b - apparatus.offset_voltage_true) < kNearCancellation) return b;
  }
  throw ConfigError("bias list has no near-cancellation entry", "bias_mv");
}

void CampaignConfig::validate() const {
  apparatus.validate();
  noise.validate();
  int near = 0;
  for (double b : biases) {
    if (!std::isfinite(b)) throw ConfigError("bias values must be finite", "bias_mv");
    if (std::abs(b - apparatus.offset_voltage_true) < kNearCancellation) ++near;
  }
  if (near != 1) {
    throw ConfigError("bias list needs exactly one entry within 15 mV of the contact potential, found " +
                          std::to_string(near),
                      "bias_mv");
  }
  if (calibration_biases().size() < 3) {
    throw ConfigError("bias list needs at least three calibration biases", "bias_mv");
  }
  auto check_range = [](const ScanRange& r, const std::string& key) {
    if (!(r.d_min > 0.0) || !(r.d_max > r.d_min)) {
      throw ConfigError(key + ": scan range must be positive and increasing", key);
    }
    if (r.points < 4) throw ConfigError(key + ": needs at least 4 points", key);
    if (!(r.dwell > 0.0)) throw ConfigError(key + ": dwell must be positive", key);
  };
  check_range(calibration_scan, "calibration_scan");
  check_range(cancellation_scan, "cancellation_scan");
  if (deflection.distances.size() < 3) {
    throw ConfigError("deflection sweep needs at least 3 distances", "deflection.distances_um");
  }
  if (deflection.biases.size() < 5) {
    throw ConfigError("deflection sweep needs at least 5 bias values", "deflection.bias_mv");
  }
  for (double d : deflection.distances) {
    if (!(d > 0.0)) throw ConfigError("deflection distances must be positive", "deflection.distances_um");
  }
  if (!(parallelization.min_gap > 0.0)) {
    throw ConfigError("parallelization gap must be positive", "parallelization.min_gap_um");
  }
  if (!(parallelization.initial_step > parallelization.min_step) || !(parallelization.min_step > 0.0)) {
    throw ConfigError("parallelization steps must satisfy initial > min > 0", "parallelization");
  }
  if (std::abs(parallelization.start_tilt_1) > 1e-3 || std::abs(parallelization.start_tilt_2) > 1e-3) {
    throw ConfigError("starting tilt must be within 1e-3 rad",
                      std::abs(parallelization.start_tilt_1) > 1e-3 ? "parallelization.start_tilt_1_rad"
                                                                    : "parallelization.start_tilt_2_rad");
  }
  if (analysis.casimir_points < 2) {
    throw ConfigError("casimir_points must be at least 2", "analysis.casimir_points");
  }
  if (analysis.casimir_points > cancellation_scan.points) {
    throw ConfigError("casimir_points exceeds the cancellation scan", "analysis.casimir_points");
  }
  if (analysis.casimir_correction_passes < 0 || analysis.casimir_correction_passes > 10) {
    throw ConfigError("casimir_correction_passes must be in [0, 10]",
                      "analysis.casimir_correction_passes");
  }
  if (!(drift_variant_span >= 0.0)) {
    throw ConfigError("drift span must be non-negative", "drift_variant_span_hz2");
  }
  if (seeds.empty()) throw ConfigError("seed list is empty", "seeds");
}

std::vector<MeasurementRun> simulate_calibration_runs(const CampaignConfig& config,
                                                      std::uint64_t seed) {
  std::vector<MeasurementRun> runs;
  const auto biases = config.calibration_biases();
  for (std::size_t i = 0; i < biases.size(); ++i) {
    runs.push_back(scan(config, biases[i], config.calibration_scan, config.drift, seed,
                        kCalibrationSeed + i, "calibration_" + mv_label(biases[i]),
                        "calibration"));
  }
  return runs;
}

MeasurementRun simulate_cancellation_run(const CampaignConfig& config, double bias,
                                         std::uint64_t seed) {
  return scan(config, bias, config.cancellation_scan, config.drift, seed, kCancellationSeed,
              "cancellation_" + mv_label(bias), "cancellation");
}

std::vector<MeasurementRun> simulate_drift_campaign(const CampaignConfig& config, double bias,
                                                    std::uint64_t seed) {
  const double duration = config.cancellation_scan.points * config.cancellation_scan.dwell;
  DriftConfig drift = config.drift;
  drift.total_span = 0.0;
  drift.shift_drift_rate = config.drift_variant_span / duration;
  std::vector<MeasurementRun> runs;
  const auto biases = config.calibration_biases();
  for (std::size_t i = 0; i < biases.size(); ++i) {
    runs.push_back(scan(config, biases[i], config.calibration_scan, drift, seed, kDriftSeed + i,
                        "drift_calibration_" + mv_label(biases[i]), "calibration"));
  }
  runs.push_back(scan(config, bias, config.cancellation_scan, drift, seed, kDriftSeed + 10,
                      "drift_cancellation_" + mv_label(bias), "cancellation"));
  return runs;
}

ParallelizationResult stage_parallelize(const CampaignConfig& config) {
  const ParallelizationConfig& pc = config.parallelization;
  const ApparatusConfig& cfg = config.apparatus;
  auto reading = [&](double t1, double t2) {
    const double c = bridge_capacitance(cfg, t1, t2, pc.min_gap);
    return pc.quantized ? quantize_capacitance(c, cfg.bridge_resolution) : c;
  };

  ParallelizationResult out;
  double t[2] = {pc.start_tilt_1, pc.start_tilt_2};
  double current = reading(t[0], t[1]);
  out.trace.push_back({t[0], t[1], current});
  double step = pc.initial_step;
  constexpr int kMaxMoves = 1000000;
  int moves = 0;
  // Coordinate ascent: take the first single-axis move that raises the
  // reading, halve the step once none does.
  while (step >= pc.min_step && moves < kMaxMoves) {
    bool moved = false;
    for (int axis = 0; axis < 2 && !moved; ++axis) {
      for (double dir : {1.0, -1.0}) {
        double cand[2] = {t[0], t[1]};
        cand[axis] += dir * step;
        double c = 0.0;
        try {
          c = reading(cand[0], cand[1]);
        } catch (const DomainError&) {
          out.aborted = true;
          step = 0.0;
          break;
        }
        if (c > current) {
          t[0] = cand[0];
          t[1] = cand[1];
          current = c;
          out.trace.push_back({t[0], t[1], c});
          moved = true;
          ++moves;
          break;
        }
      }
    }
    if (!moved) step /= 2.0;
  }
  out.tilt_1 = t[0];
  out.tilt_2 = t[1];
  out.residual_tilt = std::max(std::abs(t[0]), std::abs(t[1]));
  out.capacitance = current;
  out.flat_capacitance = bridge_capacitance(cfg, 0.0, 0.0, pc.min_gap);
  return out;
}

OffsetVoltageResult stage_offset_voltage(const CampaignConfig& config, std::uint64_t seed) {
  const ApparatusConfig& cfg = config.apparatus;
  const DeflectionSweep sweep =
      run_deflection_sweep(cfg, config.deflection.distances, config.deflection.biases,
                           seeded(config.noise, seed, kDeflectionSeed));
  OffsetVoltageResult out;
  std::vector<double> masses;
  for (const DeflectionSeries& s : sweep.series) {
    // Unit weights: the drift residue left by the alternation adds to the
    // reading noise, so the scatter sets the error scale.
    const ParabolaFit p = fit_deflection_parabola(s, 0.0);
    const double k_i = p.curvature * cfg.interferometer_sensitivity;
    out.distances.push_back(s.distance);
    out.v0_each.push_back(p.v0);
    out.k_i.push_back(k_i);
    masses.push_back(effective_mass_from_deflection(k_i, s.distance, cfg));
  }
  const double n = static_cast<double>(masses.size());
  out.v0 = mean_of(out.v0_each);
  out.sigma_v0 = sd_of(out.v0_each) / std::sqrt(n);
  out.effective_mass = mean_of(masses);
  out.sigma_effective_mass = sd_of(masses) / std::sqrt(n);
  out.mass_ratio = out.effective_mass / cfg.cantilever_mass;
  out.sigma_mass_ratio = out.sigma_effective_mass / cfg.cantilever_mass;
  return out;
}

CalibrationStageResult stage_calibrate(const CampaignConfig& config,
                                       std::optional<double> v0_estimate, std::uint64_t seed) {
  CalibrationStageResult out;
  out.runs = simulate_calibration_runs(config, seed);
  CalibrationOptions opt;
  opt.per_run_offset = config.analysis.per_run_offset;
  opt.v0_initial = v0_estimate;
  out.fit = fit_calibration_global(out.runs, config.apparatus, opt);
  const double p = out.fit.fit.chi2_probability;
  out.chi2_in_band = p >= 0.01 && p <= 0.99;
  return out;
}

ExtractionResult extract_from_runs(const CalibrationParams& cal, const MeasurementRun& run,
                                   const ApparatusConfig& nominal,
                                   const AnalysisConfig& analysis) {
  ExtractionResult out;
  out.run = run;
  out.cancellation_bias = run.bias();
  out.calibration.params = cal;
  out.residuals = subtract_electrostatic(run, cal, nominal);
  CasimirFitOptions opt;
  opt.n_points = analysis.casimir_points;
  opt.selection = analysis.selection;
  opt.treatment = analysis.treatment;
  out.casimir = fit_casimir(out.residuals, opt);
  if (out.casimir.sign_anomaly) {
    out.warnings.push_back("sign anomaly: fitted C_Cas is not positive (force not attractive)");
  }
  const int n = out.casimir.n_used;
  try {
    out.exponent = fit_free_exponent(out.residuals, n, analysis.treatment);
  } catch (const Error& e) {
    out.warnings.push_back(std::string("free-exponent fit: ") + e.what());
  }
  try {
    out.wedge = fit_wedge_deviation(out.residuals, n, analysis.treatment);
  } catch (const Error& e) {
    out.warnings.push_back(std::string("wedge fit: ") + e.what());
  }
  return out;
}

ExtractionResult stage_extract_casimir(const CampaignConfig& config,
                                       const CalibrationStageResult& cal, double bias,
                                       std::uint64_t seed) {
  const MeasurementRun run = simulate_cancellation_run(config, bias, seed);
  ExtractionResult out = extract_from_runs(cal.fit.params, run, config.apparatus, config.analysis);
  out.calibration = cal.fit;
  for (int pass = 0; pass < config.analysis.casimir_correction_passes; ++pass) {
    CalibrationFit refit = refit_calibration_without_casimir(
        cal.runs, out.calibration, out.casimir.params.c_cas, config.apparatus,
        config.analysis.per_run_offset);
    ExtractionResult next = extract_from_runs(refit.params, run, config.apparatus, config.analysis);
    next.calibration = std::move(refit);
    next.correction_passes = pass + 1;
    out = std::move(next);
  }
  out.drift_runs = simulate_drift_campaign(config, bias, seed);
  out.drift_span_truth = config.drift_variant_span;
  const std::vector<MeasurementRun> cal_runs(out.drift_runs.begin(), out.drift_runs.end() - 1);
  try {
    out.drift = fit_with_drift(cal_runs, out.drift_runs.back(), config.apparatus);
  } catch (const Error& e) {
    out.warnings.push_back(std::string("drift fit: ") + e.what());
  }
  try {
    DriftFitOptions off;
    off.fit_drift = false;
    out.drift_null = fit_with_drift(cal_runs, out.drift_runs.back(), config.apparatus, off);
  } catch (const Error& e) {
    out.warnings.push_back(std::string("drift-free comparison fit: ") + e.what());
  }
  return out;
}

CalibrationFit refit_calibration_without_casimir(const std::vector<MeasurementRun>& runs,
                                                 const CalibrationFit& previous, double c_cas,
                                                 const ApparatusConfig& nominal,
                                                 bool per_run_offset) {
  std::vector<MeasurementRun> cleaned = runs;
  for (MeasurementRun& r : cleaned) {
    for (RunPoint& p : r.points) {
      const double d = relative_displacement(p.v_pzt, p.d_s, nominal) + previous.params.d0;
      if (!(d > 0.0)) throw ContactError("calibration point at non-positive gap after refit");
      p.delta_nu2 += c_cas / std::pow(d, 5);
    }
  }
  CalibrationOptions opt;
  opt.per_run_offset = per_run_offset;
  opt.v0_initial = previous.params.v0;
  return fit_calibration_global(cleaned, nominal, opt);
}

double cancellation_bias_for(const CampaignConfig& config,
                             const std::optional<OffsetVoltageResult>& offset) {
  if (config.cancellation_bias) return *config.cancellation_bias;
  if (offset) return std::round(offset->v0 * 1e4) / 1e4;
  return config.listed_cancellation_bias();
}

bool CampaignReport::all_ok() const {
  return std::all_of(stages.begin(), stages.end(), [](const StageStatus& s) { return s.ok; });
}

CampaignReport run_campaign(const CampaignConfig& config, std::uint64_t seed) {
  config.validate();
  CampaignReport r;
  r.seed = seed;
  r.config = config;
  r.config_hash = config_hash(config);

  r.stages.push_back(run_stage("parallelize", [&] { r.parallelization = stage_parallelize(config); }));
  r.stages.push_back(
      run_stage("offset_voltage", [&] { r.offset = stage_offset_voltage(config, seed); }));
  r.stages.push_back(run_stage("calibrate", [&] {
    std::optional<double> v0;
    if (r.offset) v0 = r.offset->v0;
    r.calibration = stage_calibrate(config, v0, seed);
  }));
  if (r.calibration) {
    r.stages.push_back(run_stage("extract", [&] {
      const double bias = cancellation_bias_for(config, r.offset);
      r.extraction = stage_extract_casimir(config, *r.calibration, bias, seed);
    }));
  } else {
    r.stages.push_back({"extract", false, "data", "skipped: calibration unavailable"});
  }
  r.comparison = build_comparison(r);
  return r;
}

CampaignReport reproduce_published(std::uint64_t seed) { return run_campaign(default_campaign(), seed); }

std::vector<ComparisonRow> build_comparison(const CampaignReport& report) {
  namespace p = published;
  const ApparatusConfig& cfg = report.config.apparatus;
  std::vector<ComparisonRow> rows;
  auto add = [&](std::string name, std::string unit, double pub, double pub_sigma, double rec,
                 double rec_sigma, double truth, bool informational) {
    ComparisonRow row{std::move(name), std::move(unit), pub, pub_sigma, rec, rec_sigma, truth,
                      0.0, 0.0, informational};
    if (rec_sigma > 0.0) row.pull_truth = (rec - truth) / rec_sigma;
    const double combined = std::hypot(rec_sigma, pub_sigma);
    if (combined > 0.0) row.z_published = (rec - pub) / combined;
    rows.push_back(std::move(row));
  };

  if (report.parallelization) {
    const auto& pr = *report.parallelization;
    add("residual_tilt", "rad", 0.0, p::kParallelismBound, pr.residual_tilt, 0.0, 0.0, true);
  }
  if (report.offset) {
    const auto& o = *report.offset;
    // The static offset in the simulation shares the dynamic truth, so the
    // published static value is compared for information only.
    add("v0_static", "V", p::kStaticOffsetVoltage, p::kStaticOffsetVoltageSigma, o.v0, o.sigma_v0,
        cfg.offset_voltage_true, true);
    add("mass_ratio", "", p::kMassRatio, p::kMassRatioSigma, o.mass_ratio, o.sigma_mass_ratio,
        cfg.effective_mass / cfg.cantilever_mass, false);
  }
  if (report.calibration) {
    // Final calibration estimate: the Casimir-corrected refit when it ran.
    const CalibrationParams& c = report.extraction ? report.extraction->calibration.params
                                                   : report.calibration->fit.params;
    add("delta_nu2_offset", "Hz^2", p::kShiftOffset, p::kShiftOffsetSigma, c.delta_nu2_offset,
        c.sigma(0), cfg.shift_offset_true, false);
    add("d0", "m", p::kDistanceCorrection, p::kDistanceCorrectionSigma, c.d0, c.sigma(1),
        cfg.distance_correction_true, false);
    add("c_el", "Hz^2 m^3 / V^2", p::kElectrostaticCoefficient, p::kElectrostaticCoefficientSigma,
        c.c_el, c.sigma(2), cfg.electrostatic_coefficient(), false);
    // Counterbias magnitude: the published dynamic value is -V0 here.
    add("v0_dynamic", "V", p::kDynamicOffsetVoltage, p::kDynamicOffsetVoltageSigma, -c.v0,
        c.sigma(3), -cfg.offset_voltage_true, false);
    add("chi2_probability_calibration", "", p::kCalibrationChi2Probability, 0.0,
        report.calibration->fit.fit.chi2_probability, 0.0, 0.5, true);
  }
  if (report.extraction) {
    const ExtractionResult& e = *report.extraction;
    const CasimirParams& c = e.casimir.params;
    add("c_cas", "Hz^2 m^5", p::kCasimirShiftCoefficient, p::kCasimirShiftCoefficientSigma,
        c.c_cas, c.sigma_c_cas, cfg.casimir_shift_coefficient(), false);
    add("k_c", "N m^2", p::kCasimirCoefficient, p::kCasimirCoefficientSigma, c.k_c, c.sigma_k_c,
        cfg.casimir_coefficient_true, false);
    add("chi2_probability_casimir", "", p::kCasimirChi2Probability, 0.0,
        e.casimir.fit.chi2_probability, 0.0, 0.5, true);
    if (e.exponent) {
      add("exponent", "", p::kExponent, p::kExponentSigma, e.exponent->exponent,
          e.exponent->sigma_exponent, 5.0, false);
    }
    if (e.wedge) {
      add("wedge_deviation", "m", 0.0, p::kWedgeDeviationSigma, e.wedge->deviation,
          e.wedge->sigma_deviation, 0.0, false);
    }
    if (e.drift) {
      add("k_c_drift", "N m^2", p::kDriftCasimirCoefficient, p::kDriftCasimirCoefficientSigma,
          e.drift->casimir.k_c, e.drift->casimir.sigma_k_c, cfg.casimir_coefficient_true, false);
      if (e.drift_span_truth) {
        const double duration =
            report.config.cancellation_scan.points * report.config.cancellation_scan.dwell;
        add("drift_span", "Hz^2", *e.drift_span_truth, 0.0, e.drift->drift_rate * duration,
            e.drift->sigma_drift_rate * duration, *e.drift_span_truth, true);
      }
      add("chi2_probability_drift", "", p::kDriftChi2Probability, 0.0,
          e.drift->fit.chi2_probability, 0.0, 0.5, true);
    }
  }
  return rows;
}

}  // namespace casimir
