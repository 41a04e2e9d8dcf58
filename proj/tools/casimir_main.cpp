// casimir: simulate, analyze and reproduce the parallel-plate campaign.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "casimir/errors.hpp"
#include "casimir/io.hpp"
#include "casimir/pipeline.hpp"

namespace fs = std::filesystem;
using namespace casimir;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitContact = 3;
constexpr int kExitData = 4;
constexpr int kExitConvergence = 5;

int exit_code_for_kind(const std::string& kind) {
  if (kind == "config") return kExitConfig;
  if (kind == "contact") return kExitContact;
  if (kind == "data") return kExitData;
  if (kind == "convergence") return kExitConvergence;
  return 1;
}

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CASIMIR_OUT_DIR"); env && *env) return env;
  return "casimir_out";
}

CampaignConfig config_or_default(const std::string& path) {
  return path.empty() ? default_campaign() : load_config(path);
}

std::vector<MeasurementRun> simulate_stage(const CampaignConfig& config, const std::string& stage,
                                           std::uint64_t seed) {
  const double bias = cancellation_bias_for(config, std::nullopt);
  if (stage == "scan") {
    auto runs = simulate_calibration_runs(config, seed);
    runs.push_back(simulate_cancellation_run(config, bias, seed));
    return runs;
  }
  if (stage == "calibration") return simulate_calibration_runs(config, seed);
  if (stage == "cancellation") return {simulate_cancellation_run(config, bias, seed)};
  if (stage == "drift") return simulate_drift_campaign(config, bias, seed);
  throw ConfigError("unknown stage '" + stage + "'", "stage");
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, bool seed_set,
                 const std::string& stage, const std::string& out) {
  const CampaignConfig config = config_or_default(config_path);
  if (!seed_set) seed = config.seeds.front();
  const std::string hash = config_hash(config);
  const fs::path dir = output_dir(out) / "runs";
  for (MeasurementRun run : simulate_stage(config, stage, seed)) {
    run.config_hash = hash;
    const fs::path path = dir / (run.label + ".csv");
    save_run(path, run);
    std::cout << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_analyze(const std::vector<std::string>& files, const std::string& mode,
                const std::string& config_path, const std::string& out) {
  const CampaignConfig config = config_or_default(config_path);
  std::vector<MeasurementRun> calibration_runs;
  std::vector<MeasurementRun> cancellation_runs;
  for (const std::string& f : files) {
    MeasurementRun run = load_run(f);
    if (run.points.empty()) throw DataError(f + ": no data rows");
    if (run.role == "cancellation") {
      cancellation_runs.push_back(std::move(run));
    } else {
      calibration_runs.push_back(std::move(run));
    }
  }

  CampaignReport report;
  report.config = config;
  report.config_hash = config_hash(config);
  report.seed = calibration_runs.empty() ? 0 : calibration_runs.front().seed;

  CalibrationStageResult cal;
  cal.runs = calibration_runs;
  CalibrationOptions copt;
  copt.per_run_offset = config.analysis.per_run_offset;
  cal.fit = fit_calibration_global(calibration_runs, config.apparatus, copt);
  const double p = cal.fit.fit.chi2_probability;
  cal.chi2_in_band = p >= 0.01 && p <= 0.99;
  report.calibration = cal;
  report.stages.push_back({"calibrate", true, "", ""});

  if (mode != "calibrate") {
    if (cancellation_runs.size() != 1) {
      throw DataError("extract mode needs exactly one run with role 'cancellation', got " +
                      std::to_string(cancellation_runs.size()));
    }
    const MeasurementRun& run = cancellation_runs.front();
    ExtractionResult e = extract_from_runs(cal.fit.params, run, config.apparatus, config.analysis);
    e.calibration = cal.fit;
    for (int pass = 0; pass < config.analysis.casimir_correction_passes; ++pass) {
      CalibrationFit refit = refit_calibration_without_casimir(
          calibration_runs, e.calibration, e.casimir.params.c_cas, config.apparatus,
          config.analysis.per_run_offset);
      ExtractionResult next = extract_from_runs(refit.params, run, config.apparatus, config.analysis);
      next.calibration = std::move(refit);
      next.correction_passes = pass + 1;
      e = std::move(next);
    }
    if (mode == "full") {
      e.drift = fit_with_drift(calibration_runs, run, config.apparatus);
      DriftFitOptions off;
      off.fit_drift = false;
      e.drift_null = fit_with_drift(calibration_runs, run, config.apparatus, off);
    }
    report.extraction = std::move(e);
    report.stages.push_back({"extract", true, "", ""});
  }
  report.comparison = build_comparison(report);

  const fs::path dir = output_dir(out);
  write_campaign_outputs(dir, report);
  std::cout << report_summary(report);
  std::cout << "\noutputs in " << dir.string() << "\n";
  return kExitOk;
}

int cmd_reproduce(const std::string& config_path, std::uint64_t seed, bool seed_set,
                  const std::string& out) {
  const CampaignConfig config = config_or_default(config_path);
  if (!seed_set) seed = config.seeds.front();
  const CampaignReport report = run_campaign(config, seed);
  const fs::path dir = output_dir(out);
  write_campaign_outputs(dir, report);
  std::cout << report_summary(report);
  std::cout << "\noutputs in " << dir.string() << "\n";
  for (const StageStatus& s : report.stages) {
    if (!s.ok) return exit_code_for_kind(s.error_kind);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Casimir-force campaign simulator and analysis"};
  app.require_subcommand(0, 1);
  bool list = false;
  app.add_flag("--list-defaults", list, "Print the reference constants and exit");

  std::string config_path, out, stage = "scan", mode = "full";
  std::uint64_t seed = 1;
  std::vector<std::string> files;

  auto* sim = app.add_subcommand("simulate", "Write simulated run files");
  sim->add_option("--config", config_path, "Campaign config (JSON)");
  auto* sim_seed = sim->add_option("--seed", seed, "Campaign seed");
  sim->add_option("--stage", stage, "scan | calibration | cancellation | drift")
      ->check(CLI::IsMember({"scan", "calibration", "cancellation", "drift"}));
  sim->add_option("--out", out, "Output directory (default $CASIMIR_OUT_DIR)");

  auto* ana = app.add_subcommand("analyze", "Fit run files");
  ana->add_option("files", files, "Run files")->required();
  ana->add_option("--mode", mode, "calibrate | extract | full")
      ->check(CLI::IsMember({"calibrate", "extract", "full"}));
  ana->add_option("--config", config_path, "Config supplying nominal constants and analysis options");
  ana->add_option("--out", out, "Output directory (default $CASIMIR_OUT_DIR)");

  auto* rep = app.add_subcommand("reproduce", "Run the full campaign and print the comparison");
  rep->add_option("--config", config_path, "Campaign config (JSON)");
  auto* rep_seed = rep->add_option("--seed", seed, "Campaign seed");
  rep->add_option("--out", out, "Output directory (default $CASIMIR_OUT_DIR)");
  bool rep_list = false;
  rep->add_flag("--list-defaults", rep_list, "Print the reference constants and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (list || rep_list) {
      std::cout << list_defaults();
      return kExitOk;
    }
    if (sim->parsed()) return cmd_simulate(config_path, seed, sim_seed->count() > 0, stage, out);
    if (ana->parsed()) return cmd_analyze(files, mode, config_path, out);
    if (rep->parsed()) return cmd_reproduce(config_path, seed, rep_seed->count() > 0, out);
    std::cout << app.help();
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContactError& e) {
    std::cerr << "contact error: " << e.what() << "\n";
    return kExitContact;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
