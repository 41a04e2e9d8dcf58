#pragma once

// File formats: campaign config (JSON with unit-suffixed keys), run data
// (delimited text with '#' metadata), the JSON report and the plot views.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "casimir/pipeline.hpp"
#include "json.hpp"

namespace casimir {

using Json = nlohmann::ordered_json;

// ------------------------------------------------------------------ config

Json config_to_json(const CampaignConfig& config);
/// Missing keys keep their defaults; unknown keys and wrong types throw
/// ConfigError naming the dotted key path. The result is validated.
CampaignConfig config_from_json(const Json& j);
CampaignConfig config_from_string(const std::string& text);
CampaignConfig load_config(const std::filesystem::path& path);
std::string config_to_string(const CampaignConfig& config);

/// FNV-1a 64 over the canonical config text, 16 hex digits.
std::string config_hash(const CampaignConfig& config);

// ---------------------------------------------------------------- run data

inline constexpr const char* kRunColumns =
    "v_pzt_volt,v_c_mv,t_s,delta_nu2_hz2,sigma_delta_nu2_hz2,d_s_m";

void write_run(std::ostream& os, const MeasurementRun& run);
std::string run_to_string(const MeasurementRun& run);
/// Throws DataError with the line number on malformed input.
MeasurementRun parse_run(std::istream& is, const std::string& source = "<stream>");
MeasurementRun run_from_string(const std::string& text);
MeasurementRun load_run(const std::filesystem::path& path);
void save_run(const std::filesystem::path& path, const MeasurementRun& run);

// ------------------------------------------------------------------ report

Json fit_to_json(const FitResult& fit);
Json calibration_to_json(const CalibrationFit& fit);
Json extraction_to_json(const ExtractionResult& e);
Json comparison_to_json(const std::vector<ComparisonRow>& rows);
Json report_to_json(const CampaignReport& report);

/// Published vs recovered, one row per parameter, with pull columns.
std::string comparison_table(const std::vector<ComparisonRow>& rows);
std::string report_summary(const CampaignReport& report);

/// Every reference constant with a short description of where it comes from.
std::string list_defaults();

// ------------------------------------------------------------------- plots

/// Δν² vs d_r for the calibration runs with the fitted model overlaid.
void write_calibration_plot(const std::filesystem::path& dir, const std::vector<MeasurementRun>& runs,
                            const CalibrationParams& cal, const ApparatusConfig& nominal);
/// Electrostatic residuals vs d with the fitted Casimir law.
void write_residual_plot(const std::filesystem::path& dir, const ExtractionResult& e);
/// n vs χ² probability of the point-count scan.
void write_selection_plot(const std::filesystem::path& dir, const CasimirFit& fit);

/// report.json, summary.txt, runs/*.csv and plots/* under dir.
void write_campaign_outputs(const std::filesystem::path& dir, const CampaignReport& report);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace casimir
