#include "casimir/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "casimir/errors.hpp"
#include "plot_svg.hpp"

namespace casimir {

namespace {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// File units are decimal powers of SI units. Scaling in binary is not
// invertible (x * 1000 / 1000 != x for a few percent of doubles), so units
// are converted by moving the decimal exponent of the shortest round-trip
// text, which is exact.
std::string shift_decimal(std::string_view text, int k) {
  const auto e = text.find_first_of("eE");
  int exponent = 0;
  if (e != std::string_view::npos) {
    std::from_chars(text.data() + e + 1 + (text[e + 1] == '+'), text.data() + text.size(), exponent);
  }
  std::string_view mantissa = text.substr(0, e);
  std::string sign;
  if (!mantissa.empty() && (mantissa[0] == '-' || mantissa[0] == '+')) {
    if (mantissa[0] == '-') sign = "-";
    mantissa.remove_prefix(1);
  }
  const auto dot = mantissa.find('.');
  std::string digits(mantissa.substr(0, dot));
  if (dot != std::string_view::npos) digits += mantissa.substr(dot + 1);
  long point = static_cast<long>(dot == std::string_view::npos ? mantissa.size() : dot) + exponent + k;

  // Plain notation, trimmed of redundant zeros.
  const auto first = digits.find_first_not_of('0');
  if (first == std::string::npos) return sign + "0";
  digits.erase(0, first);
  point -= static_cast<long>(first);
  digits.erase(digits.find_last_not_of('0') + 1);
  const auto n = static_cast<long>(digits.size());
  if (point > 21 || point < -8) {
    std::string out = sign + digits.substr(0, 1);
    if (n > 1) out += "." + digits.substr(1);
    return out + "e" + std::to_string(point - 1);
  }
  if (point <= 0) return sign + "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  if (point >= n) return sign + digits + std::string(static_cast<std::size_t>(point - n), '0');
  return sign + digits.substr(0, static_cast<std::size_t>(point)) + "." +
         digits.substr(static_cast<std::size_t>(point));
}

int decimal_exponent(double s) { return static_cast<int>(std::lround(std::log10(s))); }

double parse_decimal(const std::string& text) {
  double v = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), v);
  return v;
}

// x (SI) expressed in a unit with scale s = 10^k, and back.
double to_unit(double x, double s) {
  if (s == 1.0 || !std::isfinite(x)) return x;
  return parse_decimal(shift_decimal(format_double(x), decimal_exponent(s)));
}

double from_unit(double y, double s) {
  if (s == 1.0 || !std::isfinite(y)) return y;
  return parse_decimal(shift_decimal(format_double(y), -decimal_exponent(s)));
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Walks a config in either direction so the write and read schemas cannot
// drift apart.
class Binder {
 public:
  enum class Mode { kWrite, kRead };

  Binder(Json& j, Mode mode, std::string path, std::vector<std::string>* keys)
      : j_(j), mode_(mode), path_(std::move(path)), keys_(keys) {}

  void number(const std::string& key, double& v, double scale = 1.0) {
    if (mode_ == Mode::kWrite) {
      j_[key] = to_unit(v, scale);
      record(key);
      return;
    }
    if (const Json* e = find(key)) {
      if (!e->is_number()) fail(key, "expected a number");
      v = from_unit(e->get<double>(), scale);
    }
  }

  void integer(const std::string& key, int& v) {
    if (mode_ == Mode::kWrite) {
      j_[key] = v;
      record(key);
      return;
    }
    if (const Json* e = find(key)) {
      if (!e->is_number_integer()) fail(key, "expected an integer");
      const auto x = e->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        fail(key, "integer out of range");
      v = static_cast<int>(x);
    }
  }

  void flag(const std::string& key, bool& v) {
    if (mode_ == Mode::kWrite) {
      j_[key] = v;
      record(key);
      return;
    }
    if (const Json* e = find(key)) {
      if (!e->is_boolean()) fail(key, "expected true or false");
      v = e->get<bool>();
    }
  }

  void optional_number(const std::string& key, std::optional<double>& v, double scale = 1.0) {
    if (mode_ == Mode::kWrite) {
      j_[key] = v ? Json(to_unit(*v, scale)) : Json(nullptr);
      record(key);
      return;
    }
    if (const Json* e = find(key)) {
      if (e->is_null()) {
        v.reset();
      } else if (e->is_number()) {
        v = from_unit(e->get<double>(), scale);
      } else {
        fail(key, "expected a number or null");
      }
    }
  }

  void numbers(const std::string& key, std::vector<double>& v, double scale = 1.0) {
    if (mode_ == Mode::kWrite) {
      Json arr = Json::array();
      for (double x : v) arr.push_back(to_unit(x, scale));
      j_[key] = std::move(arr);
      record(key);
      return;
    }
    if (const Json* e = find(key)) {
      if (!e->is_array()) fail(key, "expected an array of numbers");
      std::vector<double> out;
      for (const Json& x : *e) {
        if (!x.is_number()) fail(key, "expected an array of numbers");
        out.push_back(from_unit(x.get<double>(), scale));
      }
      v = std::move(out);
    }
  }

  void seeds(const std::string& key, std::vector<std::uint64_t>& v) {
    if (mode_ == Mode::kWrite) {
      j_[key] = v;
      record(key);
      return;
    }
    if (const Json* e = find(key)) {
      if (!e->is_array()) fail(key, "expected an array of non-negative integers");
      std::vector<std::uint64_t> out;
      for (const Json& x : *e) {
        if (!x.is_number_unsigned()) fail(key, "expected an array of non-negative integers");
        out.push_back(x.get<std::uint64_t>());
      }
      v = std::move(out);
    }
  }

  template <class E>
  void choice(const std::string& key, E& v, const std::vector<std::pair<E, std::string>>& names) {
    if (mode_ == Mode::kWrite) {
      for (const auto& [value, name] : names) {
        if (value == v) j_[key] = name;
      }
      record(key);
      return;
    }
    if (const Json* e = find(key)) {
      if (e->is_string()) {
        for (const auto& [value, name] : names) {
          if (name == e->get<std::string>()) {
            v = value;
            return;
          }
        }
      }
      std::string allowed;
      for (const auto& n : names) allowed += (allowed.empty() ? "" : ", ") + n.second;
      fail(key, "expected one of: " + allowed);
    }
  }

  void object(const std::string& key, const std::function<void(Binder&)>& body) {
    if (mode_ == Mode::kWrite) {
      Json child = Json::object();
      Binder b(child, mode_, join(path_, key), keys_);
      body(b);
      j_[key] = std::move(child);
      return;
    }
    if (Json* e = find_mut(key)) {
      if (!e->is_object()) fail(key, "expected an object");
      Binder b(*e, mode_, join(path_, key), keys_);
      body(b);
      b.finish();
    }
  }

  // Unknown keys are an error in read mode.
  void finish() const {
    if (mode_ != Mode::kRead) return;
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        const std::string field = join(path_, item.key());
        throw ConfigError("unknown config key '" + field + "'", field);
      }
    }
  }

 private:
  const Json* find(const std::string& key) { return find_mut(key); }
  Json* find_mut(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  void record(const std::string& key) {
    if (keys_) keys_->push_back(join(path_, key));
  }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const std::string field = join(path_, key);
    throw ConfigError("config key '" + field + "': " + msg, field);
  }

  Json& j_;
  Mode mode_;
  std::string path_;
  std::vector<std::string>* keys_;
  std::set<std::string> seen_;
};

void bind_scan(Binder& b, ScanRange& r) {
  b.number("d_max_um", r.d_max, 1e6);
  b.number("d_min_um", r.d_min, 1e6);
  b.integer("points", r.points);
  b.number("dwell_s", r.dwell);
}

void bind(Binder& b, CampaignConfig& c) {
  b.object("apparatus", [&](Binder& a) {
    ApparatusConfig& x = c.apparatus;
    a.number("plate_area_mm2", x.plate_area, 1e6);
    a.number("plate_width_mm", x.plate_width, 1e3);
    a.number("cantilever_mass_kg", x.cantilever_mass);
    a.number("effective_mass_kg", x.effective_mass);
    a.number("free_frequency_hz", x.free_frequency);
    a.number("quality_factor", x.quality_factor);
    a.number("actuation_coefficient_nm_per_v", x.actuation_coefficient, 1e9);
    a.number("reference_distance_um", x.reference_distance, 1e6);
    a.number("offset_voltage_mv", x.offset_voltage_true, 1e3);
    a.number("distance_correction_nm", x.distance_correction_true, 1e9);
    a.number("interferometer_sensitivity_nm_per_v", x.interferometer_sensitivity, 1e9);
    a.number("shift_offset_hz2", x.shift_offset_true);
    a.number("casimir_coefficient_n_m2", x.casimir_coefficient_true);
    a.number("stray_capacitance_pf", x.stray_capacitance, 1e12);
    a.number("bridge_resolution_pf", x.bridge_resolution, 1e12);
  });
  b.object("noise", [&](Binder& n) {
    NoiseConfig& x = c.noise;
    n.number("frequency_stat_sigma_hz", x.frequency_stat_sigma);
    n.number("spectrum_noise_floor_v_per_rthz", x.spectrum_noise_floor);
    n.number("spectrum_peak_psd_v2_per_hz", x.spectrum_peak_psd);
    n.number("resolution_bandwidth_hz", x.resolution_bandwidth);
    n.integer("rms_averages", x.rms_averages);
    n.number("analyzer_center_hz", x.analyzer_center);
    n.number("analyzer_span_hz", x.analyzer_span);
    n.number("deflection_reading_sigma_v", x.deflection_reading_sigma);
    n.optional_number("laser_drift_amplitude_v", x.laser_drift_amplitude);
  });
  b.object("drift", [&](Binder& d) {
    d.number("shift_drift_rate_hz2_per_s", c.drift.shift_drift_rate);
    d.number("total_span_hz2", c.drift.total_span);
    d.number("thermal_d0_drift_nm_per_s", c.drift.thermal_d0_drift, 1e9);
  });
  b.numbers("bias_mv", c.biases, 1e3);
  b.optional_number("cancellation_bias_mv", c.cancellation_bias, 1e3);
  b.object("calibration_scan", [&](Binder& s) { bind_scan(s, c.calibration_scan); });
  b.object("cancellation_scan", [&](Binder& s) { bind_scan(s, c.cancellation_scan); });
  b.number("drift_variant_span_hz2", c.drift_variant_span);
  b.object("deflection", [&](Binder& d) {
    d.numbers("distances_um", c.deflection.distances, 1e6);
    d.numbers("bias_mv", c.deflection.biases, 1e3);
  });
  b.object("parallelization", [&](Binder& p) {
    ParallelizationConfig& x = c.parallelization;
    p.number("min_gap_um", x.min_gap, 1e6);
    p.number("start_tilt_1_rad", x.start_tilt_1);
    p.number("start_tilt_2_rad", x.start_tilt_2);
    p.number("initial_step_rad", x.initial_step);
    p.number("min_step_rad", x.min_step);
    p.flag("quantized", x.quantized);
  });
  b.object("analysis", [&](Binder& a) {
    AnalysisConfig& x = c.analysis;
    a.integer("casimir_points", x.casimir_points);
    a.choice<PointSelection>("selection", x.selection,
                             {{PointSelection::kFixed, "fixed"},
                              {PointSelection::kMaxProbability, "max_probability"}});
    a.choice<ErrorTreatment>("treatment", x.treatment,
                             {{ErrorTreatment::kJointCalibration, "joint"},
                              {ErrorTreatment::kEffectiveVariance, "effective_variance"}});
    a.flag("per_run_offset", x.per_run_offset);
    a.integer("casimir_correction_passes", x.casimir_correction_passes);
  });
  b.seeds("seeds", c.seeds);
}

// Map a validation field name onto the config key that carries it.
std::string key_for_field(const std::string& field) {
  if (field.empty()) return field;
  std::vector<std::string> keys;
  CampaignConfig scratch;
  Json j = Json::object();
  Binder b(j, Binder::Mode::kWrite, "", &keys);
  bind(b, scratch);
  for (const std::string& k : keys) {
    if (k == field) return k;
  }
  for (const std::string& k : keys) {
    const std::string leaf = k.substr(k.rfind('.') + 1);
    if (leaf == field || leaf.rfind(field + "_", 0) == 0) return k;
  }
  return field;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    a.push_back(std::move(row));
  }
  return a;
}

Json calibration_params_json(const CalibrationParams& c) {
  Json j;
  j["delta_nu2_offset_hz2"] = c.delta_nu2_offset;
  j["d0_m"] = c.d0;
  j["c_el_hz2_m3_per_v2"] = c.c_el;
  j["v0_v"] = c.v0;
  j["sigma"] = {c.sigma(0), c.sigma(1), c.sigma(2), c.sigma(3)};
  j["covariance_order"] = {"delta_nu2_offset", "d0", "c_el", "v0"};
  j["covariance"] = matrix_json(c.covariance);
  return j;
}

Json casimir_params_json(const CasimirParams& c) {
  Json j;
  j["c_cas_hz2_m5"] = c.c_cas;
  j["sigma_c_cas"] = c.sigma_c_cas;
  j["k_c_n_m2"] = c.k_c;
  j["sigma_k_c"] = c.sigma_k_c;
  j["c_el_used"] = c.c_el_used;
  j["sigma_c_el_used"] = c.sigma_c_el_used;
  j["cov_c_cas_c_el"] = c.cov_ccas_cel;
  j["exponent"] = c.exponent;
  j["drift_rate_hz2_per_s"] = c.drift_rate;
  return j;
}

Json drift_json(const DriftFit& d) {
  Json j;
  j["drift_fitted"] = d.drift_fitted;
  j["drift_rate_hz2_per_s"] = d.drift_rate;
  j["sigma_drift_rate"] = d.sigma_drift_rate;
  j["calibration"] = calibration_params_json(d.calibration);
  j["casimir"] = casimir_params_json(d.casimir);
  j["fit"] = fit_to_json(d.fit);
  return j;
}

std::string sci(double x, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::string fixed(double x, int digits = 2) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' ');
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory " + dir.string() + ": " + ec.message(), "out");
}

}  // namespace

// ------------------------------------------------------------------ config

Json config_to_json(const CampaignConfig& config) {
  CampaignConfig copy = config;
  Json j = Json::object();
  Binder b(j, Binder::Mode::kWrite, "", nullptr);
  bind(b, copy);
  return j;
}

CampaignConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object", "");
  CampaignConfig c = default_campaign();
  Json copy = j;
  Binder b(copy, Binder::Mode::kRead, "", nullptr);
  bind(b, c);
  b.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    const std::string key = key_for_field(e.field());
    throw ConfigError("invalid config (" + key + "): " + e.what(), key);
  }
  return c;
}

CampaignConfig config_from_string(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what(), "");
  }
  return config_from_json(j);
}

CampaignConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string(), "config");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return config_from_string(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what(), e.field());
  }
}

std::string config_to_string(const CampaignConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::string config_hash(const CampaignConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(config_to_json(config).dump())));
  return buf;
}

// ---------------------------------------------------------------- run data

void write_run(std::ostream& os, const MeasurementRun& run) {
  os << "# label: " << run.label << "\n";
  os << "# role: " << run.role << "\n";
  os << "# seed: " << run.seed << "\n";
  os << "# config_hash: " << run.config_hash << "\n";
  os << kRunColumns << "\n";
  for (const RunPoint& p : run.points) {
    os << format_double(p.v_pzt) << ',' << shift_decimal(format_double(p.v_c), 3) << ','
       << format_double(p.t) << ',' << format_double(p.delta_nu2) << ','
       << format_double(p.sigma_delta_nu2) << ',' << format_double(p.d_s) << "\n";
  }
}

std::string run_to_string(const MeasurementRun& run) {
  std::ostringstream os;
  write_run(os, run);
  return os.str();
}

MeasurementRun parse_run(std::istream& is, const std::string& source) {
  MeasurementRun run;
  std::string line;
  int lineno = 0;
  bool header = false;
  auto fail = [&](const std::string& msg) {
    throw DataError(source + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header) fail("metadata after the column header");
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string key = line.substr(1, colon - 1);
      std::string value = line.substr(colon + 1);
      auto trim = [](std::string& s) {
        s.erase(0, s.find_first_not_of(' '));
        s.erase(s.find_last_not_of(' ') + 1);
      };
      trim(key);
      trim(value);
      if (key == "label") {
        run.label = value;
      } else if (key == "role") {
        run.role = value;
      } else if (key == "seed") {
        const auto r = std::from_chars(value.data(), value.data() + value.size(), run.seed);
        if (r.ec != std::errc() || r.ptr != value.data() + value.size()) fail("bad seed");
      } else if (key == "config_hash") {
        run.config_hash = value;
      }
      continue;
    }
    if (!header) {
      if (line != kRunColumns) fail("expected column header '" + std::string(kRunColumns) + "'");
      header = true;
      continue;
    }
    double v[6];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int i = 0; i < 6; ++i) {
      const auto r = std::from_chars(p, end, v[i]);
      if (r.ec != std::errc()) fail("column " + std::to_string(i + 1) + " is not a number");
      // Millivolts: rescale the decimal text, not the parsed double.
      if (i == 1) v[i] = parse_decimal(shift_decimal(std::string_view(p, static_cast<std::size_t>(r.ptr - p)), -3));
      p = r.ptr;
      if (i < 5) {
        if (p == end || *p != ',') fail("expected 6 comma-separated columns");
        ++p;
      }
    }
    if (p != end) fail("trailing characters after 6 columns");
    run.points.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  if (!header) throw DataError(source + ": missing column header");
  return run;
}

MeasurementRun run_from_string(const std::string& text) {
  std::istringstream is(text);
  return parse_run(is);
}

MeasurementRun load_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run file " + path.string());
  return parse_run(in, path.string());
}

void save_run(const std::filesystem::path& path, const MeasurementRun& run) {
  write_text_file(path, run_to_string(run));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string(), "out");
  out << text;
}

// ------------------------------------------------------------------ report

Json fit_to_json(const FitResult& fit) {
  Json j;
  j["names"] = fit.names;
  j["parameters"] = vector_json(fit.parameters);
  j["covariance"] = matrix_json(fit.covariance);
  j["chi2"] = fit.chi2;
  j["dof"] = fit.dof;
  j["chi2_probability"] = fit.chi2_probability;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  return j;
}

Json calibration_to_json(const CalibrationFit& fit) {
  Json j;
  j["params"] = calibration_params_json(fit.params);
  j["run_offsets_hz2"] = fit.run_offsets;
  j["drift_rate_hz2_per_s"] = fit.drift_rate;
  j["fit"] = fit_to_json(fit.fit);
  return j;
}

Json extraction_to_json(const ExtractionResult& e) {
  Json j;
  j["cancellation_bias_v"] = e.cancellation_bias;
  j["correction_passes"] = e.correction_passes;
  j["calibration_used"] = calibration_to_json(e.calibration);
  Json cas;
  cas["params"] = casimir_params_json(e.casimir.params);
  cas["n_used"] = e.casimir.n_used;
  cas["sign_anomaly"] = e.casimir.sign_anomaly;
  cas["fit"] = fit_to_json(e.casimir.fit);
  Json scan = Json::array();
  for (const SelectionEntry& s : e.casimir.scan) {
    scan.push_back({{"n", s.n},
                    {"ok", s.ok},
                    {"c_cas", s.c_cas},
                    {"sigma_c_cas", s.sigma_c_cas},
                    {"chi2", s.chi2},
                    {"dof", s.dof},
                    {"chi2_probability", s.chi2_probability}});
  }
  cas["selection_scan"] = std::move(scan);
  j["casimir"] = std::move(cas);
  if (e.exponent) {
    j["exponent"] = {{"exponent", e.exponent->exponent},
                     {"sigma_exponent", e.exponent->sigma_exponent},
                     {"amplitude_hz2", e.exponent->amplitude},
                     {"sigma_amplitude", e.exponent->sigma_amplitude},
                     {"reference_gap_m", e.exponent->reference_gap},
                     {"fit", fit_to_json(e.exponent->fit)}};
  } else {
    j["exponent"] = nullptr;
  }
  if (e.wedge) {
    j["wedge"] = {{"excursion_sq_m2", e.wedge->excursion_sq},
                  {"sigma_excursion_sq", e.wedge->sigma_excursion_sq},
                  {"deviation_m", e.wedge->deviation},
                  {"sigma_deviation_m", e.wedge->sigma_deviation},
                  {"c_cas_hz2_m5", e.wedge->c_cas},
                  {"sigma_c_cas", e.wedge->sigma_c_cas},
                  {"fit", fit_to_json(e.wedge->fit)}};
  } else {
    j["wedge"] = nullptr;
  }
  j["drift"] = e.drift ? drift_json(*e.drift) : Json(nullptr);
  j["drift_null"] = e.drift_null ? drift_json(*e.drift_null) : Json(nullptr);
  j["warnings"] = e.warnings;
  return j;
}

Json comparison_to_json(const std::vector<ComparisonRow>& rows) {
  Json a = Json::array();
  for (const ComparisonRow& r : rows) {
    a.push_back({{"name", r.name},
                 {"unit", r.unit},
                 {"published", r.published},
                 {"published_sigma", r.published_sigma},
                 {"recovered", r.recovered},
                 {"recovered_sigma", r.recovered_sigma},
                 {"truth", r.truth},
                 {"pull_truth", r.pull_truth},
                 {"z_published", r.z_published},
                 {"informational", r.informational}});
  }
  return a;
}

Json report_to_json(const CampaignReport& r) {
  Json j;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["config"] = config_to_json(r.config);
  Json stages = Json::array();
  for (const StageStatus& s : r.stages) {
    stages.push_back(
        {{"stage", s.stage}, {"ok", s.ok}, {"error_kind", s.error_kind}, {"message", s.message}});
  }
  j["stages"] = std::move(stages);
  if (r.parallelization) {
    const ParallelizationResult& p = *r.parallelization;
    Json trace = Json::array();
    for (const CapacitanceSample& s : p.trace) trace.push_back({s.tilt_1, s.tilt_2, s.capacitance});
    j["parallelization"] = {{"tilt_1_rad", p.tilt_1},
                            {"tilt_2_rad", p.tilt_2},
                            {"residual_tilt_rad", p.residual_tilt},
                            {"capacitance_f", p.capacitance},
                            {"flat_capacitance_f", p.flat_capacitance},
                            {"aborted", p.aborted},
                            {"trace_columns", {"tilt_1_rad", "tilt_2_rad", "capacitance_f"}},
                            {"trace", std::move(trace)}};
  } else {
    j["parallelization"] = nullptr;
  }
  if (r.offset) {
    const OffsetVoltageResult& o = *r.offset;
    j["offset_voltage"] = {{"v0_v", o.v0},
                           {"sigma_v0", o.sigma_v0},
                           {"distances_m", o.distances},
                           {"v0_each_v", o.v0_each},
                           {"k_i_m_per_v2", o.k_i},
                           {"effective_mass_kg", o.effective_mass},
                           {"sigma_effective_mass", o.sigma_effective_mass},
                           {"mass_ratio", o.mass_ratio},
                           {"sigma_mass_ratio", o.sigma_mass_ratio}};
  } else {
    j["offset_voltage"] = nullptr;
  }
  if (r.calibration) {
    Json c = calibration_to_json(r.calibration->fit);
    c["chi2_in_band"] = r.calibration->chi2_in_band;
    j["calibration"] = std::move(c);
  } else {
    j["calibration"] = nullptr;
  }
  j["extraction"] = r.extraction ? extraction_to_json(*r.extraction) : Json(nullptr);
  j["comparison"] = comparison_to_json(r.comparison);
  return j;
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << pad("parameter", 30) << pad("unit", 16) << pad("published", 22) << pad("recovered", 24)
     << pad("truth", 12) << pad("pull", 8) << "z_pub\n";
  for (const ComparisonRow& r : rows) {
    os << pad(r.name + (r.informational ? " (i)" : ""), 30) << pad(r.unit, 16)
       << pad(sci(r.published) + " +- " + sci(r.published_sigma, 2), 22)
       << pad(sci(r.recovered) + " +- " + sci(r.recovered_sigma, 2), 24) << pad(sci(r.truth), 12)
       << pad(fixed(r.pull_truth), 8) << fixed(r.z_published) << "\n";
  }
  os << "(i) informational, excluded from the |z| < 3 gate\n";
  return os.str();
}

std::string report_summary(const CampaignReport& r) {
  std::ostringstream os;
  os << "seed " << r.seed << ", config " << r.config_hash << "\n\n";
  for (const StageStatus& s : r.stages) {
    os << pad(s.stage, 16) << (s.ok ? "ok" : "FAILED [" + s.error_kind + "] " + s.message) << "\n";
  }
  os << "\n" << comparison_table(r.comparison);
  if (r.extraction && !r.extraction->warnings.empty()) {
    os << "\nwarnings:\n";
    for (const std::string& w : r.extraction->warnings) os << "  " << w << "\n";
  }
  return os.str();
}

std::string list_defaults() {
  namespace p = published;
  struct Entry {
    const char* name;
    double value;
    const char* unit;
    const char* source;
  };
  const Entry entries[] = {
      {"free_frequency", p::kFreeFrequency, "Hz", "torsional-mode resonance, measured"},
      {"quality_factor", p::kQualityFactor, "", "mechanical Q in vacuum, measured"},
      {"actuation_coefficient", p::kActuation, "m/V", "PZT calibration, measured"},
      {"actuation_coefficient_sigma", p::kActuationSigma, "m/V", "PZT calibration uncertainty"},
      {"reference_distance", p::kReferenceDistance, "m", "gap at zero PZT voltage, assumed"},
      {"interferometer_sensitivity", p::kInterferometerSensitivity, "m/V", "fiber interferometer, nominal"},
      {"plate_side", p::kPlateSide, "m", "overlap square side"},
      {"cantilever_length", p::kCantileverLength, "m", "resonator geometry"},
      {"cantilever_thickness", p::kCantileverThickness, "m", "resonator geometry"},
      {"silicon_density", p::kSiliconDensity, "kg/m^3", "bulk silicon"},
      {"static_offset_voltage", p::kStaticOffsetVoltage, "V", "deflection-parabola vertex average"},
      {"static_offset_voltage_sigma", p::kStaticOffsetVoltageSigma, "V", "scatter over distances"},
      {"mass_ratio", p::kMassRatio, "", "m_eff / m0 from static deflection"},
      {"mass_ratio_sigma", p::kMassRatioSigma, "", "static deflection uncertainty"},
      {"shift_offset", p::kShiftOffset, "Hz^2", "global electrostatic fit"},
      {"shift_offset_sigma", p::kShiftOffsetSigma, "Hz^2", "global electrostatic fit"},
      {"distance_correction", p::kDistanceCorrection, "m", "global electrostatic fit, d0"},
      {"distance_correction_sigma", p::kDistanceCorrectionSigma, "m", "global electrostatic fit"},
      {"electrostatic_coefficient", p::kElectrostaticCoefficient, "Hz^2 m^3/V^2", "global electrostatic fit, C_el"},
      {"electrostatic_coefficient_sigma", p::kElectrostaticCoefficientSigma, "Hz^2 m^3/V^2", "global electrostatic fit"},
      {"dynamic_offset_voltage", p::kDynamicOffsetVoltage, "V", "global electrostatic fit, counterbias magnitude"},
      {"dynamic_offset_voltage_sigma", p::kDynamicOffsetVoltageSigma, "V", "global electrostatic fit"},
      {"calibration_chi2_probability", p::kCalibrationChi2Probability, "", "global electrostatic fit"},
      {"casimir_shift_coefficient", p::kCasimirShiftCoefficient, "Hz^2 m^5", "near-cancellation fit, C_Cas"},
      {"casimir_shift_coefficient_sigma", p::kCasimirShiftCoefficientSigma, "Hz^2 m^5", "near-cancellation fit"},
      {"casimir_coefficient", p::kCasimirCoefficient, "N m^2", "K_C from C_Cas and C_el"},
      {"casimir_coefficient_sigma", p::kCasimirCoefficientSigma, "N m^2", "propagated"},
      {"casimir_chi2_probability", p::kCasimirChi2Probability, "", "near-cancellation fit"},
      {"casimir_point_count", static_cast<double>(p::kCasimirPointCount), "", "smallest-gap points, chi2 analysis"},
      {"drift_casimir_coefficient", p::kDriftCasimirCoefficient, "N m^2", "drift-augmented global fit"},
      {"drift_casimir_coefficient_sigma", p::kDriftCasimirCoefficientSigma, "N m^2", "drift-augmented global fit"},
      {"drift_chi2_probability", p::kDriftChi2Probability, "", "drift-augmented global fit"},
      {"drift_span", p::kDriftSpan, "Hz^2", "injected linear drift span"},
      {"exponent", p::kExponent, "", "free-exponent fit"},
      {"exponent_sigma", p::kExponentSigma, "", "free-exponent fit"},
      {"wedge_deviation_sigma", p::kWedgeDeviationSigma, "m", "non-parallel plate refit"},
      {"frequency_stat_sigma", p::kFrequencyStatSigma, "Hz", "Lorentzian centre scatter"},
      {"resolution_bandwidth", p::kResolutionBandwidth, "Hz", "analyzer setting"},
      {"rms_averages", static_cast<double>(p::kRmsAverages), "", "analyzer setting"},
      {"bridge_resolution", p::kBridgeResolution, "F", "capacitance bridge quantum"},
      {"max_capacitance", p::kMaxCapacitance, "F", "parallelization, best reading"},
      {"parallelism_bound", p::kParallelismBound, "rad", "30 nm over 1.2 mm"},
      {"acquisition_budget", p::kAcquisitionBudget, "s", "per-run acquisition time"},
  };
  std::ostringstream os;
  os << pad("constant", 34) << pad("value", 14) << pad("unit", 14) << "source\n";
  for (const Entry& e : entries) {
    os << pad(e.name, 34) << pad(sci(e.value, 6), 14) << pad(e.unit, 14) << e.source << "\n";
  }
  return os.str();
}

// ------------------------------------------------------------------- plots

void write_calibration_plot(const std::filesystem::path& dir,
                            const std::vector<MeasurementRun>& runs, const CalibrationParams& cal,
                            const ApparatusConfig& nominal) {
  ensure_dir(dir);
  std::ostringstream csv;
  csv << "run,kind,d_r_m,delta_nu2_hz2,sigma_delta_nu2_hz2\n";
  std::vector<plot::Series> series;
  for (const MeasurementRun& run : runs) {
    plot::Series pts{run.label, {}, {}, {}, false};
    double lo = 1e9, hi = 0.0;
    for (const RunPoint& p : run.points) {
      const double dr = relative_displacement(p.v_pzt, p.d_s, nominal);
      pts.x.push_back(dr * 1e6);
      pts.y.push_back(p.delta_nu2);
      pts.err.push_back(p.sigma_delta_nu2);
      lo = std::min(lo, dr);
      hi = std::max(hi, dr);
      csv << run.label << ",data," << format_double(dr) << ',' << format_double(p.delta_nu2) << ','
          << format_double(p.sigma_delta_nu2) << "\n";
    }
    plot::Series model{run.label + " fit", {}, {}, {}, true};
    const double v_r = run.bias() - cal.v0;
    for (int i = 0; i <= 100 && hi > lo; ++i) {
      const double dr = lo + (hi - lo) * i / 100.0;
      const double d = dr + cal.d0;
      if (d <= 0.0) continue;
      const double y = -cal.delta_nu2_offset + frequency_shift_model(d, v_r, cal.c_el, 0.0);
      model.x.push_back(dr * 1e6);
      model.y.push_back(y);
      csv << run.label << ",model," << format_double(dr) << ',' << format_double(y) << ",0\n";
    }
    series.push_back(std::move(pts));
    series.push_back(std::move(model));
  }
  write_text_file(dir / "calibration.csv", csv.str());
  write_text_file(dir / "calibration.svg",
                  plot::render("Electrostatic calibration", "d_r [um]", "delta nu^2 [Hz^2]", series));
}

void write_residual_plot(const std::filesystem::path& dir, const ExtractionResult& e) {
  ensure_dir(dir);
  std::ostringstream csv;
  csv << "kind,d_m,residual_hz2,sigma_hz2,used\n";
  plot::Series used{"used points", {}, {}, {}, false};
  plot::Series rest{"other points", {}, {}, {}, false};
  double lo = 1e9, hi = 0.0;
  for (std::size_t i = 0; i < e.residuals.points.size(); ++i) {
    const ResidualPoint& p = e.residuals.points[i];
    const bool in = static_cast<int>(i) < e.casimir.n_used;
    plot::Series& s = in ? used : rest;
    s.x.push_back(p.d * 1e6);
    s.y.push_back(p.residual);
    s.err.push_back(p.sigma_y);
    if (in) {
      lo = std::min(lo, p.d);
      hi = std::max(hi, p.d);
    }
    csv << "data," << format_double(p.d) << ',' << format_double(p.residual) << ','
        << format_double(p.sigma_y) << ',' << (in ? 1 : 0) << "\n";
  }
  plot::Series model{"-C_Cas / d^5", {}, {}, {}, true};
  for (int i = 0; i <= 100 && hi > lo; ++i) {
    const double d = lo + (hi - lo) * i / 100.0;
    const double y = -e.casimir.params.c_cas / std::pow(d, 5);
    model.x.push_back(d * 1e6);
    model.y.push_back(y);
    csv << "model," << format_double(d) << ',' << format_double(y) << ",0,1\n";
  }
  write_text_file(dir / "residuals.csv", csv.str());
  write_text_file(dir / "residuals.svg",
                  plot::render("Residual after electrostatic subtraction", "d [um]",
                               "residual delta nu^2 [Hz^2]", {used, rest, model}));
}

void write_selection_plot(const std::filesystem::path& dir, const CasimirFit& fit) {
  ensure_dir(dir);
  std::ostringstream csv;
  csv << "n,ok,chi2,dof,chi2_probability,c_cas_hz2_m5,sigma_c_cas\n";
  plot::Series s{"chi2 probability", {}, {}, {}, true};
  for (const SelectionEntry& e : fit.scan) {
    csv << e.n << ',' << (e.ok ? 1 : 0) << ',' << format_double(e.chi2) << ',' << e.dof << ','
        << format_double(e.chi2_probability) << ',' << format_double(e.c_cas) << ','
        << format_double(e.sigma_c_cas) << "\n";
    if (e.ok) {
      s.x.push_back(e.n);
      s.y.push_back(e.chi2_probability);
    }
  }
  plot::Series chosen{"selected", {}, {}, {}, false};
  for (const SelectionEntry& e : fit.scan) {
    if (e.ok && e.n == fit.n_used) {
      chosen.x.push_back(e.n);
      chosen.y.push_back(e.chi2_probability);
    }
  }
  write_text_file(dir / "selection.csv", csv.str());
  write_text_file(dir / "selection.svg",
                  plot::render("Point-count scan", "n smallest gaps", "chi2 probability", {s, chosen}));
}

void write_campaign_outputs(const std::filesystem::path& dir, const CampaignReport& report) {
  ensure_dir(dir);
  write_text_file(dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_text_file(dir / "summary.txt", report_summary(report));
  auto save = [&](const MeasurementRun& run) {
    MeasurementRun r = run;
    r.config_hash = report.config_hash;
    save_run(dir / "runs" / (r.label + ".csv"), r);
  };
  if (report.calibration) {
    for (const MeasurementRun& run : report.calibration->runs) save(run);
    write_calibration_plot(dir / "plots", report.calibration->runs,
                           report.calibration->fit.params, report.config.apparatus);
  }
  if (report.extraction) {
    save(report.extraction->run);
    for (const MeasurementRun& run : report.extraction->drift_runs) save(run);
    write_residual_plot(dir / "plots", *report.extraction);
    write_selection_plot(dir / "plots", report.extraction->casimir);
  }
}

}  // namespace casimir
