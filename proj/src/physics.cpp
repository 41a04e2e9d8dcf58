#include "casimir/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "casimir/errors.hpp"

namespace casimir {

namespace {

constexpr double kPi = std::numbers::pi;

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw DomainError(std::string(what) + " must be positive and finite, got " +
                      std::to_string(value));
  }
}

}  // namespace

double PhysicalConstants::kc_theory() const {
  return kPi * planck_h * speed_of_light_c / 480.0;
}

void PhysicalConstants::validate() const {
  for (auto [value, name] : {std::pair{planck_h, "planck_h"}, std::pair{speed_of_light_c, "speed_of_light_c"},
                             std::pair{epsilon0, "epsilon0"}}) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw ConfigError(std::string(name) + ": must be positive and finite", name);
    }
  }
}

double ApparatusConfig::stiffness() const {
  const double omega = 2.0 * kPi * free_frequency;
  return effective_mass * omega * omega;
}

double ApparatusConfig::electrostatic_coefficient(const PhysicalConstants& k) const {
  return k.epsilon0 * plate_area / (4.0 * kPi * kPi * effective_mass);
}

double ApparatusConfig::casimir_shift_coefficient(const PhysicalConstants&) const {
  return casimir_coefficient_true * plate_area / (kPi * kPi * effective_mass);
}

void ApparatusConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg, field);
  };
  if (!(plate_area > 0.0)) fail("plate_area", "must be positive");
  if (!(plate_width > 0.0)) fail("plate_width", "must be positive");
  if (!(cantilever_mass > 0.0)) fail("cantilever_mass", "must be positive");
  if (!(effective_mass > 0.0 && effective_mass < cantilever_mass))
    fail("effective_mass", "must satisfy 0 < m_eff < m0");
  if (!(free_frequency > 0.0)) fail("free_frequency", "must be positive");
  if (!(quality_factor > 1.0)) fail("quality_factor", "must exceed 1");
  if (!(actuation_coefficient > 0.0)) fail("actuation_coefficient", "must be positive");
  if (!(reference_distance > 0.0)) fail("reference_distance", "must be positive");
  if (!(interferometer_sensitivity > 0.0))
    fail("interferometer_sensitivity", "must be positive");
  if (!(casimir_coefficient_true >= 0.0)) fail("casimir_coefficient", "must be non-negative");
  if (!(stray_capacitance >= 0.0)) fail("stray_capacitance", "must be non-negative");
  if (!(bridge_resolution > 0.0)) fail("bridge_resolution", "must be positive");
  if (!std::isfinite(offset_voltage_true)) fail("offset_voltage", "must be finite");
  if (!std::isfinite(distance_correction_true)) fail("distance_correction", "must be finite");
  if (!std::isfinite(shift_offset_true)) fail("shift_offset", "must be finite");
}

ApparatusConfig default_apparatus(const PhysicalConstants& k) {
  namespace p = published;
  ApparatusConfig cfg{};
  cfg.plate_width = p::kPlateSide;
  cfg.plate_area = p::kPlateSide * p::kPlateSide;
  cfg.cantilever_mass = p::kSiliconDensity * p::kCantileverLength * p::kPlateSide *
                        p::kCantileverThickness;
  // Modal mass that reproduces the published C_el exactly.
  cfg.effective_mass =
      k.epsilon0 * cfg.plate_area / (4.0 * kPi * kPi * p::kElectrostaticCoefficient);
  cfg.free_frequency = p::kFreeFrequency;
  cfg.quality_factor = p::kQualityFactor;
  cfg.actuation_coefficient = p::kActuation;
  cfg.reference_distance = p::kReferenceDistance;
  cfg.offset_voltage_true = -p::kDynamicOffsetVoltage;
  cfg.distance_correction_true = p::kDistanceCorrection;
  cfg.interferometer_sensitivity = p::kInterferometerSensitivity;
  cfg.shift_offset_true = p::kShiftOffset;
  cfg.casimir_coefficient_true =
      k.epsilon0 / 4.0 * p::kCasimirShiftCoefficient / p::kElectrostaticCoefficient;
  cfg.stray_capacitance = 0.0;
  cfg.bridge_resolution = p::kBridgeResolution;
  return cfg;
}

CalibrationParams CalibrationParams::from_vector(const Eigen::Vector4d& v,
                                                 const Eigen::Matrix4d& cov) {
  CalibrationParams c;
  c.delta_nu2_offset = v(0);
  c.d0 = v(1);
  c.c_el = v(2);
  c.v0 = v(3);
  c.covariance = cov;
  return c;
}

double CalibrationParams::sigma(int i) const {
  return std::sqrt(std::max(0.0, covariance(i, i)));
}

double WedgeGeometry::half_excursion() const { return std::abs(tilt) * width / 2.0; }

double casimir_pressure(double d, const PhysicalConstants& k) {
  require_positive(d, "gap d");
  const double d2 = d * d;
  return k.kc_theory() / (d2 * d2);
}

double deflection_coefficient(double d, const ApparatusConfig& cfg, const PhysicalConstants& k) {
  require_positive(d, "gap d");
  const double nu0 = cfg.free_frequency;
  return k.epsilon0 * cfg.plate_area / (8.0 * kPi * kPi * cfg.effective_mass * nu0 * nu0 * d * d);
}

double static_deflection(double v_c, double d, const ApparatusConfig& cfg,
                         const PhysicalConstants& k) {
  const double v_r = v_c - cfg.offset_voltage_true;
  return deflection_coefficient(d, cfg, k) * v_r * v_r;
}

double effective_mass_from_deflection(double k_i, double d, const ApparatusConfig& cfg,
                                      const PhysicalConstants& k) {
  require_positive(k_i, "deflection coefficient");
  require_positive(d, "gap d");
  const double nu0 = cfg.free_frequency;
  return k.epsilon0 * cfg.plate_area / (8.0 * kPi * kPi * k_i * nu0 * nu0 * d * d);
}

double frequency_shift_model(double d, double v_r, double c_el, double c_cas) {
  require_positive(d, "gap d");
  const double d3 = d * d * d;
  return -c_el * v_r * v_r / d3 - c_cas / (d3 * d * d);
}

double relative_displacement(double v_pzt, double d_s, const ApparatusConfig& cfg) {
  return cfg.reference_distance - cfg.actuation_coefficient * v_pzt - d_s;
}

double gap_distance(double v_pzt, double d_s, const ApparatusConfig& cfg, double d0) {
  const double d = relative_displacement(v_pzt, d_s, cfg) + d0;
  if (!(d > 0.0)) {
    throw ContactError("plates in contact: gap " + std::to_string(d) + " m at V_PZT = " +
                       std::to_string(v_pzt) + " V");
  }
  return d;
}

double kc_from_coefficients(double c_cas, double c_el, const PhysicalConstants& k) {
  require_positive(c_el, "C_el");
  return k.epsilon0 / 4.0 * c_cas / c_el;
}

double wedge_averaged_shift_excursion(double d, double excursion, double c_cas) {
  require_positive(d, "gap d");
  const double a = std::abs(excursion) / 2.0;
  if (!(d - a > 0.0)) {
    throw DomainError("wedge touches: mean gap " + std::to_string(d) + " m, half excursion " +
                      std::to_string(a) + " m");
  }
  if (a == 0.0) return frequency_shift_model(d, 0.0, 0.0, c_cas);
  // (1/2a) * integral_{-a}^{a} (d + u)^-5 du, written without cancellation.
  const double d2 = d * d;
  const double a2 = a * a;
  const double den = d2 - a2;
  const double den2 = den * den;
  return -c_cas * d * (d2 + a2) / (den2 * den2);
}

double wedge_averaged_shift(double d, const WedgeGeometry& g, double c_cas) {
  if (!(g.width > 0.0) || !(g.length > 0.0)) throw DomainError("wedge dimensions must be positive");
  return wedge_averaged_shift_excursion(d, g.tilt * g.width, c_cas);
}

double tilt_capacitance(double d, const WedgeGeometry& g, const PhysicalConstants& k) {
  require_positive(d, "gap d");
  if (!(g.width > 0.0) || !(g.length > 0.0)) throw DomainError("wedge dimensions must be positive");
  const double a = g.half_excursion();
  if (!(d - a > 0.0)) throw DomainError("wedge touches at the narrow edge");
  const double flat = k.epsilon0 * g.length * g.width / d;
  const double x = a / d;
  if (x == 0.0) return flat;
  // eps0 L / theta * ln((d+a)/(d-a)) = flat * atanh(x) / x
  return flat * std::atanh(x) / x;
}

}  // namespace casimir
