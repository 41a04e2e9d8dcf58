#pragma once

// Closed-form laws of the parallel-plate experiment: vacuum pressure, static
// bending of the cantilever, resonance-shift model, gap bookkeeping and the
// wedge (non-parallel plate) corrections.
//
// Everything is SI: volts, metres, hertz, kilograms. Squared-frequency shifts
// are in Hz^2, C_el in Hz^2 m^3 / V^2, C_Cas in Hz^2 m^5.

#include <Eigen/Core>

namespace casimir {

struct PhysicalConstants {
  double planck_h = 6.62607015e-34;        // J s
  double speed_of_light_c = 299792458.0;   // m / s
  double epsilon0 = 8.8541878128e-12;      // F / m

  /// pi h c / 480, the ideal-conductor parallel-plate pressure coefficient.
  double kc_theory() const;
  void validate() const;
};

// Reference numbers of the published measurement. These seed the default
// ground truth of the simulated apparatus.
namespace published {
inline constexpr double kFreeFrequency = 138.275;          // Hz
inline constexpr double kQualityFactor = 1.0e3;
inline constexpr double kActuation = 1.508e-7;              // m / V
inline constexpr double kActuationSigma = 0.002e-7;
inline constexpr double kReferenceDistance = 1.2e-5;        // m, gap at V_PZT = 0
inline constexpr double kInterferometerSensitivity = 1.0e-7;  // m / V
inline constexpr double kPlateSide = 1.2e-3;                // m
inline constexpr double kCantileverLength = 1.9e-2;         // m
inline constexpr double kCantileverThickness = 47e-6;       // m
inline constexpr double kSiliconDensity = 2330.0;           // kg / m^3

inline constexpr double kStaticOffsetVoltage = -68.6e-3;    // V
inline constexpr double kStaticOffsetVoltageSigma = 2.2e-3;
inline constexpr double kMassRatio = 0.30;                  // m_eff / m0
inline constexpr double kMassRatioSigma = 0.05;

inline constexpr double kShiftOffset = 6.0;                 // Hz^2
inline constexpr double kShiftOffsetSigma = 1.0;
inline constexpr double kDistanceCorrection = -3.30e-7;     // m
inline constexpr double kDistanceCorrectionSigma = 0.32e-7;
inline constexpr double kElectrostaticCoefficient = 4.24e-13;  // Hz^2 m^3 / V^2
inline constexpr double kElectrostaticCoefficientSigma = 0.11e-13;
// Quoted as a positive counterbias; in the V_c - V0 convention the contact
// potential is the negative of this number.
inline constexpr double kDynamicOffsetVoltage = 60.2e-3;    // V
inline constexpr double kDynamicOffsetVoltageSigma = 1.7e-3;
inline constexpr double kCalibrationChi2Probability = 0.85;

inline constexpr double kCasimirShiftCoefficient = 2.34e-28;  // Hz^2 m^5
inline constexpr double kCasimirShiftCoefficientSigma = 0.34e-28;
inline constexpr double kCasimirCoefficient = 1.22e-27;       // N m^2
inline constexpr double kCasimirCoefficientSigma = 0.18e-27;
inline constexpr double kCasimirChi2Probability = 0.61;
inline constexpr int kCasimirPointCount = 9;

inline constexpr double kDriftCasimirCoefficient = 1.24e-27;
inline constexpr double kDriftCasimirCoefficientSigma = 0.10e-27;
inline constexpr double kDriftChi2Probability = 0.55;
inline constexpr double kDriftSpan = 50.0;                  // Hz^2

inline constexpr double kExponent = 5.0;
inline constexpr double kExponentSigma = 0.1;
inline constexpr double kWedgeDeviationSigma = 30e-9;       // m

inline constexpr double kFrequencyStatSigma = 7e-3;         // Hz
inline constexpr double kResolutionBandwidth = 31.25e-3;    // Hz
inline constexpr int kRmsAverages = 2;
inline constexpr double kBridgeResolution = 0.4e-12;        // F
inline constexpr double kMaxCapacitance = 22e-12;           // F
inline constexpr double kParallelismBound = 3e-5;           // rad
inline constexpr double kAcquisitionBudget = 2400.0;        // s
}  // namespace published

// Ground truth of the simulated apparatus plus the nominal constants the
// analysis uses to convert PZT voltage into gap.
struct ApparatusConfig {
  double plate_area;                  // m^2, effective overlap S
  double plate_width;                 // m, side along the first tilt axis
  double cantilever_mass;             // kg, physical mass m0
  double effective_mass;              // kg, torsional-mode modal mass
  double free_frequency;              // Hz
  double quality_factor;
  double actuation_coefficient;       // m / V
  double reference_distance;          // m, d_r at V_PZT = 0
  double offset_voltage_true;         // V, contact potential V0
  double distance_correction_true;    // m, d0
  double interferometer_sensitivity;  // m / V
  double shift_offset_true;           // Hz^2, slow squared-frequency offset
  double casimir_coefficient_true;    // N m^2, K_C
  double stray_capacitance;           // F, additive bridge offset
  double bridge_resolution;           // F

  double plate_length() const { return plate_area / plate_width; }
  double stiffness() const;  // m_eff (2 pi nu0)^2
  double electrostatic_coefficient(const PhysicalConstants& k = {}) const;
  double casimir_shift_coefficient(const PhysicalConstants& k = {}) const;
  double linewidth() const { return free_frequency / quality_factor; }

  void validate() const;
};

/// Apparatus whose derived C_el and C_Cas equal the published fit values.
ApparatusConfig default_apparatus(const PhysicalConstants& k = {});

// Output of the electrostatic calibration. Covariance order:
// {delta_nu2_offset, d0, C_el, V0}.
struct CalibrationParams {
  double delta_nu2_offset = 0.0;  // Hz^2
  double d0 = 0.0;                // m
  double c_el = 0.0;              // Hz^2 m^3 / V^2
  double v0 = 0.0;                // V
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();

  Eigen::Vector4d vector() const { return {delta_nu2_offset, d0, c_el, v0}; }
  static CalibrationParams from_vector(const Eigen::Vector4d& v, const Eigen::Matrix4d& cov);
  double sigma(int i) const;
};

struct CasimirParams {
  double c_cas = 0.0;        // Hz^2 m^5
  double sigma_c_cas = 0.0;
  double k_c = 0.0;          // N m^2
  double sigma_k_c = 0.0;
  double exponent = 5.0;
  double drift_rate = 0.0;   // Hz^2 / s
  // C_el paired with c_cas in the K_C ratio, and their covariance.
  double c_el_used = 0.0;
  double cov_ccas_cel = 0.0;
  double sigma_c_el_used = 0.0;
};

struct WedgeGeometry {
  double tilt = 0.0;   // rad
  double width = published::kPlateSide;
  double length = published::kPlateSide;

  double half_excursion() const;  // |theta| W / 2
};

double casimir_pressure(double d, const PhysicalConstants& k = {});

/// K_i of the static law dx = K_i (V_c - V0)^2, in m / V^2.
double deflection_coefficient(double d, const ApparatusConfig& cfg, const PhysicalConstants& k = {});
double static_deflection(double v_c, double d, const ApparatusConfig& cfg,
                         const PhysicalConstants& k = {});
/// Inverse of deflection_coefficient for the modal mass.
double effective_mass_from_deflection(double k_i, double d, const ApparatusConfig& cfg,
                                      const PhysicalConstants& k = {});

/// -C_el V_r^2 / d^3 - C_Cas / d^5.
double frequency_shift_model(double d, double v_r, double c_el, double c_cas);

/// d_r0 - A V_PZT - d_s + d0; throws ContactError when not positive.
double gap_distance(double v_pzt, double d_s, const ApparatusConfig& cfg, double d0);
/// Relative displacement d_r = d_r0 - A V_PZT - d_s.
double relative_displacement(double v_pzt, double d_s, const ApparatusConfig& cfg);

double kc_from_coefficients(double c_cas, double c_el, const PhysicalConstants& k = {});

/// Width-averaged -C_Cas / gap^5 over a wedge with mean gap d.
double wedge_averaged_shift(double d, const WedgeGeometry& g, double c_cas);
/// Same quantity parametrised by the full edge-to-edge excursion theta*W.
double wedge_averaged_shift_excursion(double d, double excursion, double c_cas);

/// Capacitance of a wedge of mean gap d: eps0 L / theta ln((d + a)/(d - a)).
double tilt_capacitance(double d, const WedgeGeometry& g, const PhysicalConstants& k = {});

}  // namespace casimir
