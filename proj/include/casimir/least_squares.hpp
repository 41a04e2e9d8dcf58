#pragma once

// Weighted nonlinear least squares (damped Gauss-Newton with a
// Levenberg-Marquardt damping schedule) and chi-square tail probabilities.

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace casimir {

// A fit problem expressed as a vector of already-weighted residuals
// (data - model) / sigma. Prior constraints are appended as extra rows.
struct ModelFunction {
  std::size_t parameter_count = 0;
  std::size_t residual_count = 0;
  std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r)> residuals;
  // Optional analytic Jacobian d r / d p (residual_count x parameter_count).
  std::function<void(const Eigen::VectorXd& p, Eigen::MatrixXd& jac)> jacobian;
  std::vector<std::string> parameter_names;
};

struct LmOptions {
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double damping_down = 0.3;
  double damping_up = 2.0;
  double relative_chi2_tolerance = 1e-10;
  double step_tolerance = 1e-12;
  // Finite-difference step relative to max(|p_i|, fd_scale_i).
  double fd_relative_step = 1e-6;
  Eigen::VectorXd fd_scale;  // empty: ones
  // Called with the model and the starting point before the first iteration.
  std::function<void(const ModelFunction&, const Eigen::VectorXd&)> on_start;
};

struct FitResult {
  Eigen::VectorXd parameters;
  Eigen::MatrixXd covariance;
  std::vector<std::string> names;
  double chi2 = 0.0;
  int dof = 0;
  double chi2_probability = 0.0;
  bool converged = false;
  int iterations = 0;
  // Weighted chi-square after every accepted iteration, starting point first.
  std::vector<double> chi2_trace;

  double sigma(Eigen::Index i) const;
  double correlation(Eigen::Index i, Eigen::Index j) const;
};

/// Minimise |r(p)|^2. Throws DegeneracyError when the normal matrix at the
/// optimum is singular and DataError when dof < 1. Hitting the iteration
/// cap returns the partial result with converged = false.
FitResult lm_fit(const ModelFunction& model, const Eigen::VectorXd& initial,
                 const LmOptions& options = {});

/// Central finite-difference Jacobian of model.residuals.
Eigen::MatrixXd numeric_jacobian(const ModelFunction& model, const Eigen::VectorXd& p,
                                 const LmOptions& options = {});

/// Upper-tail probability Q(chi2 | dof) of the chi-square distribution.
double chi2_probability(double chi2, int dof);

}  // namespace casimir
