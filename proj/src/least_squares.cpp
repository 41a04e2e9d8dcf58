#include "casimir/least_squares.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <string>

#include "casimir/errors.hpp"

namespace casimir {

namespace {

bool evaluate(const ModelFunction& model, const Eigen::VectorXd& p, Eigen::VectorXd& r,
              double& chi2) {
  r.resize(static_cast<Eigen::Index>(model.residual_count));
  try {
    model.residuals(p, r);
  } catch (const DomainError&) {
    return false;
  } catch (const ContactError&) {
    return false;
  }
  if (!r.allFinite()) return false;
  chi2 = r.squaredNorm();
  return true;
}

Eigen::MatrixXd jacobian_at(const ModelFunction& model, const Eigen::VectorXd& p,
                            const LmOptions& options) {
  if (model.jacobian) {
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(model.residual_count), p.size());
    model.jacobian(p, jac);
    return jac;
  }
  return numeric_jacobian(model, p, options);
}

// Covariance (J^T J)^-1 computed on column-equilibrated J.
Eigen::MatrixXd covariance_from(const Eigen::MatrixXd& jac) {
  const Eigen::Index n = jac.cols();
  Eigen::VectorXd scale(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double norm = jac.col(j).norm();
    if (!(norm > 0.0)) {
      throw DegeneracyError("parameter " + std::to_string(j) + " does not influence the fit");
    }
    scale(j) = 1.0 / norm;
  }
  const Eigen::MatrixXd js = jac * scale.asDiagonal();
  const Eigen::MatrixXd normal = js.transpose() * js;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
  const double max_ev = eig.eigenvalues().maxCoeff();
  const double min_ev = eig.eigenvalues().minCoeff();
  if (!(min_ev > 1e-14 * max_ev)) {
    throw DegeneracyError("singular normal matrix (condition " +
                          std::to_string(max_ev / std::max(min_ev, 1e-300)) + ")");
  }
  const Eigen::MatrixXd inv = eig.eigenvectors() *
                              eig.eigenvalues().cwiseInverse().asDiagonal() *
                              eig.eigenvectors().transpose();
  Eigen::MatrixXd cov = scale.asDiagonal() * inv * scale.asDiagonal();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

double FitResult::sigma(Eigen::Index i) const {
  return std::sqrt(std::max(0.0, covariance(i, i)));
}

double FitResult::correlation(Eigen::Index i, Eigen::Index j) const {
  const double s = sigma(i) * sigma(j);
  return s > 0.0 ? covariance(i, j) / s : 0.0;
}

Eigen::MatrixXd numeric_jacobian(const ModelFunction& model, const Eigen::VectorXd& p,
                                 const LmOptions& options) {
  const auto m = static_cast<Eigen::Index>(model.residual_count);
  Eigen::MatrixXd jac(m, p.size());
  Eigen::VectorXd rp(m), rm(m);
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double scale = options.fd_scale.size() == p.size() ? options.fd_scale(j) : 1.0;
    const double h = options.fd_relative_step * std::max(std::abs(p(j)), scale);
    Eigen::VectorXd pp = p, pm = p;
    pp(j) += h;
    pm(j) -= h;
    model.residuals(pp, rp);
    model.residuals(pm, rm);
    jac.col(j) = (rp - rm) / (2.0 * h);
  }
  return jac;
}

FitResult lm_fit(const ModelFunction& model, const Eigen::VectorXd& initial,
                 const LmOptions& options) {
  const auto n = static_cast<Eigen::Index>(model.parameter_count);
  if (initial.size() != n) throw ConfigError("initial parameter vector has wrong size");
  const int dof = static_cast<int>(model.residual_count) - static_cast<int>(n);
  if (dof < 1) {
    throw DataError("fit needs at least one degree of freedom (" +
                    std::to_string(model.residual_count) + " residuals, " + std::to_string(n) +
                    " parameters)");
  }

  FitResult out;
  out.names = model.parameter_names;
  out.dof = dof;

  if (options.on_start) options.on_start(model, initial);
  Eigen::VectorXd p = initial;
  Eigen::VectorXd r;
  double chi2 = 0.0;
  if (!evaluate(model, p, r, chi2)) {
    throw DomainError("residuals are not finite at the initial parameters");
  }
  out.chi2_trace.push_back(chi2);

  double lambda = options.initial_damping;
  Eigen::MatrixXd jac = jacobian_at(model, p, options);
  bool converged = false;
  int iter = 0;
  Eigen::VectorXd r_trial;
  for (; iter < options.max_iterations && !converged; ++iter) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    bool accepted = false;
    // Inner loop: raise damping until a step lowers chi2.
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double diag = jtj(k, k) > 0.0 ? jtj(k, k) : 1.0;
        a(k, k) += lambda * diag;
      }
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      if (!step.allFinite()) {
        lambda *= options.damping_up;
        continue;
      }
      const Eigen::VectorXd trial = p + step;
      double chi2_trial = 0.0;
      if (evaluate(model, trial, r_trial, chi2_trial) && chi2_trial <= chi2) {
        double rel_step = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double ref = std::max(std::abs(p(k)), 1.0 / std::sqrt(std::max(jtj(k, k), 1e-300)));
          rel_step = std::max(rel_step, std::abs(step(k)) / ref);
        }
        const double drop = chi2 - chi2_trial;
        p = trial;
        r = r_trial;
        const double chi2_prev = chi2;
        chi2 = chi2_trial;
        out.chi2_trace.push_back(chi2);
        lambda = std::max(lambda * options.damping_down, 1e-15);
        accepted = true;
        if (drop <= options.relative_chi2_tolerance * std::max(chi2_prev, 1e-300) ||
            rel_step < options.step_tolerance) {
          converged = true;
        }
        break;
      }
      lambda *= options.damping_up;
    }
    if (!accepted) {
      // No descent direction left: already at a minimum to machine precision.
      converged = true;
      break;
    }
    jac = jacobian_at(model, p, options);
  }

  out.parameters = p;
  out.chi2 = chi2;
  out.iterations = iter;
  out.converged = converged;
  out.covariance = covariance_from(jac);
  out.chi2_probability = chi2_probability(chi2, dof);
  return out;
}

double chi2_probability(double chi2, int dof) {
  if (dof < 1) throw DomainError("chi2_probability: dof must be >= 1");
  if (!(chi2 >= 0.0) || !std::isfinite(chi2)) {
    throw DomainError("chi2_probability: chi2 must be finite and non-negative");
  }
  if (chi2 == 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * chi2);
}

}  // namespace casimir
