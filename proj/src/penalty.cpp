#include "regionscad/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace regionscad {

void validate(const ScadParams& params) {
  if (params.lambda < 0.0 || !std::isfinite(params.lambda)) {
    throw std::invalid_argument("SCAD lambda must be finite and nonnegative");
  }
  if (params.a <= 2.0) {
    throw std::invalid_argument("SCAD shape a must exceed 2");
  }
}

double scad_derivative(double t, const ScadParams& params) {
  validate(params);
  if (t < 0.0) {
    throw std::invalid_argument("scad_derivative expects t >= 0");
  }
  const double lambda = params.lambda;
  const double a = params.a;
  if (t <= lambda) return lambda;
  double capped = a * lambda - t;
  if (capped <= 0.0) return 0.0;
  return capped / (a - 1.0);
}

double scad_value(double t, const ScadParams& params) {
  validate(params);
  const double lambda = params.lambda;
  const double a = params.a;
  const double x = std::abs(t);
  if (x <= lambda) return lambda * x;
  if (x <= a * lambda) {
    return (2.0 * a * lambda * x - x * x - lambda * lambda) / (2.0 * (a - 1.0));
  }
  return lambda * lambda * (a + 1.0) / 2.0;
}

namespace {

// Scalar objective of the prox problem, used only in the degenerate regime.
double prox_objective(double theta, double z, double quad_weight,
                      double pen_weight, const ScadParams& params) {
  double d = z - theta;
  return 0.5 * quad_weight * d * d + pen_weight * scad_value(theta, params);
}

// kappa >= a-1 makes the middle region concave, so competing minima are
// possible; compare all per-region candidates directly.
double scad_prox_enumerate(double z, double quad_weight, double pen_weight,
                           const ScadParams& params) {
  const double lambda = params.lambda;
  const double a = params.a;
  const double kappa = pen_weight / quad_weight;
  const double sz = z < 0 ? -1.0 : 1.0;
  const double az = std::abs(z);

  std::vector<double> candidates{0.0, lambda, a * lambda, az};
  candidates.push_back(std::clamp(az - kappa * lambda, 0.0, lambda));
  double denom = a - 1.0 - kappa;
  if (denom > 0.0) {
    candidates.push_back(
        std::clamp(((a - 1.0) * az - kappa * a * lambda) / denom, lambda,
                   a * lambda));
  }

  double best = 0.0;
  double best_f = std::numeric_limits<double>::infinity();
  for (double c : candidates) {
    double f = prox_objective(c, az, quad_weight, pen_weight, params);
    if (f < best_f || (f == best_f && c < best)) {
      best_f = f;
      best = c;
    }
  }
  return sz * best;
}

}  // namespace

double scad_prox(double z, double quad_weight, double pen_weight,
                 const ScadParams& params) {
  validate(params);
  if (quad_weight <= 0.0) {
    throw std::invalid_argument("prox quadratic weight must be positive");
  }
  if (pen_weight < 0.0) {
    throw std::invalid_argument("prox penalty weight must be nonnegative");
  }
  if (pen_weight == 0.0) return z;

  const double lambda = params.lambda;
  const double a = params.a;
  const double kappa = pen_weight / quad_weight;
  if (kappa >= a - 1.0) return scad_prox_enumerate(z, quad_weight, pen_weight, params);

  const double sz = z < 0 ? -1.0 : 1.0;
  const double az = std::abs(z);
  if (az <= (1.0 + kappa) * lambda) {
    return sz * std::max(az - kappa * lambda, 0.0);
  }
  if (az <= a * lambda) {
    return sz * ((a - 1.0) * az - kappa * a * lambda) / (a - 1.0 - kappa);
  }
  return z;
}

double soft_threshold(double z, double threshold) {
  if (threshold < 0.0) {
    throw std::invalid_argument("soft threshold must be nonnegative");
  }
  double shrunk = std::abs(z) - threshold;
  if (shrunk <= 0.0) return 0.0;
  return z < 0 ? -shrunk : shrunk;
}

Eigen::VectorXd threshold_rows(const Eigen::VectorXd& z, const DiffOperator& op,
                               const SolverConfig& config) {
  validate(config);
  if (z.size() != op.n_rows) {
    throw std::invalid_argument("threshold_rows: vector length does not match operator rows");
  }
  Eigen::VectorXd out(z.size());
  const ScadParams params{config.lambda, config.a};
  switch (config.penalty_kind) {
    case PenaltyKind::SCAD2TV:
      for (Eigen::Index r = 0; r < z.size(); ++r) {
        out[r] = scad_prox(z[r], config.rho, op.row_weight[r], params);
      }
      break;
    case PenaltyKind::TV_L1:
      for (Eigen::Index r = 0; r < z.size(); ++r) {
        out[r] = soft_threshold(z[r], config.lambda * op.row_weight[r] / config.rho);
      }
      break;
    case PenaltyKind::GRAPHNET: {
      double tau = config.lambda * (1.0 - config.gamma) / config.rho;
      for (Eigen::Index r = 0; r < z.size(); ++r) {
        out[r] = op.row_kind[r] == RowKind::VALUE ? soft_threshold(z[r], tau) : z[r];
      }
      break;
    }
  }
  return out;
}

double penalty_value(const CoefficientField& field, const SolverConfig& config,
                     const DiffOperator& op) {
  validate(field);
  validate(config);
  if (!(field.shape == op.shape) || field.p != op.p) {
    throw std::invalid_argument("penalty_value: field does not match operator layout");
  }

  switch (config.penalty_kind) {
    case PenaltyKind::SCAD2TV: {
      const ScadParams params{config.lambda, config.a};
      Eigen::VectorXd rows = apply(op, stack(field));
      double total = 0.0;
      for (Eigen::Index r = 0; r < rows.size(); ++r) {
        total += op.row_weight[r] * scad_value(rows[r], params);
      }
      return total;
    }
    case PenaltyKind::TV_L1: {
      double tv = 0.0;
      double l1 = 0.0;
      for (const auto& image : field.images) {
        tv += tv_norm(image);
        l1 += image.values.cwiseAbs().sum();
      }
      return config.lambda * (config.gamma * tv + (1.0 - config.gamma) * l1);
    }
    case PenaltyKind::GRAPHNET: {
      double grad_sq = 0.0;
      double l1 = 0.0;
      for (const auto& image : field.images) {
        GradientField g = gradient(image);
        grad_sq += g.d_row.values.squaredNorm() + g.d_col.values.squaredNorm();
        l1 += image.values.cwiseAbs().sum();
      }
      return config.lambda * (config.gamma * grad_sq + (1.0 - config.gamma) * l1);
    }
  }
  throw std::invalid_argument("unknown penalty kind");
}

}  // namespace regionscad
