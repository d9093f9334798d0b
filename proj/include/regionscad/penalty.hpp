#pragma once

#include <Eigen/Dense>

#include "regionscad/core.hpp"
#include "regionscad/diffops.hpp"

namespace regionscad {

struct ScadParams {
  double lambda = 5.0;
  double a = 3.7;
};

void validate(const ScadParams& params);

// Derivative of the SCAD penalty on t >= 0:
//   rho'(t) = lambda                   for t <= lambda
//           = (a*lambda - t)+ / (a-1)  for t > lambda
// (the second branch is lambda * (a*lambda - t)+ / ((a-1)*lambda)).
double scad_derivative(double t, const ScadParams& params);

// SCAD penalty value rho(|t|), the antiderivative of scad_derivative with
// rho(0) = 0:
//   lambda*|t|                                  on [0, lambda]
//   (2*a*lambda*|t| - t^2 - lambda^2)/(2(a-1))  on (lambda, a*lambda]
//   lambda^2*(a+1)/2                            beyond a*lambda.
double scad_value(double t, const ScadParams& params);

// Global minimizer of (quad_weight/2)*(z - theta)^2 + pen_weight*rho(|theta|).
// With kappa = pen_weight/quad_weight and kappa < a-1 the minimizer is
// piecewise explicit; for kappa >= a-1 the objective can have competing local
// minima and the minimizer is found by candidate enumeration, ties broken
// toward smaller |theta|. pen_weight = 0 returns z.
double scad_prox(double z, double quad_weight, double pen_weight,
                 const ScadParams& params);

// sign(z) * max(|z| - threshold, 0).
double soft_threshold(double z, double threshold);

// Row-wise proximal step for the alpha update. SCAD2TV applies the weighted
// SCAD prox to every row; TV_L1 soft-thresholds every row at
// lambda * row_weight / rho; GRAPHNET soft-thresholds VALUE rows at
// lambda * (1 - gamma) / rho and passes GRADIENT rows through unchanged
// (their squared penalty is part of the solver's smooth term).
Eigen::VectorXd threshold_rows(const Eigen::VectorXd& z, const DiffOperator& op,
                               const SolverConfig& config);

// Penalty term of the objective for the given field:
//   SCAD2TV:  sum_r row_weight[r] * rho(|(D beta)_r|)
//   TV_L1:    lambda * (gamma * TV(beta_l) + (1-gamma) * l1(beta_l)), summed
//             over coefficients
//   GRAPHNET: lambda * (gamma * squared gradient norm + (1-gamma) * l1),
//             summed over coefficients.
double penalty_value(const CoefficientField& field, const SolverConfig& config,
                     const DiffOperator& op);

}  // namespace regionscad
