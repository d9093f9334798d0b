#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <vector>

#include "regionscad/core.hpp"
#include "regionscad/diffops.hpp"

namespace regionscad {

// Raised when the iterates stop being finite.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The iteration-independent linear system of the beta update,
//   M = 2 * (G kron I) + rho * D^T D            with G = (1/n) sum x_i x_i^T,
// plus 2 * lambda * gamma * (I kron Laplacian) for GRAPHNET, where the
// Laplacian is the gradient-rows part of D^T D for a single coefficient.
// The factorization is computed once and reused every iteration. If it fails
// or is numerically unusable, a ridge of 1e-10 is added to the diagonal and
// ridge_applied is set.
struct NormalSystem {
  Eigen::SparseMatrix<double> matrix;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> factor;
  Eigen::VectorXd rhs_base;  // (2/n) sum_i x_{il} * vectorize(Y_i), stacked
  bool ridge_applied = false;

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
};

NormalSystem assemble(const Dataset& dataset, const DiffOperator& op,
                      const SolverConfig& config);

// Data-fit term (1/n) * sum_i || vectorize(Y_i) - sum_l x_{il} beta_l ||^2.
double data_term(const Dataset& dataset, const Eigen::VectorXd& beta_vec);

// Full objective: data_term plus penalty_value of the given field.
double objective_value(const Dataset& dataset, const CoefficientField& field,
                       const SolverConfig& config, const DiffOperator& op);

// ADMM on the split alpha = D beta. Per iteration, in order:
//   alpha <- threshold_rows(D beta - eta / rho)
//   beta  <- solve(M, rhs_base + D^T eta + rho * D^T alpha)
//   eta   <- eta + rho * (alpha - D beta)
// Residuals r = alpha - D beta and s = rho * D^T (alpha - alpha_prev); the
// loop stops when both ||r|| <= eps_pri and ||s|| <= eps_dual with
//   eps_pri  = sqrt(n_rows) * eps_abs + eps_rel * max(||alpha||, ||D beta||)
//   eps_dual = sqrt(p * pixels) * eps_abs + eps_rel * ||D^T eta||.
// beta starts from i.i.d. uniform(0,1) entries drawn from config.seed,
// alpha from D beta, eta from zero.
FitResult fit(const Dataset& dataset, const SolverConfig& config);

// Noise-free mean prediction: Yhat_i = sum_l x_{il} beta_l.
std::vector<Image> predict(const CoefficientField& field,
                           const std::vector<Eigen::VectorXd>& covariates);

// Sparse coefficient field read off alpha: each pixel is the arithmetic mean
// of the VALUE-row entries of alpha that reference it (one to three entries;
// the bottom-right corner pixel is covered by its neighbors' groups). A pixel
// is exactly zero iff all of its VALUE entries are exactly zero.
CoefficientField extract_sparse_beta(const Eigen::VectorXd& alpha,
                                     const DiffOperator& op);

}  // namespace regionscad
