#include "regionscad/solver.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "regionscad/penalty.hpp"
#include "regionscad/rng.hpp"

namespace regionscad {

Eigen::VectorXd NormalSystem::solve(const Eigen::VectorXd& rhs) const {
  return factor->solve(rhs);
}

namespace {

constexpr double kRidge = 1e-10;
constexpr double kSolveTolerance = 1e-8;

bool factorization_usable(const NormalSystem& system) {
  if (system.factor->info() != Eigen::Success) return false;
  Eigen::VectorXd probe = Eigen::VectorXd::Ones(system.matrix.rows());
  Eigen::VectorXd solution = system.factor->solve(probe);
  if (!solution.allFinite()) return false;
  double relative = (system.matrix * solution - probe).norm() / probe.norm();
  return relative <= kSolveTolerance;
}

}  // namespace

NormalSystem assemble(const Dataset& dataset, const DiffOperator& op,
                      const SolverConfig& config) {
  validate(dataset);
  validate(config);
  if (!(op.shape == dataset.shape) || op.p != dataset.p) {
    throw std::invalid_argument("assemble: operator does not match dataset layout");
  }

  const Eigen::Index pixels = dataset.shape.pixel_count();
  const Eigen::Index dim = static_cast<Eigen::Index>(dataset.p) * pixels;
  const int n = dataset.n;
  const int p = dataset.p;

  Eigen::MatrixXd gram_x = Eigen::MatrixXd::Zero(p, p);
  for (const auto& x : dataset.covariates) {
    gram_x.noalias() += x * x.transpose();
  }
  gram_x /= static_cast<double>(n);

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::SparseMatrix<double> dtd = gram(op);
  triplets.reserve(dtd.nonZeros() + static_cast<Eigen::Index>(p) * p * pixels);
  for (Eigen::Index outer = 0; outer < dtd.outerSize(); ++outer) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(dtd, outer); it; ++it) {
      triplets.emplace_back(it.row(), it.col(), config.rho * it.value());
    }
  }
  // 2 * (G kron I): coefficient blocks (l, l2) get G(l, l2) on the diagonal.
  for (int l = 0; l < p; ++l) {
    for (int l2 = 0; l2 < p; ++l2) {
      double value = 2.0 * gram_x(l, l2);
      if (value == 0.0) continue;
      for (Eigen::Index s = 0; s < pixels; ++s) {
        triplets.emplace_back(l * pixels + s, l2 * pixels + s, value);
      }
    }
  }
  if (config.penalty_kind == PenaltyKind::GRAPHNET && config.lambda * config.gamma != 0.0) {
    // Laplacian = gradient rows' part of D^T D for a single coefficient.
    DiffOperator single = build_diff_operator(dataset.shape, 1, config.gamma);
    std::vector<Eigen::Triplet<double>> grad_rows;
    grad_rows.reserve(2 * single.n_rows);
    Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(single.matrix);
    Eigen::Index next_row = 0;
    for (Eigen::Index r = 0; r < by_row.rows(); ++r) {
      if (single.row_kind[r] != RowKind::GRADIENT) continue;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, r); it; ++it) {
        grad_rows.emplace_back(next_row, it.col(), it.value());
      }
      ++next_row;
    }
    Eigen::SparseMatrix<double> grad(next_row, pixels);
    grad.setFromTriplets(grad_rows.begin(), grad_rows.end());
    Eigen::SparseMatrix<double> laplacian = grad.transpose() * grad;
    double scale = 2.0 * config.lambda * config.gamma;
    for (int l = 0; l < p; ++l) {
      for (Eigen::Index outer = 0; outer < laplacian.outerSize(); ++outer) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(laplacian, outer); it; ++it) {
          triplets.emplace_back(l * pixels + it.row(), l * pixels + it.col(),
                                scale * it.value());
        }
      }
    }
  }

  NormalSystem system;
  system.matrix.resize(dim, dim);
  system.matrix.setFromTriplets(triplets.begin(), triplets.end());
  system.matrix.makeCompressed();

  system.rhs_base = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& y = dataset.responses[i].values;
    for (int l = 0; l < p; ++l) {
      system.rhs_base.segment(l * pixels, pixels) += dataset.covariates[i][l] * y;
    }
  }
  system.rhs_base *= 2.0 / static_cast<double>(n);

  system.factor = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
  system.factor->compute(system.matrix);
  if (!factorization_usable(system)) {
    Eigen::SparseMatrix<double> identity(dim, dim);
    identity.setIdentity();
    system.matrix += kRidge * identity;
    system.factor->compute(system.matrix);
    system.ridge_applied = true;
    if (!factorization_usable(system)) {
      throw SolverError("normal system factorization failed even with ridge");
    }
  }
  return system;
}

double data_term(const Dataset& dataset, const Eigen::VectorXd& beta_vec) {
  const Eigen::Index pixels = dataset.shape.pixel_count();
  if (beta_vec.size() != static_cast<Eigen::Index>(dataset.p) * pixels) {
    throw std::invalid_argument("data_term: stacked vector length mismatch");
  }
  double total = 0.0;
  Eigen::VectorXd prediction(pixels);
  for (int i = 0; i < dataset.n; ++i) {
    prediction.setZero();
    for (int l = 0; l < dataset.p; ++l) {
      prediction += dataset.covariates[i][l] * beta_vec.segment(l * pixels, pixels);
    }
    total += (dataset.responses[i].values - prediction).squaredNorm();
  }
  return total / static_cast<double>(dataset.n);
}

double objective_value(const Dataset& dataset, const CoefficientField& field,
                       const SolverConfig& config, const DiffOperator& op) {
  return data_term(dataset, stack(field)) + penalty_value(field, config, op);
}

FitResult fit(const Dataset& dataset, const SolverConfig& config) {
  validate(dataset);
  validate(config);

  DiffOperator op = build_diff_operator(dataset.shape, dataset.p, config.gamma);
  NormalSystem system = assemble(dataset, op, config);

  const Eigen::Index pixels = dataset.shape.pixel_count();
  const Eigen::Index dim = static_cast<Eigen::Index>(dataset.p) * pixels;

  Rng rng(config.seed);
  Eigen::VectorXd beta(dim);
  for (Eigen::Index i = 0; i < dim; ++i) beta[i] = rng.uniform();
  Eigen::VectorXd alpha = op.matrix * beta;
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(op.n_rows);

  FitResult result;
  result.primal_residuals.reserve(config.max_iter);
  result.dual_residuals.reserve(config.max_iter);
  result.objective_trace.reserve(config.max_iter);

  const double sqrt_rows = std::sqrt(static_cast<double>(op.n_rows));
  const double sqrt_dim = std::sqrt(static_cast<double>(dim));

  int completed = 0;
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    Eigen::VectorXd z = op.matrix * beta - eta / config.rho;
    Eigen::VectorXd alpha_new = threshold_rows(z, op, config);

    Eigen::VectorXd rhs =
        system.rhs_base + op.matrix.transpose() * (eta + config.rho * alpha_new);
    beta = system.solve(rhs);
    double linear_residual =
        (system.matrix * beta - rhs).norm() / (1.0 + rhs.norm());
    result.max_linear_residual = std::max(result.max_linear_residual, linear_residual);

    Eigen::VectorXd d_beta = op.matrix * beta;
    eta += config.rho * (alpha_new - d_beta);

    Eigen::VectorXd primal = alpha_new - d_beta;
    Eigen::VectorXd dual = config.rho * (op.matrix.transpose() * (alpha_new - alpha));
    alpha = alpha_new;
    completed = iter;

    double primal_norm = primal.norm();
    double dual_norm = dual.norm();
    double eps_pri = sqrt_rows * config.eps_abs +
                     config.eps_rel * std::max(alpha.norm(), d_beta.norm());
    double eps_dual = sqrt_dim * config.eps_abs +
                      config.eps_rel * (op.matrix.transpose() * eta).norm();

    if (!beta.allFinite() || !alpha.allFinite() || !eta.allFinite()) {
      throw SolverError("solver diverged at iteration " + std::to_string(iter) +
                        ": non-finite iterate (last ||r|| = " +
                        std::to_string(primal_norm) + ", ||s|| = " +
                        std::to_string(dual_norm) + ")");
    }

    CoefficientField field = unstack(beta, dataset.shape, dataset.p);
    result.primal_residuals.push_back(primal_norm);
    result.dual_residuals.push_back(dual_norm);
    result.objective_trace.push_back(data_term(dataset, beta) +
                                     penalty_value(field, config, op));

    if (primal_norm <= eps_pri && dual_norm <= eps_dual) {
      result.converged = true;
      break;
    }
  }

  result.iterations = completed;
  result.beta = unstack(beta, dataset.shape, dataset.p);
  result.alpha = alpha;
  result.beta_sparse = extract_sparse_beta(alpha, op);
  return result;
}

std::vector<Image> predict(const CoefficientField& field,
                           const std::vector<Eigen::VectorXd>& covariates) {
  validate(field);
  std::vector<Image> out;
  out.reserve(covariates.size());
  for (const auto& x : covariates) {
    if (x.size() != field.p) {
      throw std::invalid_argument("predict: covariate length does not match field p");
    }
    Image prediction(field.shape);
    for (int l = 0; l < field.p; ++l) {
      prediction.values += x[l] * field.images[l].values;
    }
    out.push_back(std::move(prediction));
  }
  return out;
}

CoefficientField extract_sparse_beta(const Eigen::VectorXd& alpha,
                                     const DiffOperator& op) {
  if (alpha.size() != op.n_rows) {
    throw std::invalid_argument("extract_sparse_beta: alpha length does not match operator rows");
  }
  const Eigen::Index dim = op.matrix.cols();
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(dim);
  std::vector<int> counts(static_cast<std::size_t>(dim), 0);
  std::vector<char> all_zero(static_cast<std::size_t>(dim), 1);

  for (Eigen::Index c = 0; c < op.matrix.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(op.matrix, c); it; ++it) {
      if (op.row_kind[static_cast<std::size_t>(it.row())] != RowKind::VALUE) continue;
      sums[c] += alpha[it.row()];
      ++counts[static_cast<std::size_t>(c)];
      if (alpha[it.row()] != 0.0) all_zero[static_cast<std::size_t>(c)] = 0;
    }
  }

  Eigen::VectorXd values(dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw std::logic_error("extract_sparse_beta: pixel with no VALUE row");
    }
    values[c] = all_zero[static_cast<std::size_t>(c)]
                    ? 0.0
                    : sums[c] / counts[static_cast<std::size_t>(c)];
  }
  return unstack(values, op.shape, op.p);
}

}  // namespace regionscad
