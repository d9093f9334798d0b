#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace regionscad {

enum class PenaltyKind { SCAD2TV, TV_L1, GRAPHNET };

std::string to_string(PenaltyKind kind);
PenaltyKind penalty_kind_from_string(const std::string& name);

// Rectangular pixel grid. Both dimensions must be at least 2 so that each
// axis has at least one forward difference.
struct GridShape {
  int rows = 0;
  int cols = 0;

  int pixel_count() const { return rows * cols; }
  bool operator==(const GridShape&) const = default;
};

void validate(const GridShape& shape);

// A real-valued image stored in row-major order: pixel (j, k), 0-indexed,
// lives at linear index j * cols + k. This convention is shared by every
// module (difference operator, tiling, file formats).
struct Image {
  GridShape shape;
  Eigen::VectorXd values;

  Image() = default;
  explicit Image(GridShape s)
      : shape(s), values(Eigen::VectorXd::Zero(
                      static_cast<Eigen::Index>(s.rows) * s.cols)) {}

  double& at(int j, int k) {
    return values[static_cast<Eigen::Index>(j) * shape.cols + k];
  }
  double at(int j, int k) const {
    return values[static_cast<Eigen::Index>(j) * shape.cols + k];
  }
};

void validate(const Image& image);

// n (covariate vector, response image) pairs sharing one grid shape.
struct Dataset {
  GridShape shape;
  int n = 0;
  int p = 0;
  std::vector<Eigen::VectorXd> covariates;
  std::vector<Image> responses;
};

void validate(const Dataset& dataset);

// p coefficient images on a common grid.
struct CoefficientField {
  GridShape shape;
  int p = 0;
  std::vector<Image> images;
};

void validate(const CoefficientField& field);

struct SolverConfig {
  double lambda = 5.0;
  double gamma = 0.5;
  double rho = 1.0;
  double a = 3.7;
  double eps_abs = 1e-4;
  double eps_rel = 1e-3;
  int max_iter = 2000;
  PenaltyKind penalty_kind = PenaltyKind::SCAD2TV;
  std::uint64_t seed = 0;
};

void validate(const SolverConfig& config);

struct FitResult {
  CoefficientField beta;
  Eigen::VectorXd alpha;
  CoefficientField beta_sparse;
  int iterations = 0;
  std::vector<double> primal_residuals;
  std::vector<double> dual_residuals;
  std::vector<double> objective_trace;
  bool converged = false;
  // Largest relative residual of the cached linear solve across iterations.
  double max_linear_residual = 0.0;
};

Eigen::VectorXd vectorize(const Image& image);
Image devectorize(const Eigen::VectorXd& vec, GridShape shape);

// Coefficient-major stacking: entries [l * pixels, (l + 1) * pixels) hold
// vectorize(images[l]).
Eigen::VectorXd stack(const CoefficientField& field);
CoefficientField unstack(const Eigen::VectorXd& vec, GridShape shape, int p);

}  // namespace regionscad
