#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <vector>

#include "regionscad/core.hpp"

namespace regionscad {

enum class RowKind : std::uint8_t { GRADIENT, VALUE };

// Forward-difference field of an image. d_row(j, k) = b(j+1, k) - b(j, k)
// and is zero on the last row; d_col(j, k) = b(j, k+1) - b(j, k) and is zero
// on the last column.
struct GradientField {
  Image d_row;
  Image d_col;
};

GradientField gradient(const Image& image);

// Anisotropic total variation: sum of absolute values of both forward
// difference components over all pixels.
double tv_norm(const Image& image);

// Sparse penalty operator. For each coefficient l and pixel (j, k), taken
// coefficient-major then row-major, the pixel's group contributes:
//   interior (j < rows-1 and k < cols-1):
//     GRADIENT  b(j+1,k) - b(j,k)
//     GRADIENT  b(j,k+1) - b(j,k)
//     VALUE     b(j,k)
//     VALUE     b(j+1,k)
//     VALUE     b(j,k+1)
//   bottom edge (j = rows-1, k < cols-1):
//     GRADIENT  b(j,k+1) - b(j,k)
//     VALUE     b(j,k)
//     VALUE     b(j,k+1)
//   right edge (k = cols-1, j < rows-1):
//     GRADIENT  b(j+1,k) - b(j,k)
//     VALUE     b(j,k)
//     VALUE     b(j+1,k)
//   corner (j = rows-1, k = cols-1): no rows.
// Matrix entries are exactly +1/-1; the gamma mixing enters only through
// row_weight (gamma on GRADIENT rows, 1-gamma on VALUE rows), because the
// penalty applied to the rows is nonlinear.
struct DiffOperator {
  GridShape shape;
  int p = 0;
  double gamma = 0.0;
  Eigen::Index n_rows = 0;
  Eigen::SparseMatrix<double> matrix;  // n_rows x (p * pixels)
  std::vector<RowKind> row_kind;
  Eigen::VectorXd row_weight;
};

DiffOperator build_diff_operator(GridShape shape, int p, double gamma);

// Number of rows the group anchored at 0-indexed pixel (j, k) contributes.
int group_row_count(GridShape shape, int j, int k);

Eigen::VectorXd apply(const DiffOperator& op, const Eigen::VectorXd& beta_vec);
Eigen::VectorXd apply_adjoint(const DiffOperator& op,
                              const Eigen::VectorXd& alpha_vec);

// D^T D, symmetric positive-semidefinite, block-diagonal across coefficients.
Eigen::SparseMatrix<double> gram(const DiffOperator& op);

}  // namespace regionscad
