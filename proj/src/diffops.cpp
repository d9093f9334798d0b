#include "regionscad/diffops.hpp"

#include <cmath>
#include <stdexcept>

namespace regionscad {

GradientField gradient(const Image& image) {
  validate(image);
  const int rows = image.shape.rows;
  const int cols = image.shape.cols;
  GradientField field{Image(image.shape), Image(image.shape)};
  for (int j = 0; j < rows; ++j) {
    for (int k = 0; k < cols; ++k) {
      if (j < rows - 1) {
        field.d_row.at(j, k) = image.at(j + 1, k) - image.at(j, k);
      }
      if (k < cols - 1) {
        field.d_col.at(j, k) = image.at(j, k + 1) - image.at(j, k);
      }
    }
  }
  return field;
}

double tv_norm(const Image& image) {
  GradientField field = gradient(image);
  return field.d_row.values.cwiseAbs().sum() +
         field.d_col.values.cwiseAbs().sum();
}

int group_row_count(GridShape shape, int j, int k) {
  bool down = j < shape.rows - 1;
  bool right = k < shape.cols - 1;
  if (down && right) return 5;
  if (down || right) return 3;
  return 0;
}

DiffOperator build_diff_operator(GridShape shape, int p, double gamma) {
  validate(shape);
  if (p < 1) {
    throw std::invalid_argument("coefficient count p must be positive");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in [0, 1]");
  }

  const int rows = shape.rows;
  const int cols = shape.cols;
  const Eigen::Index pixels = shape.pixel_count();
  // p * (5*(rows-1)*(cols-1) + 3*(rows-1) + 3*(cols-1)) rows in total.
  const Eigen::Index total_rows =
      static_cast<Eigen::Index>(p) *
      (5LL * (rows - 1) * (cols - 1) + 3LL * (rows - 1) + 3LL * (cols - 1));

  DiffOperator op;
  op.shape = shape;
  op.p = p;
  op.gamma = gamma;
  op.n_rows = total_rows;
  op.row_kind.reserve(total_rows);
  op.row_weight.resize(total_rows);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * total_rows);
  auto col_of = [&](int l, int j, int k) {
    return static_cast<Eigen::Index>(l) * pixels + static_cast<Eigen::Index>(j) * cols + k;
  };

  Eigen::Index row = 0;
  auto push_gradient = [&](Eigen::Index plus, Eigen::Index minus) {
    triplets.emplace_back(row, plus, 1.0);
    triplets.emplace_back(row, minus, -1.0);
    op.row_kind.push_back(RowKind::GRADIENT);
    op.row_weight[row] = gamma;
    ++row;
  };
  auto push_value = [&](Eigen::Index col) {
    triplets.emplace_back(row, col, 1.0);
    op.row_kind.push_back(RowKind::VALUE);
    op.row_weight[row] = 1.0 - gamma;
    ++row;
  };

  for (int l = 0; l < p; ++l) {
    for (int j = 0; j < rows; ++j) {
      for (int k = 0; k < cols; ++k) {
        const bool down = j < rows - 1;
        const bool right = k < cols - 1;
        if (down && right) {
          push_gradient(col_of(l, j + 1, k), col_of(l, j, k));
          push_gradient(col_of(l, j, k + 1), col_of(l, j, k));
          push_value(col_of(l, j, k));
          push_value(col_of(l, j + 1, k));
          push_value(col_of(l, j, k + 1));
        } else if (!down && right) {
          push_gradient(col_of(l, j, k + 1), col_of(l, j, k));
          push_value(col_of(l, j, k));
          push_value(col_of(l, j, k + 1));
        } else if (down && !right) {
          push_gradient(col_of(l, j + 1, k), col_of(l, j, k));
          push_value(col_of(l, j, k));
          push_value(col_of(l, j + 1, k));
        }
      }
    }
  }

  op.matrix.resize(total_rows, static_cast<Eigen::Index>(p) * pixels);
  op.matrix.setFromTriplets(triplets.begin(), triplets.end());
  op.matrix.makeCompressed();
  return op;
}

Eigen::VectorXd apply(const DiffOperator& op, const Eigen::VectorXd& beta_vec) {
  if (beta_vec.size() != op.matrix.cols()) {
    throw std::invalid_argument("apply: vector length does not match operator columns");
  }
  return op.matrix * beta_vec;
}

Eigen::VectorXd apply_adjoint(const DiffOperator& op,
                              const Eigen::VectorXd& alpha_vec) {
  if (alpha_vec.size() != op.n_rows) {
    throw std::invalid_argument("apply_adjoint: vector length does not match operator rows");
  }
  return op.matrix.transpose() * alpha_vec;
}

Eigen::SparseMatrix<double> gram(const DiffOperator& op) {
  Eigen::SparseMatrix<double> g = op.matrix.transpose() * op.matrix;
  g.makeCompressed();
  return g;
}

}  // namespace regionscad
