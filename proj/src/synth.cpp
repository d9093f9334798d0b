#include "regionscad/synth.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

#include "regionscad/rng.hpp"

namespace regionscad {

void validate(const SynthConfig& config) {
  validate(config.shape);
  if (config.n < 1) {
    throw std::invalid_argument("sample count must be positive");
  }
  if (!(config.sigma > 0.0)) {
    throw std::invalid_argument("sigma must be positive");
  }
  if (config.field_variance && *config.field_variance < 0.0) {
    throw std::invalid_argument("field variance must be nonnegative");
  }
  if (!(config.field_length_scale > 0.0)) {
    throw std::invalid_argument("field length scale must be positive");
  }
  if (config.truth) {
    validate(*config.truth);
    if (!(config.truth->shape == config.shape)) {
      throw std::invalid_argument("truth shape differs from configured shape");
    }
  }
}

CoefficientField default_truth(GridShape shape) {
  validate(shape);
  if (shape.rows < 16 || shape.cols < 16) {
    throw std::invalid_argument("default truth needs a grid of at least 16x16");
  }
  const int rows = shape.rows;
  const int cols = shape.cols;
  const int n_min = std::min(rows, cols);

  Image square(shape);
  {
    const int side = n_min / 4;
    const int r0 = rows / 4 - side / 2;
    const int c0 = cols / 4 - side / 2;
    for (int j = r0; j < r0 + side; ++j) {
      for (int k = c0; k < c0 + side; ++k) square.at(j, k) = 2.0;
    }
  }

  Image disk(shape);
  {
    const int radius = n_min / 6;
    const double cr = (rows - 1) / 2.0;
    const double cc = (cols - 1) / 2.0;
    for (int j = 0; j < rows; ++j) {
      for (int k = 0; k < cols; ++k) {
        double dr = j - cr;
        double dc = k - cc;
        if (dr * dr + dc * dc <= static_cast<double>(radius) * radius) {
          disk.at(j, k) = 3.0;
        }
      }
    }
  }

  Image cross(shape);
  {
    const int width = n_min / 8;
    const int rb = (rows - width) / 2;
    const int cb = (cols - width) / 2;
    for (int j = 0; j < rows; ++j) {
      for (int k = 0; k < cols; ++k) {
        bool in_row_bar = j >= rb && j < rb + width;
        bool in_col_bar = k >= cb && k < cb + width;
        if (in_row_bar || in_col_bar) cross.at(j, k) = -2.0;
      }
    }
  }

  CoefficientField truth;
  truth.shape = shape;
  truth.p = 3;
  truth.images = {std::move(square), std::move(disk), std::move(cross)};
  return truth;
}

namespace {

Eigen::MatrixXd axis_factor(int size, double length_scale) {
  Eigen::MatrixXd kernel(size, size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      double d = i - j;
      kernel(i, j) = std::exp(-d * d / (2.0 * length_scale * length_scale));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(kernel);
  Eigen::VectorXd clamped = eigen.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eigen.eigenvectors() * clamped.asDiagonal();
}

// Exact sampler for the separable squared-exponential kernel: the 2D
// covariance factors as C_row kron C_col, so Z = sqrt(v) * L_r * W * L_c^T
// with W i.i.d. standard normal has Cov(Z(j,k), Z(j',k')) =
// v * C_row(j,j') * C_col(k,k').
struct FieldSampler {
  Eigen::MatrixXd row_factor;
  Eigen::MatrixXd col_factor;
  GridShape shape;

  FieldSampler(GridShape s, double length_scale)
      : row_factor(axis_factor(s.rows, length_scale)),
        col_factor(axis_factor(s.cols, length_scale)),
        shape(s) {}

  Image draw(Rng& rng, double variance) const {
    Eigen::MatrixXd white(shape.rows, shape.cols);
    for (int j = 0; j < shape.rows; ++j) {
      for (int k = 0; k < shape.cols; ++k) white(j, k) = rng.normal();
    }
    Eigen::MatrixXd field =
        std::sqrt(variance) * row_factor * white * col_factor.transpose();
    Image image(shape);
    for (int j = 0; j < shape.rows; ++j) {
      for (int k = 0; k < shape.cols; ++k) image.at(j, k) = field(j, k);
    }
    return image;
  }
};

}  // namespace

Image gaussian_random_field(GridShape shape, double variance,
                            double length_scale, std::uint64_t seed) {
  validate(shape);
  if (variance < 0.0) {
    throw std::invalid_argument("field variance must be nonnegative");
  }
  if (!(length_scale > 0.0)) {
    throw std::invalid_argument("field length scale must be positive");
  }
  FieldSampler sampler(shape, length_scale);
  Rng rng(seed);
  return sampler.draw(rng, variance);
}

std::pair<Dataset, CoefficientField> generate(const SynthConfig& config) {
  validate(config);
  CoefficientField truth =
      config.truth ? *config.truth : default_truth(config.shape);
  const double field_variance =
      config.field_variance.value_or(config.sigma * config.sigma);
  const int p = truth.p;
  const Eigen::Index pixels = config.shape.pixel_count();

  FieldSampler sampler(config.shape, config.field_length_scale);
  Rng rng(config.seed);

  Dataset dataset;
  dataset.shape = config.shape;
  dataset.n = config.n;
  dataset.p = p;
  dataset.covariates.reserve(config.n);
  dataset.responses.reserve(config.n);

  // Per subject, in order: covariates, field normals, pixel noise normals.
  for (int i = 0; i < config.n; ++i) {
    Eigen::VectorXd x(p);
    x[0] = 1.0;
    for (int l = 1; l < p; ++l) x[l] = rng.uniform(0.0, 2.0);

    Image field = sampler.draw(rng, field_variance);

    Image response(config.shape);
    for (int l = 0; l < p; ++l) {
      response.values += x[l] * truth.images[l].values;
    }
    response.values += field.values;
    for (Eigen::Index s = 0; s < pixels; ++s) {
      response.values[s] += config.sigma * rng.normal();
    }

    dataset.covariates.push_back(std::move(x));
    dataset.responses.push_back(std::move(response));
  }
  return {std::move(dataset), std::move(truth)};
}

}  // namespace regionscad
