#include "regionscad/core.hpp"

#include <cmath>
#include <stdexcept>

namespace regionscad {

std::string to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::SCAD2TV:
      return "scad2tv";
    case PenaltyKind::TV_L1:
      return "tvl1";
    case PenaltyKind::GRAPHNET:
      return "graphnet";
  }
  throw std::invalid_argument("unknown penalty kind");
}

PenaltyKind penalty_kind_from_string(const std::string& name) {
  if (name == "scad2tv") return PenaltyKind::SCAD2TV;
  if (name == "tvl1") return PenaltyKind::TV_L1;
  if (name == "graphnet") return PenaltyKind::GRAPHNET;
  throw std::invalid_argument("unknown penalty kind: " + name +
                              " (expected scad2tv, tvl1, or graphnet)");
}

void validate(const GridShape& shape) {
  if (shape.rows < 2 || shape.cols < 2) {
    throw std::invalid_argument(
        "grid shape must be at least 2x2, got " + std::to_string(shape.rows) +
        "x" + std::to_string(shape.cols));
  }
}

void validate(const Image& image) {
  validate(image.shape);
  if (image.values.size() !=
      static_cast<Eigen::Index>(image.shape.rows) * image.shape.cols) {
    throw std::invalid_argument(
        "image value count " + std::to_string(image.values.size()) +
        " does not match shape " + std::to_string(image.shape.rows) + "x" +
        std::to_string(image.shape.cols));
  }
  if (!image.values.allFinite()) {
    throw std::invalid_argument("image contains non-finite values");
  }
}

void validate(const Dataset& dataset) {
  validate(dataset.shape);
  if (dataset.n < 1) {
    throw std::invalid_argument("dataset needs at least one subject");
  }
  if (dataset.p < 1) {
    throw std::invalid_argument("dataset needs at least one covariate");
  }
  if (static_cast<int>(dataset.covariates.size()) != dataset.n ||
      static_cast<int>(dataset.responses.size()) != dataset.n) {
    throw std::invalid_argument("dataset covariate/response counts disagree with n");
  }
  for (const auto& x : dataset.covariates) {
    if (x.size() != dataset.p) {
      throw std::invalid_argument("covariate vector length differs from p");
    }
    if (!x.allFinite()) {
      throw std::invalid_argument("covariates contain non-finite values");
    }
  }
  for (const auto& y : dataset.responses) {
    validate(y);
    if (!(y.shape == dataset.shape)) {
      throw std::invalid_argument("response image shape differs from dataset shape");
    }
  }
}

void validate(const CoefficientField& field) {
  validate(field.shape);
  if (field.p < 1 || static_cast<int>(field.images.size()) != field.p) {
    throw std::invalid_argument("coefficient field image count disagrees with p");
  }
  for (const auto& image : field.images) {
    validate(image);
    if (!(image.shape == field.shape)) {
      throw std::invalid_argument("coefficient image shape differs from field shape");
    }
  }
}

void validate(const SolverConfig& config) {
  if (config.lambda < 0.0 || !std::isfinite(config.lambda)) {
    throw std::invalid_argument("lambda must be finite and nonnegative");
  }
  if (config.gamma < 0.0 || config.gamma > 1.0) {
    throw std::invalid_argument("gamma must lie in [0, 1]");
  }
  if (config.rho <= 0.0) {
    throw std::invalid_argument("rho must be positive");
  }
  if (config.a <= 2.0) {
    throw std::invalid_argument("SCAD shape a must exceed 2");
  }
  if (config.eps_abs <= 0.0 || config.eps_rel <= 0.0) {
    throw std::invalid_argument("stopping tolerances must be positive");
  }
  if (config.max_iter < 1) {
    throw std::invalid_argument("max_iter must be positive");
  }
}

Eigen::VectorXd vectorize(const Image& image) {
  validate(image);
  return image.values;
}

Image devectorize(const Eigen::VectorXd& vec, GridShape shape) {
  validate(shape);
  if (vec.size() != static_cast<Eigen::Index>(shape.rows) * shape.cols) {
    throw std::invalid_argument(
        "vector length " + std::to_string(vec.size()) +
        " does not match shape " + std::to_string(shape.rows) + "x" +
        std::to_string(shape.cols));
  }
  Image image;
  image.shape = shape;
  image.values = vec;
  return image;
}

Eigen::VectorXd stack(const CoefficientField& field) {
  validate(field);
  const Eigen::Index pixels = field.shape.pixel_count();
  Eigen::VectorXd out(pixels * field.p);
  for (int l = 0; l < field.p; ++l) {
    out.segment(l * pixels, pixels) = field.images[l].values;
  }
  return out;
}

CoefficientField unstack(const Eigen::VectorXd& vec, GridShape shape, int p) {
  validate(shape);
  const Eigen::Index pixels = shape.pixel_count();
  if (p < 1 || vec.size() != pixels * p) {
    throw std::invalid_argument("stacked vector length does not match shape and p");
  }
  CoefficientField field;
  field.shape = shape;
  field.p = p;
  field.images.reserve(p);
  for (int l = 0; l < p; ++l) {
    field.images.push_back(devectorize(vec.segment(l * pixels, pixels), shape));
  }
  return field;
}

}  // namespace regionscad
