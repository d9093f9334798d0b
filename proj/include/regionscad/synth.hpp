#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "regionscad/core.hpp"

namespace regionscad {

struct SynthConfig {
  GridShape shape{64, 64};
  int n = 100;
  double sigma = 0.1;
  // Marginal variance of the spatial field; defaults to sigma^2 when unset.
  std::optional<double> field_variance;
  double field_length_scale = 8.0;
  std::uint64_t seed = 0;
  // Coefficient truth; defaults to default_truth(shape) when unset.
  std::optional<CoefficientField> truth;
};

void validate(const SynthConfig& config);

// Three piecewise-constant coefficient images with sharp boundaries and
// majority-zero background. With N = min(rows, cols):
//   image 0: axis-aligned square of side floor(N/4), value 2, centered in
//            the upper-left quadrant
//   image 1: disk of radius floor(N/6), value 3, centered in the grid
//   image 2: cross of two floor(N/8)-wide bars through the center, value -2.
// Requires rows >= 16 and cols >= 16.
CoefficientField default_truth(GridShape shape);

// Zero-mean Gaussian random field with isotropic squared-exponential
// covariance C(d) = variance * exp(-d^2 / (2 * length_scale^2)), sampled
// exactly through the separable per-axis eigendecomposition.
Image gaussian_random_field(GridShape shape, double variance,
                            double length_scale, std::uint64_t seed);

// Draw a dataset from the model Y_i = sum_l x_{il} beta_l + field_i + eps_i
// with x_i = (1, U(0,2), ..., U(0,2)) (p-1 uniform entries after the
// intercept), a fresh Gaussian random field per subject, and i.i.d. pixel
// noise N(0, sigma^2). Returns the dataset and the truth used.
std::pair<Dataset, CoefficientField> generate(const SynthConfig& config);

}  // namespace regionscad
