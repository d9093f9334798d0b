#pragma once

#include <utility>
#include <vector>

#include "regionscad/core.hpp"
#include "regionscad/synth.hpp"

namespace regionscad {

// Fraction of pixels whose zero/nonzero status agrees between truth and
// estimate. Status is exact-zero comparison; the estimate should come from
// extract_sparse_beta, whose zeros are exact.
double selection_rate(const Image& truth, const Image& estimate);

// (1 / (n * pixels)) * sum_i || predicted_i - observed_i ||^2.
double prediction_mse(const std::vector<Image>& predicted,
                      const std::vector<Image>& observed);

struct TTestResult {
  double fraction_significant = 0.0;  // over mask pixels, p < level
  Image p_values;                     // pixels outside the mask carry p = 1
};

// Welch two-sample t-test per masked pixel (mask nonzero = tested). Pixels
// where both groups have zero variance get p = 1 when the means are equal
// and p = 0 otherwise.
TTestResult roi_ttest(const std::vector<Image>& group_a,
                      const std::vector<Image>& group_b, const Image& roi_mask,
                      double level);

struct MethodSummary {
  PenaltyKind method = PenaltyKind::SCAD2TV;
  SolverConfig config;
  std::vector<double> mean_sr;  // per coefficient, over successful replicates
  double mean_mse = 0.0;
  int failures = 0;  // replicates whose fit raised, excluded from the means
};

struct BenchmarkReport {
  SynthConfig synth;
  int replicates = 0;
  std::vector<MethodSummary> methods;
};

// For each replicate r in [0, replicates): generate data with seed
// synth.seed + r, fit every configured method, and record per-coefficient
// selection rate and prediction MSE of the sparse estimator against the
// generating sample. Reports per-method means.
BenchmarkReport run_benchmark(
    const SynthConfig& synth,
    const std::vector<std::pair<PenaltyKind, SolverConfig>>& methods,
    int replicates);

struct CvReport {
  int folds = 0;
  // Mean held-out MSE for each method, with the method list fixed to
  // SCAD2TV, TV_L1, GRAPHNET run under the shared base config.
  std::vector<std::pair<PenaltyKind, double>> mean_mse;
  // Held-out index blocks, recorded for fold accounting.
  std::vector<std::vector<int>> fold_indices;
};

// K-fold cross-validation: subject indices are shuffled once with the seed
// taken from config.seed, split into contiguous folds whose sizes differ by
// at most one, and each method is trained on K-1 folds and scored on the
// held-out fold with the sparse estimator.
CvReport run_cv(const Dataset& dataset, const SolverConfig& config, int folds);

}  // namespace regionscad
