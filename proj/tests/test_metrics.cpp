#include <doctest.h>

#include <cmath>

#include "regionscad/core.hpp"
#include "regionscad/metrics.hpp"
#include "regionscad/rng.hpp"
#include "regionscad/solver.hpp"
#include "regionscad/synth.hpp"

using namespace regionscad;

namespace {

std::vector<Image> normal_images(GridShape shape, int count, double mean,
                                 double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> images;
  for (int i = 0; i < count; ++i) {
    Image image(shape);
    for (Eigen::Index v = 0; v < image.values.size(); ++v) {
      image.values[v] = mean + sd * rng.normal();
    }
    images.push_back(std::move(image));
  }
  return images;
}

}  // namespace

TEST_CASE("selection_rate counts zero-status agreement") {
  GridShape shape{2, 5};
  Image truth(shape);
  Image estimate(shape);
  // Truth nonzero at positions 0..3.
  for (int v = 0; v < 4; ++v) truth.values[v] = 1.0;
  // Estimate nonzero at 0, 1, 4, 5, 6: agrees at 0, 1, 7, 8, 9 and the
  // matching zeros, disagreeing at 2, 3 (missed) and 4, 5, 6 (spurious).
  estimate.values[0] = 2.0;
  estimate.values[1] = -1.0;
  estimate.values[4] = 0.5;
  estimate.values[5] = 0.5;
  estimate.values[6] = 0.5;
  CHECK(selection_rate(truth, estimate) == 0.5);

  estimate = truth;
  CHECK(selection_rate(truth, estimate) == 1.0);

  // Tiny magnitudes still count as nonzero; only exact zeros are zeros.
  estimate.values[9] = 1e-300;
  CHECK(selection_rate(truth, estimate) == 0.9);

  Image other(GridShape{5, 2});
  CHECK_THROWS_AS(selection_rate(truth, other), std::invalid_argument);
}

TEST_CASE("prediction_mse averages over images and pixels") {
  GridShape shape{2, 2};
  std::vector<Image> observed(2, Image(shape));
  std::vector<Image> predicted = observed;
  CHECK(prediction_mse(predicted, observed) == 0.0);

  // One image differs by 3.0 at two of the four pixels across two images:
  // (2 * 9) / (2 * 4).
  predicted[1].values[0] = 3.0;
  predicted[1].values[3] = -3.0;
  CHECK(prediction_mse(predicted, observed) == 2.25);

  CHECK_THROWS_AS(prediction_mse({}, {}), std::invalid_argument);
  std::vector<Image> short_list(1, Image(shape));
  CHECK_THROWS_AS(prediction_mse(short_list, observed), std::invalid_argument);
}

TEST_CASE("welch test matches the closed-form two-by-two case") {
  GridShape shape{2, 2};
  std::vector<Image> group_a(2, Image(shape));
  std::vector<Image> group_b(2, Image(shape));
  group_a[0].values.setConstant(0.0);
  group_a[1].values.setConstant(1.0);
  group_b[0].values.setConstant(2.0);
  group_b[1].values.setConstant(3.0);
  Image mask(shape);
  mask.values.setOnes();

  TTestResult result = roi_ttest(group_a, group_b, mask, 0.05);
  // Equal variances 0.5 in groups of two: t = 2 / sqrt(0.5), df = 2, and the
  // df-2 tail has the closed form p = 1 - |t| / sqrt(2 + t^2) = 1 - sqrt(0.8).
  double expected = 1.0 - std::sqrt(0.8);
  CHECK(result.p_values.values[0] ==
        doctest::Approx(expected).epsilon(1e-9));
  CHECK(result.fraction_significant == 0.0);  // 0.1056 > 0.05

  group_b[0].values.setConstant(10.0);
  group_b[1].values.setConstant(11.0);
  result = roi_ttest(group_a, group_b, mask, 0.05);
  CHECK(result.fraction_significant == 1.0);
}

TEST_CASE("welch test is calibrated under the null") {
  GridShape shape{8, 8};
  std::vector<Image> group_a = normal_images(shape, 40, 0.0, 1.0, 71);
  std::vector<Image> group_b = normal_images(shape, 40, 0.0, 1.0, 72);
  Image mask(shape);
  mask.values.setOnes();
  TTestResult result = roi_ttest(group_a, group_b, mask, 0.05);
  CHECK(result.fraction_significant <= 0.15);
}

TEST_CASE("welch test has power under a strong shift") {
  GridShape shape{8, 8};
  std::vector<Image> group_a = normal_images(shape, 50, 0.0, 1.0, 81);
  std::vector<Image> group_b = normal_images(shape, 50, 5.0, 1.0, 82);
  Image mask(shape);
  for (int j = 2; j < 6; ++j) {
    for (int k = 2; k < 6; ++k) mask.at(j, k) = 1.0;
  }
  TTestResult result = roi_ttest(group_a, group_b, mask, 0.05);
  CHECK(result.fraction_significant == 1.0);

  // Pixels outside the mask keep p = 1.
  CHECK(result.p_values.at(0, 0) == 1.0);
  CHECK(result.p_values.at(7, 7) == 1.0);
  CHECK(result.p_values.at(3, 3) < 0.05);
}

TEST_CASE("degenerate pixels fall back to mean comparison") {
  GridShape shape{2, 2};
  std::vector<Image> group_a(3, Image(shape));
  std::vector<Image> group_b(3, Image(shape));
  for (auto& image : group_a) image.values.setConstant(1.0);
  for (auto& image : group_b) image.values.setConstant(1.0);
  Image mask(shape);
  mask.values.setOnes();

  TTestResult same = roi_ttest(group_a, group_b, mask, 0.05);
  CHECK(same.fraction_significant == 0.0);
  CHECK(same.p_values.values[0] == 1.0);

  for (auto& image : group_b) image.values.setConstant(2.0);
  TTestResult different = roi_ttest(group_a, group_b, mask, 0.05);
  CHECK(different.fraction_significant == 1.0);
  CHECK(different.p_values.values[0] == 0.0);
}

TEST_CASE("roi_ttest validation") {
  GridShape shape{2, 2};
  std::vector<Image> group(3, Image(shape));
  Image empty_mask(shape);
  CHECK_THROWS_AS(roi_ttest(group, group, empty_mask, 0.05),
                  std::invalid_argument);

  Image mask(shape);
  mask.values.setOnes();
  CHECK_THROWS_AS(roi_ttest(group, group, mask, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(roi_ttest(group, group, mask, 1.0), std::invalid_argument);

  std::vector<Image> lone(1, Image(shape));
  CHECK_THROWS_AS(roi_ttest(lone, group, mask, 0.05), std::invalid_argument);

  std::vector<Image> other(3, Image(GridShape{2, 3}));
  CHECK_THROWS_AS(roi_ttest(group, other, mask, 0.05), std::invalid_argument);
}

TEST_CASE("a one-replicate benchmark reduces to a direct fit") {
  SynthConfig synth;
  synth.shape = GridShape{16, 16};
  synth.n = 30;
  synth.sigma = 0.1;
  synth.seed = 40;

  SolverConfig config;
  config.lambda = 0.5;
  BenchmarkReport report =
      run_benchmark(synth, {{PenaltyKind::SCAD2TV, config}}, 1);
  REQUIRE(report.methods.size() == 1);
  CHECK(report.replicates == 1);
  CHECK(report.methods[0].failures == 0);

  // Replicate 0 uses the base seed unchanged.
  auto [dataset, truth] = generate(synth);
  SolverConfig direct = config;
  direct.penalty_kind = PenaltyKind::SCAD2TV;
  FitResult fitted = fit(dataset, direct);
  std::vector<Image> predicted = predict(fitted.beta_sparse, dataset.covariates);
  CHECK(report.methods[0].mean_mse ==
        prediction_mse(predicted, dataset.responses));
  REQUIRE(report.methods[0].mean_sr.size() == 3);
  for (int l = 0; l < 3; ++l) {
    CHECK(report.methods[0].mean_sr[l] ==
          selection_rate(truth.images[l], fitted.beta_sparse.images[l]));
  }

  BenchmarkReport again =
      run_benchmark(synth, {{PenaltyKind::SCAD2TV, config}}, 1);
  CHECK(again.methods[0].mean_mse == report.methods[0].mean_mse);
  for (int l = 0; l < 3; ++l) {
    CHECK(again.methods[0].mean_sr[l] == report.methods[0].mean_sr[l]);
  }
}

TEST_CASE("benchmark counts failed replicates instead of aborting") {
  SynthConfig synth;
  synth.shape = GridShape{16, 16};
  synth.n = 10;
  synth.sigma = 0.1;
  synth.seed = 41;

  SolverConfig broken;
  broken.rho = -1.0;  // rejected by the solver on every replicate
  BenchmarkReport report =
      run_benchmark(synth, {{PenaltyKind::SCAD2TV, broken}}, 2);
  CHECK(report.methods[0].failures == 2);
  CHECK(report.methods[0].mean_mse == 0.0);
  CHECK(report.methods[0].mean_sr.empty());
}

TEST_CASE("cross-validation folds account for every subject once") {
  SynthConfig synth;
  synth.shape = GridShape{16, 16};
  synth.n = 14;
  synth.sigma = 0.1;
  synth.seed = 50;
  auto [dataset, truth] = generate(synth);

  SolverConfig config;
  config.lambda = 0.5;
  config.seed = 2;
  CvReport report = run_cv(dataset, config, 4);

  REQUIRE(report.fold_indices.size() == 4);
  CHECK(report.fold_indices[0].size() == 4);
  CHECK(report.fold_indices[1].size() == 4);
  CHECK(report.fold_indices[2].size() == 3);
  CHECK(report.fold_indices[3].size() == 3);

  std::vector<int> seen(dataset.n, 0);
  for (const auto& fold : report.fold_indices) {
    for (int index : fold) {
      REQUIRE(index >= 0);
      REQUIRE(index < dataset.n);
      ++seen[index];
    }
  }
  for (int count : seen) CHECK(count == 1);

  REQUIRE(report.mean_mse.size() == 3);
  CHECK(report.mean_mse[0].first == PenaltyKind::SCAD2TV);
  CHECK(report.mean_mse[1].first == PenaltyKind::TV_L1);
  CHECK(report.mean_mse[2].first == PenaltyKind::GRAPHNET);
  for (const auto& [kind, mse] : report.mean_mse) {
    CHECK(mse > 0.0);
    CHECK(std::isfinite(mse));
  }

  CvReport again = run_cv(dataset, config, 4);
  for (std::size_t f = 0; f < report.fold_indices.size(); ++f) {
    CHECK(again.fold_indices[f] == report.fold_indices[f]);
  }
  for (std::size_t m = 0; m < report.mean_mse.size(); ++m) {
    CHECK(again.mean_mse[m].second == report.mean_mse[m].second);
  }

  CHECK_THROWS_AS(run_cv(dataset, config, 1), std::invalid_argument);
  CHECK_THROWS_AS(run_cv(dataset, config, 15), std::invalid_argument);
}
