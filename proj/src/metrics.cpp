#include "regionscad/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "regionscad/rng.hpp"
#include "regionscad/solver.hpp"

namespace regionscad {

double selection_rate(const Image& truth, const Image& estimate) {
  validate(truth);
  validate(estimate);
  if (!(truth.shape == estimate.shape)) {
    throw std::invalid_argument("selection_rate: image shapes differ");
  }
  const Eigen::Index pixels = truth.values.size();
  Eigen::Index agree = 0;
  for (Eigen::Index s = 0; s < pixels; ++s) {
    if ((truth.values[s] == 0.0) == (estimate.values[s] == 0.0)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(pixels);
}

double prediction_mse(const std::vector<Image>& predicted,
                      const std::vector<Image>& observed) {
  if (predicted.size() != observed.size() || predicted.empty()) {
    throw std::invalid_argument("prediction_mse: image counts differ or are empty");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!(predicted[i].shape == observed[i].shape)) {
      throw std::invalid_argument("prediction_mse: image shapes differ");
    }
    total += (predicted[i].values - observed[i].values).squaredNorm();
  }
  return total / (static_cast<double>(predicted.size()) *
                  static_cast<double>(predicted[0].shape.pixel_count()));
}

TTestResult roi_ttest(const std::vector<Image>& group_a,
                      const std::vector<Image>& group_b, const Image& roi_mask,
                      double level) {
  if (group_a.size() < 2 || group_b.size() < 2) {
    throw std::invalid_argument("roi_ttest: each group needs at least 2 images");
  }
  validate(roi_mask);
  for (const auto& image : group_a) {
    if (!(image.shape == roi_mask.shape)) {
      throw std::invalid_argument("roi_ttest: group image shape differs from mask");
    }
  }
  for (const auto& image : group_b) {
    if (!(image.shape == roi_mask.shape)) {
      throw std::invalid_argument("roi_ttest: group image shape differs from mask");
    }
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("roi_ttest: level must lie in (0, 1)");
  }

  const double na = static_cast<double>(group_a.size());
  const double nb = static_cast<double>(group_b.size());
  const Eigen::Index pixels = roi_mask.values.size();

  TTestResult result;
  result.p_values = Image(roi_mask.shape);
  result.p_values.values.setOnes();

  Eigen::Index masked = 0;
  Eigen::Index significant = 0;
  for (Eigen::Index s = 0; s < pixels; ++s) {
    if (roi_mask.values[s] == 0.0) continue;
    ++masked;

    double mean_a = 0.0;
    double mean_b = 0.0;
    for (const auto& image : group_a) mean_a += image.values[s];
    for (const auto& image : group_b) mean_b += image.values[s];
    mean_a /= na;
    mean_b /= nb;

    double var_a = 0.0;
    double var_b = 0.0;
    for (const auto& image : group_a) {
      double d = image.values[s] - mean_a;
      var_a += d * d;
    }
    for (const auto& image : group_b) {
      double d = image.values[s] - mean_b;
      var_b += d * d;
    }
    var_a /= na - 1.0;
    var_b /= nb - 1.0;

    double p;
    if (var_a == 0.0 && var_b == 0.0) {
      // Degenerate pixel: no variation in either group.
      p = mean_a == mean_b ? 1.0 : 0.0;
    } else {
      double se2 = var_a / na + var_b / nb;
      double t = (mean_a - mean_b) / std::sqrt(se2);
      double df = se2 * se2 / ((var_a / na) * (var_a / na) / (na - 1.0) +
                               (var_b / nb) * (var_b / nb) / (nb - 1.0));
      boost::math::students_t dist(df);
      p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    }
    result.p_values.values[s] = p;
    if (p < level) ++significant;
  }
  if (masked == 0) {
    throw std::invalid_argument("roi_ttest: mask selects no pixels");
  }
  result.fraction_significant =
      static_cast<double>(significant) / static_cast<double>(masked);
  return result;
}

BenchmarkReport run_benchmark(
    const SynthConfig& synth,
    const std::vector<std::pair<PenaltyKind, SolverConfig>>& methods,
    int replicates) {
  validate(synth);
  if (replicates < 1) {
    throw std::invalid_argument("run_benchmark: replicates must be positive");
  }
  if (methods.empty()) {
    throw std::invalid_argument("run_benchmark: no methods given");
  }

  BenchmarkReport report;
  report.synth = synth;
  report.replicates = replicates;
  for (const auto& [kind, config] : methods) {
    MethodSummary summary;
    summary.method = kind;
    summary.config = config;
    summary.config.penalty_kind = kind;
    report.methods.push_back(std::move(summary));
  }

  std::vector<std::vector<double>> sr_sums(methods.size());
  std::vector<double> mse_sums(methods.size(), 0.0);
  std::vector<int> successes(methods.size(), 0);

  for (int r = 0; r < replicates; ++r) {
    SynthConfig replicate = synth;
    replicate.seed = synth.seed + static_cast<std::uint64_t>(r);
    auto [dataset, truth] = generate(replicate);

    for (std::size_t m = 0; m < report.methods.size(); ++m) {
      try {
        FitResult fitted = fit(dataset, report.methods[m].config);
        std::vector<Image> predicted = predict(fitted.beta_sparse, dataset.covariates);
        double mse = prediction_mse(predicted, dataset.responses);

        if (sr_sums[m].empty()) sr_sums[m].assign(truth.p, 0.0);
        for (int l = 0; l < truth.p; ++l) {
          sr_sums[m][l] += selection_rate(truth.images[l], fitted.beta_sparse.images[l]);
        }
        mse_sums[m] += mse;
        ++successes[m];
      } catch (const std::exception&) {
        ++report.methods[m].failures;
      }
    }
  }

  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    if (successes[m] > 0) {
      report.methods[m].mean_mse = mse_sums[m] / successes[m];
      report.methods[m].mean_sr.resize(sr_sums[m].size());
      for (std::size_t l = 0; l < sr_sums[m].size(); ++l) {
        report.methods[m].mean_sr[l] = sr_sums[m][l] / successes[m];
      }
    }
  }
  return report;
}

CvReport run_cv(const Dataset& dataset, const SolverConfig& config, int folds) {
  validate(dataset);
  validate(config);
  if (folds < 2 || folds > dataset.n) {
    throw std::invalid_argument("run_cv: folds must lie in [2, n]");
  }

  // One seeded shuffle, then contiguous blocks whose sizes differ by at most
  // one; the same folds are reused by every method.
  std::vector<int> order(dataset.n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed);
  for (int i = dataset.n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(order[i], order[j]);
  }

  CvReport report;
  report.folds = folds;
  const int base = dataset.n / folds;
  const int remainder = dataset.n % folds;
  int cursor = 0;
  for (int f = 0; f < folds; ++f) {
    int size = base + (f < remainder ? 1 : 0);
    report.fold_indices.emplace_back(order.begin() + cursor,
                                     order.begin() + cursor + size);
    cursor += size;
  }

  const PenaltyKind kinds[] = {PenaltyKind::SCAD2TV, PenaltyKind::TV_L1,
                               PenaltyKind::GRAPHNET};
  for (PenaltyKind kind : kinds) {
    SolverConfig method_config = config;
    method_config.penalty_kind = kind;

    double mse_sum = 0.0;
    for (int f = 0; f < folds; ++f) {
      Dataset train;
      train.shape = dataset.shape;
      train.p = dataset.p;
      std::vector<Eigen::VectorXd> held_x;
      std::vector<Image> held_y;
      for (int g = 0; g < folds; ++g) {
        for (int index : report.fold_indices[g]) {
          if (g == f) {
            held_x.push_back(dataset.covariates[index]);
            held_y.push_back(dataset.responses[index]);
          } else {
            train.covariates.push_back(dataset.covariates[index]);
            train.responses.push_back(dataset.responses[index]);
          }
        }
      }
      train.n = static_cast<int>(train.covariates.size());

      FitResult fitted = fit(train, method_config);
      std::vector<Image> predicted = predict(fitted.beta_sparse, held_x);
      mse_sum += prediction_mse(predicted, held_y);
    }
    report.mean_mse.emplace_back(kind, mse_sum / folds);
  }
  return report;
}

}  // namespace regionscad
