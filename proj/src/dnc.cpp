#include "regionscad/dnc.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "regionscad/diffops.hpp"

namespace regionscad {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Row offsets of each pixel's group within one coefficient block, in the
// row-major group enumeration used by build_diff_operator.
struct GroupLayout {
  GridShape shape;
  std::vector<Eigen::Index> prefix;  // pixel index -> first row of its group
  Eigen::Index rows_per_coefficient = 0;

  explicit GroupLayout(GridShape s) : shape(s) {
    prefix.reserve(static_cast<std::size_t>(s.rows) * s.cols);
    Eigen::Index row = 0;
    for (int j = 0; j < s.rows; ++j) {
      for (int k = 0; k < s.cols; ++k) {
        prefix.push_back(row);
        row += group_row_count(s, j, k);
      }
    }
    rows_per_coefficient = row;
  }

  Eigen::Index group_start(int l, int j, int k) const {
    return static_cast<Eigen::Index>(l) * rows_per_coefficient +
           prefix[static_cast<std::size_t>(j) * shape.cols + k];
  }
};

Dataset crop_dataset(const Dataset& dataset, const TileRect& rect) {
  Dataset sub;
  sub.shape = GridShape{rect.rows(), rect.cols()};
  sub.n = dataset.n;
  sub.p = dataset.p;
  sub.covariates = dataset.covariates;
  sub.responses.reserve(dataset.n);
  for (const auto& response : dataset.responses) {
    Image cropped(sub.shape);
    for (int j = rect.r0; j < rect.r1; ++j) {
      for (int k = rect.c0; k < rect.c1; ++k) {
        cropped.at(j - rect.r0, k - rect.c0) = response.at(j, k);
      }
    }
    sub.responses.push_back(std::move(cropped));
  }
  return sub;
}

}  // namespace

Tiling make_tiling(GridShape shape, int tile_rows, int tile_cols, int halo) {
  validate(shape);
  if (tile_rows < 1 || tile_rows > shape.rows || tile_cols < 1 ||
      tile_cols > shape.cols) {
    throw std::invalid_argument("tile size must lie between 1 and the grid size");
  }
  if (halo < 1) {
    throw std::invalid_argument("halo must be at least 1");
  }

  Tiling tiling;
  tiling.shape = shape;
  tiling.tile_rows = tile_rows;
  tiling.tile_cols = tile_cols;
  tiling.halo = halo;

  const int bands_r = ceil_div(shape.rows, tile_rows);
  const int bands_c = ceil_div(shape.cols, tile_cols);
  for (int br = 0; br < bands_r; ++br) {
    for (int bc = 0; bc < bands_c; ++bc) {
      Tile tile;
      tile.index = br * bands_c + bc;
      tile.core = TileRect{br * tile_rows,
                           std::min((br + 1) * tile_rows, shape.rows),
                           bc * tile_cols,
                           std::min((bc + 1) * tile_cols, shape.cols)};
      tile.padded = TileRect{std::max(tile.core.r0 - halo, 0),
                             std::min(tile.core.r1 + halo, shape.rows),
                             std::max(tile.core.c0 - halo, 0),
                             std::min(tile.core.c1 + halo, shape.cols)};
      if (tile.padded.rows() < 2 || tile.padded.cols() < 2) {
        throw std::invalid_argument("padded tile is smaller than 2x2");
      }
      tiling.tiles.push_back(tile);
    }
  }
  return tiling;
}

FitResult fit_tiled(const Dataset& dataset, const SolverConfig& config,
                    const Tiling& tiling, int workers) {
  validate(dataset);
  validate(config);
  if (!(tiling.shape == dataset.shape)) {
    throw std::invalid_argument("fit_tiled: tiling shape does not match dataset shape");
  }
  if (tiling.tiles.empty()) {
    throw std::invalid_argument("fit_tiled: tiling has no tiles");
  }

  const std::size_t tile_count = tiling.tiles.size();
  std::vector<FitResult> tile_results(tile_count);
  std::vector<std::string> tile_errors(tile_count);

  int width = workers > 0
                  ? workers
                  : std::max(1u, std::thread::hardware_concurrency());
  width = std::min<int>(width, static_cast<int>(tile_count));

  std::atomic<std::size_t> next{0};
  auto run_tiles = [&]() {
    while (true) {
      std::size_t index = next.fetch_add(1);
      if (index >= tile_count) break;
      const Tile& tile = tiling.tiles[index];
      try {
        Dataset sub = crop_dataset(dataset, tile.padded);
        SolverConfig tile_config = config;
        tile_config.seed = config.seed ^ static_cast<std::uint64_t>(tile.index);
        tile_results[index] = fit(sub, tile_config);
      } catch (const std::exception& error) {
        tile_errors[index] = error.what();
      }
    }
  };

  if (width <= 1) {
    run_tiles();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(width);
    for (int t = 0; t < width; ++t) pool.emplace_back(run_tiles);
    for (auto& thread : pool) thread.join();
  }

  for (std::size_t t = 0; t < tile_count; ++t) {
    if (!tile_errors[t].empty()) {
      throw SolverError("tile " + std::to_string(t) + " failed: " + tile_errors[t]);
    }
  }

  const Eigen::Index pixels = dataset.shape.pixel_count();
  const GroupLayout global_layout(dataset.shape);

  FitResult merged;
  merged.alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dataset.p) *
                                       global_layout.rows_per_coefficient);
  Eigen::VectorXd beta_vec(static_cast<Eigen::Index>(dataset.p) * pixels);
  Eigen::VectorXd sparse_vec(static_cast<Eigen::Index>(dataset.p) * pixels);
  merged.converged = true;

  for (std::size_t t = 0; t < tile_count; ++t) {
    const Tile& tile = tiling.tiles[t];
    const FitResult& local = tile_results[t];
    const GroupLayout tile_layout(GridShape{tile.padded.rows(), tile.padded.cols()});

    for (int l = 0; l < dataset.p; ++l) {
      for (int j = tile.core.r0; j < tile.core.r1; ++j) {
        for (int k = tile.core.c0; k < tile.core.c1; ++k) {
          const int tj = j - tile.padded.r0;
          const int tk = k - tile.padded.c0;
          const Eigen::Index pixel = static_cast<Eigen::Index>(l) * pixels +
                                     static_cast<Eigen::Index>(j) * dataset.shape.cols + k;
          beta_vec[pixel] = local.beta.images[l].at(tj, tk);
          sparse_vec[pixel] = local.beta_sparse.images[l].at(tj, tk);

          // A core pixel has the same group shape in the padded tile as in
          // the full grid: the padded rectangle extends past the core on any
          // side that is not the grid border.
          const int rows_here = group_row_count(dataset.shape, j, k);
          if (rows_here == 0) continue;
          const Eigen::Index src = tile_layout.group_start(l, tj, tk);
          const Eigen::Index dst = global_layout.group_start(l, j, k);
          merged.alpha.segment(dst, rows_here) = local.alpha.segment(src, rows_here);
        }
      }
    }

    merged.iterations += local.iterations;
    merged.converged = merged.converged && local.converged;
    merged.max_linear_residual =
        std::max(merged.max_linear_residual, local.max_linear_residual);
    merged.primal_residuals.insert(merged.primal_residuals.end(),
                                   local.primal_residuals.begin(),
                                   local.primal_residuals.end());
    merged.dual_residuals.insert(merged.dual_residuals.end(),
                                 local.dual_residuals.begin(),
                                 local.dual_residuals.end());
    merged.objective_trace.insert(merged.objective_trace.end(),
                                  local.objective_trace.begin(),
                                  local.objective_trace.end());
  }

  merged.beta = unstack(beta_vec, dataset.shape, dataset.p);
  merged.beta_sparse = unstack(sparse_vec, dataset.shape, dataset.p);
  return merged;
}

}  // namespace regionscad
