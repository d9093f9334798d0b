#pragma once

#include <vector>

#include "regionscad/core.hpp"
#include "regionscad/solver.hpp"

namespace regionscad {

// Half-open index rectangle [r0, r1) x [c0, c1), 0-indexed.
struct TileRect {
  int r0 = 0;
  int r1 = 0;
  int c0 = 0;
  int c1 = 0;

  int rows() const { return r1 - r0; }
  int cols() const { return c1 - c0; }
  bool contains(int j, int k) const {
    return j >= r0 && j < r1 && k >= c0 && k < c1;
  }
  bool operator==(const TileRect&) const = default;
};

struct Tile {
  int index = 0;
  TileRect core;    // owned pixels, disjoint across tiles
  TileRect padded;  // core expanded by the halo, clipped to the grid
};

struct Tiling {
  GridShape shape;
  int tile_rows = 0;
  int tile_cols = 0;
  int halo = 0;
  std::vector<Tile> tiles;
};

// Partition the grid into row-major tiles with base core size
// tile_rows x tile_cols (edge tiles keep the remainder) and pad each core by
// halo pixels on every side, clipped to the grid.
Tiling make_tiling(GridShape shape, int tile_rows, int tile_cols, int halo);

// Fit each padded tile independently with solver::fit (per-tile seed =
// config.seed XOR tile index), then keep only the core region of each tile's
// estimates. Tiles run on a pool of `workers` threads (0 = one thread per
// hardware core); the merged result is identical for any pool width.
// Aggregation: iteration counts are summed, residual and objective traces are
// concatenated in tile order, converged means every tile converged, and the
// global alpha is stitched from the groups anchored in each tile's core.
FitResult fit_tiled(const Dataset& dataset, const SolverConfig& config,
                    const Tiling& tiling, int workers = 1);

}  // namespace regionscad
