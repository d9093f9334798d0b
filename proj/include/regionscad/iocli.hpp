#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "regionscad/core.hpp"
#include "regionscad/synth.hpp"

namespace regionscad {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exit codes shared by the CLI; also listed in --help.
inline constexpr int kExitOk = 0;       // success
inline constexpr int kExitUsage = 1;    // bad flags or subcommand
inline constexpr int kExitIo = 2;       // unreadable or malformed files
inline constexpr int kExitInvalid = 3;  // invalid parameter values
inline constexpr int kExitSolver = 4;   // solver divergence

// Binary tensor file: magic "IOSR", u32 version = 1, u32 rank, rank x u32
// dims, then row-major little-endian float64 payload. All values must be
// finite on read. Writes go to a temporary file renamed into place, so a
// partial file never parses.
struct Tensor {
  std::vector<std::uint32_t> dims;
  Eigen::VectorXd data;
};

void write_tensor(const std::string& path, const Tensor& tensor);
Tensor read_tensor(const std::string& path);

Tensor field_to_tensor(const CoefficientField& field);
CoefficientField field_from_tensor(const Tensor& tensor);
Tensor images_to_tensor(const std::vector<Image>& images);
std::vector<Image> images_from_tensor(const Tensor& tensor);

void write_covariates_csv(const std::string& path,
                          const std::vector<Eigen::VectorXd>& covariates);
std::vector<Eigen::VectorXd> read_covariates_csv(const std::string& path);

// Dataset directory layout: covariates.csv (n rows x p headerless decimal
// columns) and responses.iosr (rank-3 tensor, dims n x rows x cols).
void write_dataset(const Dataset& dataset, const std::string& dir);
Dataset read_dataset(const std::string& dir);

struct TilingOptions {
  int tile_rows = 0;  // 0 = tiling disabled
  int tile_cols = 0;
  int halo = 1;
  int workers = 1;

  bool enabled() const { return tile_rows > 0 && tile_cols > 0; }
};

// Structured run configuration file (JSON text with sections "solver",
// "synth", "tiling", "methods", "output"). Unknown keys anywhere are
// rejected.
struct RunConfig {
  SolverConfig solver;
  SynthConfig synth;
  TilingOptions tiling;
  std::vector<PenaltyKind> methods{PenaltyKind::SCAD2TV, PenaltyKind::TV_L1,
                                   PenaltyKind::GRAPHNET};
  std::string output_dir;
};

RunConfig parse_run_config(const std::string& path);

// Entry point behind the regionscad binary. Subcommands: simulate, fit,
// predict, evaluate, benchmark, cv. Every run echoes its fully resolved
// configuration to stdout. Returns one of the kExit* codes.
int cli_main(int argc, char** argv);

}  // namespace regionscad
