#include "regionscad/iocli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <bit>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "regionscad/dnc.hpp"
#include "regionscad/metrics.hpp"
#include "regionscad/solver.hpp"

namespace regionscad {

namespace {

namespace fs = std::filesystem;

constexpr char kMagic[4] = {'I', 'O', 'S', 'R'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

std::uint32_t get_u32(const std::string& data, std::size_t offset) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    value |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + i])) << (8 * i);
  }
  return value;
}

double get_f64(const std::string& data, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[offset + i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

// All file writes go through a temporary name plus rename so that a crash
// mid-write never leaves a parseable partial file.
void write_file_atomic(const std::string& path, const std::string& content) {
  fs::path target(path);
  fs::path temp = target;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open " + temp.string() + " for writing");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
      throw IoError("short write to " + temp.string());
    }
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    throw IoError("cannot rename " + temp.string() + " to " + target.string() +
                  ": " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path + " for reading");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string json_number_array(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format_double(values[i]);
  }
  out += "]";
  return out;
}

std::string json_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

std::string solver_config_json(const SolverConfig& config) {
  std::string out = "{";
  out += "\"method\":\"" + to_string(config.penalty_kind) + "\",";
  out += "\"lambda\":" + format_double(config.lambda) + ",";
  out += "\"gamma\":" + format_double(config.gamma) + ",";
  out += "\"rho\":" + format_double(config.rho) + ",";
  out += "\"a\":" + format_double(config.a) + ",";
  out += "\"eps_abs\":" + format_double(config.eps_abs) + ",";
  out += "\"eps_rel\":" + format_double(config.eps_rel) + ",";
  out += "\"max_iter\":" + std::to_string(config.max_iter) + ",";
  out += "\"seed\":" + std::to_string(config.seed);
  out += "}";
  return out;
}

std::string synth_config_json(const SynthConfig& config) {
  std::string out = "{";
  out += "\"rows\":" + std::to_string(config.shape.rows) + ",";
  out += "\"cols\":" + std::to_string(config.shape.cols) + ",";
  out += "\"n\":" + std::to_string(config.n) + ",";
  out += "\"sigma\":" + format_double(config.sigma) + ",";
  out += "\"field_variance\":" +
         format_double(config.field_variance.value_or(config.sigma * config.sigma)) + ",";
  out += "\"field_length_scale\":" + format_double(config.field_length_scale) + ",";
  out += "\"seed\":" + std::to_string(config.seed);
  out += "}";
  return out;
}

std::string tiling_options_json(const TilingOptions& tiling) {
  std::string out = "{";
  out += "\"tile_rows\":" + std::to_string(tiling.tile_rows) + ",";
  out += "\"tile_cols\":" + std::to_string(tiling.tile_cols) + ",";
  out += "\"halo\":" + std::to_string(tiling.halo) + ",";
  out += "\"workers\":" + std::to_string(tiling.workers);
  out += "}";
  return out;
}

// Every run prints its fully resolved configuration so the run can be
// re-created from its log.
void echo_config(const std::string& subcommand, const std::string& json) {
  std::cout << "config " << subcommand << " " << json << "\n";
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& tensor) {
  if (tensor.dims.empty()) {
    throw IoError("tensor needs at least one dimension");
  }
  std::uint64_t expected = 1;
  for (std::uint32_t d : tensor.dims) expected *= d;
  if (static_cast<std::uint64_t>(tensor.data.size()) != expected) {
    throw IoError("tensor payload length " + std::to_string(tensor.data.size()) +
                  " does not match dims product " + std::to_string(expected));
  }

  std::string out;
  out.reserve(12 + 4 * tensor.dims.size() + 8 * tensor.data.size());
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (std::uint32_t d : tensor.dims) put_u32(out, d);
  for (Eigen::Index i = 0; i < tensor.data.size(); ++i) put_f64(out, tensor.data[i]);
  write_file_atomic(path, out);
}

Tensor read_tensor(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() < 12) {
    throw IoError(path + ": truncated tensor header");
  }
  if (std::string(data, 0, 4) != std::string(kMagic, 4)) {
    throw IoError(path + ": bad magic bytes (expected IOSR)");
  }
  std::uint32_t version = get_u32(data, 4);
  if (version != kFormatVersion) {
    throw IoError(path + ": unsupported format version " + std::to_string(version));
  }
  std::uint32_t rank = get_u32(data, 8);
  if (rank == 0 || rank > 8) {
    throw IoError(path + ": unsupported tensor rank " + std::to_string(rank));
  }
  if (data.size() < 12 + 4ull * rank) {
    throw IoError(path + ": truncated dimension list");
  }

  Tensor tensor;
  std::uint64_t count = 1;
  for (std::uint32_t r = 0; r < rank; ++r) {
    std::uint32_t d = get_u32(data, 12 + 4ull * r);
    tensor.dims.push_back(d);
    count *= d;
  }
  std::size_t payload_offset = 12 + 4ull * rank;
  if (data.size() != payload_offset + 8ull * count) {
    throw IoError(path + ": payload size " +
                  std::to_string(data.size() - payload_offset) +
                  " bytes does not match dims (expected " +
                  std::to_string(8ull * count) + ")");
  }
  tensor.data.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    tensor.data[static_cast<Eigen::Index>(i)] = get_f64(data, payload_offset + 8ull * i);
  }
  if (!tensor.data.allFinite()) {
    throw IoError(path + ": tensor contains non-finite values");
  }
  return tensor;
}

Tensor field_to_tensor(const CoefficientField& field) {
  validate(field);
  Tensor tensor;
  tensor.dims = {static_cast<std::uint32_t>(field.p),
                 static_cast<std::uint32_t>(field.shape.rows),
                 static_cast<std::uint32_t>(field.shape.cols)};
  tensor.data = stack(field);
  return tensor;
}

CoefficientField field_from_tensor(const Tensor& tensor) {
  if (tensor.dims.size() != 3) {
    throw IoError("coefficient tensor must have rank 3 (p x rows x cols)");
  }
  GridShape shape{static_cast<int>(tensor.dims[1]), static_cast<int>(tensor.dims[2])};
  return unstack(tensor.data, shape, static_cast<int>(tensor.dims[0]));
}

Tensor images_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) {
    throw IoError("image list is empty");
  }
  GridShape shape = images[0].shape;
  Tensor tensor;
  tensor.dims = {static_cast<std::uint32_t>(images.size()),
                 static_cast<std::uint32_t>(shape.rows),
                 static_cast<std::uint32_t>(shape.cols)};
  tensor.data.resize(static_cast<Eigen::Index>(images.size()) * shape.pixel_count());
  for (std::size_t i = 0; i < images.size(); ++i) {
    validate(images[i]);
    if (!(images[i].shape == shape)) {
      throw IoError("image list has mixed shapes");
    }
    tensor.data.segment(static_cast<Eigen::Index>(i) * shape.pixel_count(),
                        shape.pixel_count()) = images[i].values;
  }
  return tensor;
}

std::vector<Image> images_from_tensor(const Tensor& tensor) {
  if (tensor.dims.size() != 3) {
    throw IoError("image tensor must have rank 3 (n x rows x cols)");
  }
  GridShape shape{static_cast<int>(tensor.dims[1]), static_cast<int>(tensor.dims[2])};
  validate(shape);
  std::vector<Image> images;
  images.reserve(tensor.dims[0]);
  for (std::uint32_t i = 0; i < tensor.dims[0]; ++i) {
    images.push_back(devectorize(
        tensor.data.segment(static_cast<Eigen::Index>(i) * shape.pixel_count(),
                            shape.pixel_count()),
        shape));
  }
  return images;
}

void write_covariates_csv(const std::string& path,
                          const std::vector<Eigen::VectorXd>& covariates) {
  std::string out;
  for (const auto& x : covariates) {
    for (Eigen::Index l = 0; l < x.size(); ++l) {
      if (l) out += ",";
      out += format_double(x[l]);
    }
    out += "\n";
  }
  write_file_atomic(path, out);
}

std::vector<Eigen::VectorXd> read_covariates_csv(const std::string& path) {
  std::string data = read_file(path);
  std::vector<Eigen::VectorXd> rows;
  std::istringstream lines(data);
  std::string line;
  int line_number = 0;
  Eigen::Index width = -1;
  while (std::getline(lines, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<double> values;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        double value = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        values.push_back(value);
      } catch (const std::exception&) {
        throw IoError(path + ":" + std::to_string(line_number) +
                      ": cannot parse number '" + cell + "'");
      }
    }
    if (width < 0) width = static_cast<Eigen::Index>(values.size());
    if (static_cast<Eigen::Index>(values.size()) != width || values.empty()) {
      throw IoError(path + ":" + std::to_string(line_number) + ": ragged row");
    }
    rows.push_back(Eigen::Map<Eigen::VectorXd>(values.data(), width));
  }
  if (rows.empty()) {
    throw IoError(path + ": no covariate rows");
  }
  return rows;
}

void write_dataset(const Dataset& dataset, const std::string& dir) {
  validate(dataset);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + dir + ": " + ec.message());
  }
  write_covariates_csv((fs::path(dir) / "covariates.csv").string(), dataset.covariates);
  write_tensor((fs::path(dir) / "responses.iosr").string(),
               images_to_tensor(dataset.responses));
}

Dataset read_dataset(const std::string& dir) {
  fs::path base(dir);
  std::vector<Eigen::VectorXd> covariates =
      read_covariates_csv((base / "covariates.csv").string());
  Tensor responses = read_tensor((base / "responses.iosr").string());
  if (responses.dims.size() != 3) {
    throw IoError(dir + ": responses.iosr must have rank 3");
  }
  if (responses.dims[0] != covariates.size()) {
    throw IoError(dir + ": covariates.csv has " + std::to_string(covariates.size()) +
                  " rows but responses.iosr holds " +
                  std::to_string(responses.dims[0]) + " images");
  }
  Dataset dataset;
  dataset.shape = GridShape{static_cast<int>(responses.dims[1]),
                            static_cast<int>(responses.dims[2])};
  dataset.n = static_cast<int>(covariates.size());
  dataset.p = static_cast<int>(covariates[0].size());
  dataset.covariates = std::move(covariates);
  dataset.responses = images_from_tensor(responses);
  validate(dataset);
  return dataset;
}

namespace {

// Strict key checking for one JSON object.
void reject_unknown_keys(const nlohmann::json& object,
                         const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& item : object.items()) {
    bool ok = false;
    for (const auto& key : known) {
      if (item.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw IoError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& error) {
    throw IoError(path + ": " + error.what());
  }
  if (!root.is_object()) {
    throw IoError(path + ": top level must be an object");
  }
  reject_unknown_keys(root, {"solver", "synth", "tiling", "methods", "output"}, path);

  RunConfig config;
  try {
    if (root.contains("solver")) {
      const auto& solver = root["solver"];
      reject_unknown_keys(solver,
                          {"lambda", "gamma", "rho", "a", "eps_abs", "eps_rel",
                           "max_iter", "method", "seed"},
                          "solver section");
      if (solver.contains("lambda")) config.solver.lambda = solver["lambda"].get<double>();
      if (solver.contains("gamma")) config.solver.gamma = solver["gamma"].get<double>();
      if (solver.contains("rho")) config.solver.rho = solver["rho"].get<double>();
      if (solver.contains("a")) config.solver.a = solver["a"].get<double>();
      if (solver.contains("eps_abs")) config.solver.eps_abs = solver["eps_abs"].get<double>();
      if (solver.contains("eps_rel")) config.solver.eps_rel = solver["eps_rel"].get<double>();
      if (solver.contains("max_iter")) config.solver.max_iter = solver["max_iter"].get<int>();
      if (solver.contains("seed")) config.solver.seed = solver["seed"].get<std::uint64_t>();
      if (solver.contains("method")) {
        config.solver.penalty_kind =
            penalty_kind_from_string(solver["method"].get<std::string>());
      }
    }
    if (root.contains("synth")) {
      const auto& synth = root["synth"];
      reject_unknown_keys(synth,
                          {"rows", "cols", "n", "sigma", "field_variance",
                           "field_length_scale", "seed"},
                          "synth section");
      if (synth.contains("rows")) config.synth.shape.rows = synth["rows"].get<int>();
      if (synth.contains("cols")) config.synth.shape.cols = synth["cols"].get<int>();
      if (synth.contains("n")) config.synth.n = synth["n"].get<int>();
      if (synth.contains("sigma")) config.synth.sigma = synth["sigma"].get<double>();
      if (synth.contains("field_variance")) {
        config.synth.field_variance = synth["field_variance"].get<double>();
      }
      if (synth.contains("field_length_scale")) {
        config.synth.field_length_scale = synth["field_length_scale"].get<double>();
      }
      if (synth.contains("seed")) config.synth.seed = synth["seed"].get<std::uint64_t>();
    }
    if (root.contains("tiling")) {
      const auto& tiling = root["tiling"];
      reject_unknown_keys(tiling, {"tile_rows", "tile_cols", "halo", "workers"},
                          "tiling section");
      if (tiling.contains("tile_rows")) config.tiling.tile_rows = tiling["tile_rows"].get<int>();
      if (tiling.contains("tile_cols")) config.tiling.tile_cols = tiling["tile_cols"].get<int>();
      if (tiling.contains("halo")) config.tiling.halo = tiling["halo"].get<int>();
      if (tiling.contains("workers")) config.tiling.workers = tiling["workers"].get<int>();
    }
    if (root.contains("methods")) {
      config.methods.clear();
      for (const auto& name : root["methods"]) {
        config.methods.push_back(penalty_kind_from_string(name.get<std::string>()));
      }
    }
    if (root.contains("output")) {
      reject_unknown_keys(root["output"], {"dir"}, "output section");
      if (root["output"].contains("dir")) {
        config.output_dir = root["output"]["dir"].get<std::string>();
      }
    }
  } catch (const nlohmann::json::exception& error) {
    throw IoError(path + ": " + error.what());
  }
  return config;
}

namespace {

int default_workers() {
  if (const char* env = std::getenv("REGIONSCAD_WORKERS")) {
    try {
      int value = std::stoi(env);
      if (value >= 1) return value;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

struct FitFlags {
  std::string data_dir;
  std::string out_dir;
  std::string method = "scad2tv";
  SolverConfig solver;
  std::string tile;
  int halo = 1;
  int workers = default_workers();
  std::string config_path;
};

std::pair<int, int> parse_tile(const std::string& text) {
  int rows = 0;
  int cols = 0;
  if (std::sscanf(text.c_str(), "%dx%d", &rows, &cols) != 2 || rows < 1 || cols < 1) {
    throw std::invalid_argument("--tile expects ROWSxCOLS, e.g. 16x16, got '" + text + "'");
  }
  return {rows, cols};
}

std::string fit_result_json(const SolverConfig& config, const TilingOptions& tiling,
                            const FitResult& result) {
  std::string out = "{";
  out += "\"config\":" + solver_config_json(config) + ",";
  out += "\"tiling\":" + tiling_options_json(tiling) + ",";
  out += "\"iterations\":" + std::to_string(result.iterations) + ",";
  out += std::string("\"converged\":") + (result.converged ? "true" : "false") + ",";
  out += "\"max_linear_residual\":" + format_double(result.max_linear_residual) + ",";
  out += "\"primal_residuals\":" + json_number_array(result.primal_residuals) + ",";
  out += "\"dual_residuals\":" + json_number_array(result.dual_residuals) + ",";
  out += "\"objective\":" + json_number_array(result.objective_trace);
  out += "}";
  return out;
}

int run_simulate(const SynthConfig& synth, const std::string& out_dir) {
  echo_config("simulate", synth_config_json(synth) +
                              " output {\"dir\":\"" + json_escape(out_dir) + "\"}");
  auto [dataset, truth] = generate(synth);
  write_dataset(dataset, out_dir);
  write_tensor((fs::path(out_dir) / "truth.iosr").string(), field_to_tensor(truth));
  std::cout << "simulate wrote " << dataset.n << " subjects on "
            << dataset.shape.rows << "x" << dataset.shape.cols << " to "
            << out_dir << "\n";
  return kExitOk;
}

int run_fit(const FitFlags& flags) {
  SolverConfig config = flags.solver;
  config.penalty_kind = penalty_kind_from_string(flags.method);

  TilingOptions tiling;
  tiling.halo = flags.halo;
  tiling.workers = flags.workers;
  if (!flags.tile.empty()) {
    auto [tr, tc] = parse_tile(flags.tile);
    tiling.tile_rows = tr;
    tiling.tile_cols = tc;
  }

  echo_config("fit", solver_config_json(config) + " tiling " + tiling_options_json(tiling));

  Dataset dataset = read_dataset(flags.data_dir);
  FitResult result;
  if (tiling.enabled()) {
    Tiling plan = make_tiling(dataset.shape, tiling.tile_rows, tiling.tile_cols, tiling.halo);
    result = fit_tiled(dataset, config, plan, tiling.workers);
  } else {
    result = fit(dataset, config);
  }

  std::error_code ec;
  fs::create_directories(flags.out_dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + flags.out_dir + ": " + ec.message());
  }
  write_tensor((fs::path(flags.out_dir) / "beta.iosr").string(),
               field_to_tensor(result.beta));
  write_tensor((fs::path(flags.out_dir) / "beta_sparse.iosr").string(),
               field_to_tensor(result.beta_sparse));
  Tensor alpha;
  alpha.dims = {static_cast<std::uint32_t>(result.alpha.size())};
  alpha.data = result.alpha;
  write_tensor((fs::path(flags.out_dir) / "alpha.iosr").string(), alpha);
  write_file_atomic((fs::path(flags.out_dir) / "fit.json").string(),
                    fit_result_json(config, tiling, result) + "\n");

  std::cout << "fit " << (result.converged ? "converged" : "stopped") << " after "
            << result.iterations << " iterations\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"image-on-scalar regression with region-selecting penalties"};
  app.footer(
      "exit codes: 0 success, 1 usage error, 2 file error, 3 invalid input, "
      "4 solver failure");
  app.require_subcommand(1);

  // simulate
  SynthConfig synth;
  synth.shape = GridShape{64, 64};
  double field_variance = -1.0;  // negative means "use sigma^2"
  std::string sim_out;
  auto* simulate_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  simulate_cmd->add_option("--out", sim_out, "output dataset directory")->required();
  simulate_cmd->add_option("--rows", synth.shape.rows, "grid rows");
  simulate_cmd->add_option("--cols", synth.shape.cols, "grid columns");
  simulate_cmd->add_option("--n", synth.n, "subject count");
  simulate_cmd->add_option("--sigma", synth.sigma, "noise standard deviation");
  simulate_cmd->add_option("--field-variance", field_variance,
                           "spatial field variance (default sigma^2)");
  simulate_cmd->add_option("--length-scale", synth.field_length_scale,
                           "spatial field length scale in pixels");
  simulate_cmd->add_option("--seed", synth.seed, "random seed");

  // fit
  FitFlags fit_flags;
  auto* fit_cmd = app.add_subcommand("fit", "fit coefficient images to a dataset");
  fit_cmd->add_option("--data", fit_flags.data_dir, "dataset directory")->required();
  fit_cmd->add_option("--out", fit_flags.out_dir, "output directory")->required();
  fit_cmd->add_option("--method", fit_flags.method, "scad2tv, tvl1, or graphnet");
  fit_cmd->add_option("--lambda", fit_flags.solver.lambda, "penalty level");
  fit_cmd->add_option("--gamma", fit_flags.solver.gamma, "gradient/value mixing weight");
  fit_cmd->add_option("--rho", fit_flags.solver.rho, "augmented Lagrangian weight");
  fit_cmd->add_option("--a", fit_flags.solver.a, "SCAD shape parameter");
  fit_cmd->add_option("--eps-abs", fit_flags.solver.eps_abs, "absolute tolerance");
  fit_cmd->add_option("--eps-rel", fit_flags.solver.eps_rel, "relative tolerance");
  fit_cmd->add_option("--max-iter", fit_flags.solver.max_iter, "iteration cap");
  fit_cmd->add_option("--seed", fit_flags.solver.seed, "initialization seed");
  fit_cmd->add_option("--tile", fit_flags.tile, "tile size ROWSxCOLS enabling divide and conquer");
  fit_cmd->add_option("--halo", fit_flags.halo, "tile overlap width");
  fit_cmd->add_option("--workers", fit_flags.workers,
                      "tile worker count (default REGIONSCAD_WORKERS or 1)");
  fit_cmd->add_option("--config", fit_flags.config_path, "run configuration file");

  // predict
  std::string predict_beta;
  std::string predict_covariates;
  std::string predict_out;
  auto* predict_cmd = app.add_subcommand("predict", "predict responses from coefficients");
  predict_cmd->add_option("--beta", predict_beta, "coefficient tensor")->required();
  predict_cmd->add_option("--covariates", predict_covariates, "covariates csv")->required();
  predict_cmd->add_option("--out", predict_out, "output predictions tensor")->required();

  // evaluate
  std::string eval_truth;
  std::string eval_estimate;
  std::string eval_predictions;
  std::string eval_observed;
  std::string eval_roi_a;
  std::string eval_roi_b;
  std::string eval_roi_mask;
  double eval_level = 0.05;
  std::string eval_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "selection and prediction metrics");
  evaluate_cmd->add_option("--truth", eval_truth, "true coefficient tensor");
  evaluate_cmd->add_option("--estimate", eval_estimate, "estimated coefficient tensor");
  evaluate_cmd->add_option("--predictions", eval_predictions, "predicted responses tensor");
  evaluate_cmd->add_option("--observed", eval_observed, "observed responses tensor");
  evaluate_cmd->add_option("--roi-a", eval_roi_a, "group A images tensor for the ROI test");
  evaluate_cmd->add_option("--roi-b", eval_roi_b, "group B images tensor for the ROI test");
  evaluate_cmd->add_option("--roi-mask", eval_roi_mask, "ROI mask tensor (nonzero = tested)");
  evaluate_cmd->add_option("--level", eval_level, "significance level");
  evaluate_cmd->add_option("--out", eval_out, "optional JSON report path");

  // benchmark
  SynthConfig bench_synth;
  bench_synth.shape = GridShape{32, 32};
  double bench_field_variance = -1.0;
  SolverConfig bench_solver;
  std::string bench_methods = "scad2tv,tvl1,graphnet";
  double bench_lambda_scad2tv = -1.0;
  double bench_lambda_tvl1 = -1.0;
  double bench_lambda_graphnet = -1.0;
  int bench_replicates = 10;
  std::string bench_out;
  auto* benchmark_cmd = app.add_subcommand("benchmark", "replicated method comparison");
  benchmark_cmd->add_option("--out", bench_out, "JSON report path")->required();
  benchmark_cmd->add_option("--rows", bench_synth.shape.rows, "grid rows");
  benchmark_cmd->add_option("--cols", bench_synth.shape.cols, "grid columns");
  benchmark_cmd->add_option("--n", bench_synth.n, "subject count");
  benchmark_cmd->add_option("--sigma", bench_synth.sigma, "noise standard deviation");
  benchmark_cmd->add_option("--field-variance", bench_field_variance,
                            "spatial field variance (default sigma^2)");
  benchmark_cmd->add_option("--length-scale", bench_synth.field_length_scale,
                            "spatial field length scale");
  benchmark_cmd->add_option("--seed", bench_synth.seed, "data seed base");
  benchmark_cmd->add_option("--replicates", bench_replicates, "replicate count");
  benchmark_cmd->add_option("--methods", bench_methods, "comma-separated method list");
  benchmark_cmd->add_option("--lambda", bench_solver.lambda, "penalty level for all methods");
  benchmark_cmd->add_option("--lambda-scad2tv", bench_lambda_scad2tv, "scad2tv override");
  benchmark_cmd->add_option("--lambda-tvl1", bench_lambda_tvl1, "tvl1 override");
  benchmark_cmd->add_option("--lambda-graphnet", bench_lambda_graphnet, "graphnet override");
  benchmark_cmd->add_option("--gamma", bench_solver.gamma, "mixing weight");
  benchmark_cmd->add_option("--rho", bench_solver.rho, "augmented Lagrangian weight");
  benchmark_cmd->add_option("--a", bench_solver.a, "SCAD shape parameter");
  benchmark_cmd->add_option("--eps-abs", bench_solver.eps_abs, "absolute tolerance");
  benchmark_cmd->add_option("--eps-rel", bench_solver.eps_rel, "relative tolerance");
  benchmark_cmd->add_option("--max-iter", bench_solver.max_iter, "iteration cap");
  benchmark_cmd->add_option("--solver-seed", bench_solver.seed, "initialization seed");

  // cv
  std::string cv_data;
  int cv_folds = 5;
  SolverConfig cv_solver;
  std::string cv_method = "scad2tv";
  std::string cv_out;
  auto* cv_cmd = app.add_subcommand("cv", "K-fold held-out MSE comparison");
  cv_cmd->add_option("--data", cv_data, "dataset directory")->required();
  cv_cmd->add_option("--folds", cv_folds, "fold count");
  cv_cmd->add_option("--lambda", cv_solver.lambda, "penalty level");
  cv_cmd->add_option("--gamma", cv_solver.gamma, "mixing weight");
  cv_cmd->add_option("--rho", cv_solver.rho, "augmented Lagrangian weight");
  cv_cmd->add_option("--a", cv_solver.a, "SCAD shape parameter");
  cv_cmd->add_option("--eps-abs", cv_solver.eps_abs, "absolute tolerance");
  cv_cmd->add_option("--eps-rel", cv_solver.eps_rel, "relative tolerance");
  cv_cmd->add_option("--max-iter", cv_solver.max_iter, "iteration cap");
  cv_cmd->add_option("--seed", cv_solver.seed, "shuffle and initialization seed");
  cv_cmd->add_option("--out", cv_out, "optional JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::CallForAllHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& error) {
    app.exit(error);
    return kExitUsage;
  }

  try {
    if (simulate_cmd->parsed()) {
      if (field_variance >= 0.0) synth.field_variance = field_variance;
      return run_simulate(synth, sim_out);
    }

    if (fit_cmd->parsed()) {
      if (!fit_flags.config_path.empty()) {
        RunConfig base = parse_run_config(fit_flags.config_path);
        SolverConfig merged = base.solver;
        // Explicit flags override file values.
        if (fit_cmd->count("--method")) {
          merged.penalty_kind = penalty_kind_from_string(fit_flags.method);
        }
        if (fit_cmd->count("--lambda")) merged.lambda = fit_flags.solver.lambda;
        if (fit_cmd->count("--gamma")) merged.gamma = fit_flags.solver.gamma;
        if (fit_cmd->count("--rho")) merged.rho = fit_flags.solver.rho;
        if (fit_cmd->count("--a")) merged.a = fit_flags.solver.a;
        if (fit_cmd->count("--eps-abs")) merged.eps_abs = fit_flags.solver.eps_abs;
        if (fit_cmd->count("--eps-rel")) merged.eps_rel = fit_flags.solver.eps_rel;
        if (fit_cmd->count("--max-iter")) merged.max_iter = fit_flags.solver.max_iter;
        if (fit_cmd->count("--seed")) merged.seed = fit_flags.solver.seed;
        fit_flags.solver = merged;
        fit_flags.method = to_string(merged.penalty_kind);
        if (base.tiling.enabled() && fit_flags.tile.empty()) {
          fit_flags.tile = std::to_string(base.tiling.tile_rows) + "x" +
                           std::to_string(base.tiling.tile_cols);
          if (!fit_cmd->count("--halo")) fit_flags.halo = base.tiling.halo;
          if (!fit_cmd->count("--workers")) fit_flags.workers = base.tiling.workers;
        }
      }
      return run_fit(fit_flags);
    }

    if (predict_cmd->parsed()) {
      CoefficientField field = field_from_tensor(read_tensor(predict_beta));
      std::vector<Eigen::VectorXd> covariates = read_covariates_csv(predict_covariates);
      echo_config("predict",
                  "{\"beta\":\"" + json_escape(predict_beta) + "\",\"covariates\":\"" +
                      json_escape(predict_covariates) + "\",\"out\":\"" +
                      json_escape(predict_out) + "\"}");
      std::vector<Image> predictions = predict(field, covariates);
      write_tensor(predict_out, images_to_tensor(predictions));
      std::cout << "predict wrote " << predictions.size() << " images to "
                << predict_out << "\n";
      return kExitOk;
    }

    if (evaluate_cmd->parsed()) {
      echo_config("evaluate",
                  "{\"level\":" + format_double(eval_level) + "}");
      bool did_anything = false;
      std::string report = "{";

      if (!eval_truth.empty() || !eval_estimate.empty()) {
        if (eval_truth.empty() || eval_estimate.empty()) {
          throw std::invalid_argument("evaluate needs both --truth and --estimate for SR");
        }
        CoefficientField truth = field_from_tensor(read_tensor(eval_truth));
        CoefficientField estimate = field_from_tensor(read_tensor(eval_estimate));
        if (truth.p != estimate.p || !(truth.shape == estimate.shape)) {
          throw std::invalid_argument("truth and estimate layouts differ");
        }
        std::vector<double> rates;
        for (int l = 0; l < truth.p; ++l) {
          rates.push_back(selection_rate(truth.images[l], estimate.images[l]));
          std::cout << "sr coefficient " << l << " " << format_double(rates.back()) << "\n";
        }
        report += "\"selection_rate\":" + json_number_array(rates) + ",";
        did_anything = true;
      }

      if (!eval_predictions.empty() || !eval_observed.empty()) {
        if (eval_predictions.empty() || eval_observed.empty()) {
          throw std::invalid_argument("evaluate needs both --predictions and --observed for MSE");
        }
        std::vector<Image> predicted = images_from_tensor(read_tensor(eval_predictions));
        std::vector<Image> observed = images_from_tensor(read_tensor(eval_observed));
        double mse = prediction_mse(predicted, observed);
        std::cout << "mse " << format_double(mse) << "\n";
        report += "\"mse\":" + format_double(mse) + ",";
        did_anything = true;
      }

      if (!eval_roi_a.empty() || !eval_roi_b.empty() || !eval_roi_mask.empty()) {
        if (eval_roi_a.empty() || eval_roi_b.empty() || eval_roi_mask.empty()) {
          throw std::invalid_argument(
              "evaluate needs --roi-a, --roi-b, and --roi-mask for the ROI test");
        }
        std::vector<Image> group_a = images_from_tensor(read_tensor(eval_roi_a));
        std::vector<Image> group_b = images_from_tensor(read_tensor(eval_roi_b));
        Tensor mask_tensor = read_tensor(eval_roi_mask);
        if (mask_tensor.dims.size() != 2) {
          throw std::invalid_argument("--roi-mask must be a rank-2 tensor");
        }
        Image mask = devectorize(mask_tensor.data,
                                 GridShape{static_cast<int>(mask_tensor.dims[0]),
                                           static_cast<int>(mask_tensor.dims[1])});
        TTestResult test = roi_ttest(group_a, group_b, mask, eval_level);
        std::cout << "roi fraction_significant " << format_double(test.fraction_significant)
                  << "\n";
        report += "\"roi_fraction_significant\":" +
                  format_double(test.fraction_significant) + ",";
        did_anything = true;
      }

      if (!did_anything) {
        throw std::invalid_argument(
            "evaluate needs --truth/--estimate, --predictions/--observed, or ROI flags");
      }
      if (report.back() == ',') report.pop_back();
      report += "}";
      if (!eval_out.empty()) write_file_atomic(eval_out, report + "\n");
      return kExitOk;
    }

    if (benchmark_cmd->parsed()) {
      if (bench_field_variance >= 0.0) bench_synth.field_variance = bench_field_variance;
      std::vector<std::pair<PenaltyKind, SolverConfig>> methods;
      std::istringstream names(bench_methods);
      std::string name;
      while (std::getline(names, name, ',')) {
        if (name.empty()) continue;
        PenaltyKind kind = penalty_kind_from_string(name);
        SolverConfig method_config = bench_solver;
        method_config.penalty_kind = kind;
        if (kind == PenaltyKind::SCAD2TV && bench_lambda_scad2tv >= 0.0) {
          method_config.lambda = bench_lambda_scad2tv;
        }
        if (kind == PenaltyKind::TV_L1 && bench_lambda_tvl1 >= 0.0) {
          method_config.lambda = bench_lambda_tvl1;
        }
        if (kind == PenaltyKind::GRAPHNET && bench_lambda_graphnet >= 0.0) {
          method_config.lambda = bench_lambda_graphnet;
        }
        methods.emplace_back(kind, method_config);
      }

      std::string methods_json = "[";
      for (std::size_t m = 0; m < methods.size(); ++m) {
        if (m) methods_json += ",";
        methods_json += solver_config_json(methods[m].second);
      }
      methods_json += "]";
      echo_config("benchmark", synth_config_json(bench_synth) +
                                   " replicates " + std::to_string(bench_replicates) +
                                   " methods " + methods_json);

      BenchmarkReport report = run_benchmark(bench_synth, methods, bench_replicates);

      std::string out = "{";
      out += "\"synth\":" + synth_config_json(report.synth) + ",";
      out += "\"replicates\":" + std::to_string(report.replicates) + ",";
      out += "\"methods\":[";
      for (std::size_t m = 0; m < report.methods.size(); ++m) {
        const MethodSummary& summary = report.methods[m];
        if (m) out += ",";
        out += "{\"method\":\"" + to_string(summary.method) + "\",";
        out += "\"config\":" + solver_config_json(summary.config) + ",";
        out += "\"mean_sr\":" + json_number_array(summary.mean_sr) + ",";
        out += "\"mean_mse\":" + format_double(summary.mean_mse) + ",";
        out += "\"failures\":" + std::to_string(summary.failures) + "}";

        std::cout << "method " << to_string(summary.method) << " mean_mse "
                  << format_double(summary.mean_mse) << " mean_sr";
        for (double sr : summary.mean_sr) std::cout << " " << format_double(sr);
        std::cout << "\n";
      }
      out += "]}";
      write_file_atomic(bench_out, out + "\n");
      return kExitOk;
    }

    if (cv_cmd->parsed()) {
      echo_config("cv", solver_config_json(cv_solver) + " folds " + std::to_string(cv_folds));
      Dataset dataset = read_dataset(cv_data);
      CvReport report = run_cv(dataset, cv_solver, cv_folds);
      std::string out = "{\"folds\":" + std::to_string(report.folds) + ",\"mean_mse\":{";
      for (std::size_t m = 0; m < report.mean_mse.size(); ++m) {
        if (m) out += ",";
        out += "\"" + to_string(report.mean_mse[m].first) + "\":" +
               format_double(report.mean_mse[m].second);
        std::cout << "cv " << to_string(report.mean_mse[m].first) << " mean_mse "
                  << format_double(report.mean_mse[m].second) << "\n";
      }
      out += "}}";
      if (!cv_out.empty()) write_file_atomic(cv_out, out + "\n");
      return kExitOk;
    }
  } catch (const IoError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitIo;
  } catch (const SolverError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitSolver;
  } catch (const std::invalid_argument& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitInvalid;
  }
  return kExitUsage;
}

}  // namespace regionscad
