#pragma once

// On-disk containers: a JSON manifest next to a raw little-endian, row-major
// f64 blob. Used for matrices, basis sets and adapter checkpoints.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "randlora/adapters.hpp"
#include "randlora/errors.hpp"
#include "randlora/randbasis.hpp"
#include "randlora/spectral.hpp"
#include "randlora/trainkit.hpp"

namespace randlora::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return out;
  }
}

inline void append_f64(std::vector<char>& buf, double x) {
  const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(x));
  char bytes[8];
  std::memcpy(bytes, &bits, 8);
  buf.insert(buf.end(), bytes, bytes + 8);
}

inline double read_f64(const char* p) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, p, 8);
  return std::bit_cast<double>(to_little(bits));
}

inline void append_matrix(std::vector<char>& buf, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) append_f64(buf, m(i, j));
}

inline Matrix read_matrix(const std::vector<char>& buf, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
  const std::size_t need = offset + static_cast<std::size_t>(rows * cols) * 8;
  if (need > buf.size()) randlora::detail::fail<FormatError>("io::read_matrix", "binary blob is truncated");
  Matrix m(rows, cols);
  const char* p = buf.data() + offset;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j, p += 8) m(i, j) = read_f64(p);
  return m;
}

inline void write_bytes(const fs::path& path, const std::vector<char>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) randlora::detail::fail<FormatError>("io::write", "cannot open " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) randlora::detail::fail<FormatError>("io::read", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline json container_header(const std::string& format) {
  return {{"format", format}, {"version", 1}, {"dtype", "f64"}, {"layout", "row-major"}, {"endianness", "little"}};
}

inline void check_header(const json& j, const std::string& format) {
  constexpr const char* where = "io::load";
  if (j.value("format", "") != format) randlora::detail::fail<FormatError>(where, "expected format " + format);
  if (j.value("dtype", "") != "f64" || j.value("layout", "") != "row-major" || j.value("endianness", "") != "little") {
    randlora::detail::fail<FormatError>(where, "unsupported dtype/layout/endianness");
  }
}

inline fs::path manifest_path(const fs::path& stem) { return fs::path(stem.string() + ".json"); }
inline fs::path blob_path(const fs::path& stem) { return fs::path(stem.string() + ".bin"); }

inline fs::path stem_of(const fs::path& manifest) {
  auto s = manifest.string();
  if (s.size() > 5 && s.ends_with(".json")) s.resize(s.size() - 5);
  return s;
}

} // namespace detail

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) randlora::detail::fail<FormatError>("io::write_json", "cannot open " + path.string());
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) randlora::detail::fail<FormatError>("io::read_json", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    randlora::detail::fail<FormatError>("io::read_json", path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Writes <stem>.json and <stem>.bin; returns the manifest path.
inline fs::path save_matrix(const fs::path& stem, const Matrix& m, const json& config = json::object()) {
  std::vector<char> buf;
  detail::append_matrix(buf, m);
  json manifest = detail::container_header("randlora-matrix");
  manifest["shape"] = {m.rows(), m.cols()};
  manifest["data"] = detail::blob_path(stem).filename().string();
  if (!config.empty()) manifest["config"] = config;
  detail::write_bytes(detail::blob_path(stem), buf);
  write_json(detail::manifest_path(stem), manifest);
  return detail::manifest_path(stem);
}

inline Matrix load_matrix_manifest(const fs::path& manifest_file) {
  const json j = read_json(manifest_file);
  detail::check_header(j, "randlora-matrix");
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2) randlora::detail::fail<FormatError>("io::load_matrix", "matrix shape must be 2-D");
  const auto blob = detail::read_bytes(manifest_file.parent_path() / j.at("data").get<std::string>());
  if (blob.size() != static_cast<std::size_t>(shape[0] * shape[1]) * 8) {
    randlora::detail::fail<FormatError>("io::load_matrix", "blob size does not match shape");
  }
  return detail::read_matrix(blob, 0, shape[0], shape[1]);
}

/// Comma-separated numeric matrix, one row per line. Limited to 64 x 64.
inline Matrix load_matrix_csv(const fs::path& path) {
  constexpr const char* where = "io::load_matrix_csv";
  std::ifstream in(path);
  if (!in) randlora::detail::fail<FormatError>(where, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        randlora::detail::fail<FormatError>(where, "not a number: '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      randlora::detail::fail<FormatError>(where, "ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) randlora::detail::fail<FormatError>(where, "empty matrix");
  if (rows.size() > 64 || rows.front().size() > 64) {
    randlora::detail::fail<FormatError>(where, "CSV targets are limited to 64 x 64");
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

inline Matrix load_matrix(const fs::path& path) {
  if (path.extension() == ".csv") return load_matrix_csv(path);
  return load_matrix_manifest(path);
}

inline std::string matrix_csv(const Matrix& m) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Basis sets
// ---------------------------------------------------------------------------

inline json distribution_json(const Distribution& dist) {
  json j{{"kind", to_string(dist)}};
  if (dist.kind == DistributionKind::Ternary) j["s"] = dist.s;
  return j;
}

inline Distribution distribution_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return Distribution::uniform();
  if (kind == "normal") return Distribution::normal();
  if (kind == "ternary") return Distribution::ternary(j.at("s").get<int>());
  randlora::detail::fail<FormatError>("io::distribution_from_json", "unknown distribution " + kind);
}

inline json basis_set_manifest(const BasisSet& set, const std::string& data_file) {
  json j = detail::container_header("randlora-basis-set");
  j["seed"] = set.seed;
  j["distribution"] = distribution_json(set.distribution);
  j["n_bases"] = set.n_bases;
  j["r"] = set.r;
  j["d_max"] = set.d_max;
  j["big_d_max"] = set.big_d_max;
  const std::size_t b_bytes = static_cast<std::size_t>(set.n_bases) * set.big_d_max * set.r * 8;
  j["tensors"] = json::array({
      {{"name", "b_stack"}, {"shape", {set.n_bases, set.big_d_max, set.r}}, {"offset", 0}},
      {{"name", "a_shared"}, {"shape", {set.r, set.d_max}}, {"offset", b_bytes}},
  });
  j["data"] = data_file;
  return j;
}

inline fs::path save_basis_set(const fs::path& stem, const BasisSet& set, const json& config = json::object()) {
  std::vector<char> buf;
  for (const auto& b : set.b_stack) detail::append_matrix(buf, b);
  detail::append_matrix(buf, set.a_shared);
  json manifest = basis_set_manifest(set, detail::blob_path(stem).filename().string());
  if (!config.empty()) manifest["config"] = config;
  detail::write_bytes(detail::blob_path(stem), buf);
  write_json(detail::manifest_path(stem), manifest);
  return detail::manifest_path(stem);
}

inline BasisSet load_basis_set(const fs::path& manifest_file) {
  const json j = read_json(manifest_file);
  detail::check_header(j, "randlora-basis-set");
  BasisSet set;
  set.seed = j.at("seed").get<std::uint64_t>();
  set.distribution = distribution_from_json(j.at("distribution"));
  set.n_bases = j.at("n_bases").get<int>();
  set.r = j.at("r").get<int>();
  set.d_max = j.at("d_max").get<int>();
  set.big_d_max = j.at("big_d_max").get<int>();
  const auto blob = detail::read_bytes(manifest_file.parent_path() / j.at("data").get<std::string>());
  const std::size_t b_bytes = static_cast<std::size_t>(set.n_bases) * set.big_d_max * set.r * 8;
  const std::size_t a_bytes = static_cast<std::size_t>(set.r) * set.d_max * 8;
  if (blob.size() != b_bytes + a_bytes) randlora::detail::fail<FormatError>("io::load_basis_set", "blob size mismatch");
  const std::size_t per_b = static_cast<std::size_t>(set.big_d_max) * set.r * 8;
  for (int k = 0; k < set.n_bases; ++k) {
    set.b_stack.push_back(detail::read_matrix(blob, per_b * static_cast<std::size_t>(k), set.big_d_max, set.r));
  }
  set.a_shared = detail::read_matrix(blob, b_bytes, set.r, set.d_max);
  return set;
}

// ---------------------------------------------------------------------------
// Adapter checkpoints
// ---------------------------------------------------------------------------

inline fs::path save_adapter(const fs::path& stem, const RandLoRAAdapter& a, const json& config = json::object()) {
  std::vector<char> buf;
  detail::append_matrix(buf, a.lambda_stack);
  detail::append_matrix(buf, a.gamma_stack);
  json j = detail::container_header("randlora-adapter");
  j["layer_id"] = a.slice.layer_id;
  j["D"] = a.slice.D;
  j["d"] = a.slice.d;
  j["n_used"] = a.slice.n_used;
  j["r"] = a.rank();
  j["alpha"] = a.alpha;
  j["tensors"] = json::array({
      {{"name", "lambda_stack"}, {"shape", {a.lambda_stack.rows(), a.lambda_stack.cols()}}, {"offset", 0}},
      {{"name", "gamma_stack"},
       {"shape", {a.gamma_stack.rows(), a.gamma_stack.cols()}},
       {"offset", a.lambda_stack.size() * 8}},
  });
  j["data"] = detail::blob_path(stem).filename().string();
  if (!config.empty()) j["config"] = config;
  detail::write_bytes(detail::blob_path(stem), buf);
  write_json(detail::manifest_path(stem), j);
  return detail::manifest_path(stem);
}

inline RandLoRAAdapter load_adapter(const fs::path& manifest_file) {
  const json j = read_json(manifest_file);
  detail::check_header(j, "randlora-adapter");
  RandLoRAAdapter a;
  a.slice = {j.at("layer_id").get<std::string>(), j.at("D").get<int>(), j.at("d").get<int>(), j.at("n_used").get<int>()};
  a.alpha = j.at("alpha").get<double>();
  const int r = j.at("r").get<int>();
  const auto blob = detail::read_bytes(manifest_file.parent_path() / j.at("data").get<std::string>());
  const std::size_t lam_bytes = static_cast<std::size_t>(a.slice.n_used) * r * 8;
  const std::size_t gam_bytes = static_cast<std::size_t>(a.slice.n_used) * a.slice.d * 8;
  if (blob.size() != lam_bytes + gam_bytes) randlora::detail::fail<FormatError>("io::load_adapter", "blob size mismatch");
  a.lambda_stack = detail::read_matrix(blob, 0, a.slice.n_used, r);
  a.gamma_stack = detail::read_matrix(blob, lam_bytes, a.slice.n_used, a.slice.d);
  return a;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline json spec_json(const AdapterSpec& spec) {
  return {{"name", spec_name(spec)}, {"alpha_c", spec.alpha_c}, {"per_rank", spec.per_rank},
          {"norm_correct", spec.norm_correct}};
}

inline json optimizer_json(const OptimizerConfig& opt) {
  return {{"kind", to_string(opt.kind)}, {"step_size", opt.step_size}, {"beta1", opt.beta1},
          {"beta2", opt.beta2}, {"eps", opt.eps}, {"max_iters", opt.max_iters}, {"seed", opt.seed}};
}

inline json to_json(const FitReport& r) {
  json trace = json::array();
  for (const auto& p : r.trace) trace.push_back({p.iteration, p.error});
  return {{"spec", spec_json(r.spec)},      {"target_id", r.target_id}, {"final_sq_error", r.final_sq_error},
          {"param_count", r.param_count},   {"iterations", r.iterations}, {"bound_ey", r.bound_ey},
          {"effective_rank", r.effective_rank}, {"trace", trace}};
}

inline json to_json(const TrainRun& run) {
  json history = json::array();
  for (const auto& p : run.history) {
    history.push_back({{"step", p.step}, {"train_loss", p.train_loss}, {"eval_metric", p.eval_metric}});
  }
  std::vector<double> params(run.final_params.data(), run.final_params.data() + run.final_params.size());
  return {{"spec", spec_json(run.spec)},
          {"optimizer", optimizer_json(run.opt)},
          {"param_count", run.param_count},
          {"initial_loss", run.initial_loss},
          {"final_loss", run.final_loss},
          {"history", history},
          {"final_params", params}};
}

inline json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

inline json to_json(const LandscapeGrid& g) {
  json anchors = json::array();
  for (int i = 0; i < 3; ++i) {
    anchors.push_back({{"x", g.anchor_coords[i].x}, {"y", g.anchor_coords[i].y}, {"loss", g.anchor_losses[i]}});
  }
  std::vector<double> xs(g.xs.data(), g.xs.data() + g.xs.size());
  std::vector<double> ys(g.ys.data(), g.ys.data() + g.ys.size());
  return {{"anchors", anchors}, {"xs", xs}, {"ys", ys}, {"clamp", g.clamp}, {"clamp_pct", g.clamp_pct},
          {"losses", matrix_rows(g.losses)}, {"clamped", matrix_rows(g.clamped)}};
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

} // namespace randlora::io
