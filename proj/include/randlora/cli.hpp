#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "randlora/adapters.hpp"
#include "randlora/errors.hpp"
#include "randlora/io.hpp"
#include "randlora/presets.hpp"
#include "randlora/randbasis.hpp"
#include "randlora/spectral.hpp"
#include "randlora/trainkit.hpp"

namespace randlora::cli {

using json = nlohmann::json;

/// Fully-resolved configuration of one invocation; echoed into every artifact.
struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "json";
  // bases
  std::string dist = "normal";
  int sparsity_s = 0;
  int rank = 0;     // 0: derived from the specs
  int n_bases = 0;  // 0: derived from the specs
  int big_d = 64;
  int small_d = 64;
  // adapters
  std::optional<double> alpha_c;
  bool norm_correct = false;
  std::string preset;
  std::string specs;
  // targets / tasks
  std::vector<std::string> targets;
  std::string spectrum = "flat";
  int samples = 0;
  double noise = 0.0;
  // optimizer
  std::string optimizer = "adam";
  double lr = 1e-2;
  int iters = 5000;
  // collinearity
  double s = 2.0;
  int row_len = 4;
  int mc_samples = 0;
  // landscape / cka
  int resolution = 41;
  double clamp_pct = 0.2;
  double subset_pct = 5.0;
  std::string feat_a;
  std::string feat_b;

  json to_json() const {
    json j{{"subcommand", subcommand}, {"seed", seed}, {"out", out}, {"format", format}};
    if (subcommand == "gen-bases" || subcommand == "fit" || subcommand == "compare" || subcommand == "train" ||
        subcommand == "landscape" || subcommand == "cka") {
      j["dist"] = dist;
      j["sparsity_s"] = sparsity_s;
      j["rank"] = rank;
      j["n_bases"] = n_bases;
    }
    if (subcommand == "gen-bases" || subcommand == "budget" || subcommand == "train" || subcommand == "landscape" ||
        subcommand == "cka" || subcommand == "collinearity") {
      j["D"] = big_d;
      j["d"] = subcommand == "collinearity" ? row_len : small_d;
    }
    if (subcommand != "gen-bases" && subcommand != "collinearity") {
      j["alpha_c"] = alpha_c ? json(*alpha_c) : json(nullptr);
      j["norm_correct"] = norm_correct;
      j["specs"] = specs;
    }
    if (subcommand == "budget") j["preset"] = preset;
    if (subcommand == "fit" || subcommand == "compare") j["targets"] = targets;
    if (subcommand == "train" || subcommand == "landscape" || subcommand == "cka") {
      j["spectrum"] = spectrum;
      j["samples"] = samples;
      j["noise"] = noise;
    }
    if (subcommand == "fit" || subcommand == "compare" || subcommand == "train" || subcommand == "landscape" ||
        subcommand == "cka") {
      j["optimizer"] = optimizer;
      j["lr"] = lr;
      j["iters"] = iters;
    }
    if (subcommand == "collinearity") {
      j["s"] = s;
      j["mc_samples"] = mc_samples;
      j["n_bases"] = n_bases;
    }
    if (subcommand == "landscape") {
      j["resolution"] = resolution;
      j["clamp_pct"] = clamp_pct;
      j["subset_pct"] = subset_pct;
    }
    if (subcommand == "cka") {
      j["a"] = feat_a;
      j["b"] = feat_b;
    }
    return j;
  }
};

namespace detail {

using randlora::detail::fail;

inline Distribution distribution_of(const RunConfig& c) {
  if (c.dist == "uniform") return Distribution::uniform();
  if (c.dist == "normal") return Distribution::normal();
  if (c.dist == "ternary") {
    if (c.sparsity_s == 0) fail<UsageError>("cli", "--dist ternary requires --sparsity-s");
    return Distribution::ternary(c.sparsity_s);
  }
  fail<UsageError>("cli", "unknown distribution '" + c.dist + "'");
}

inline OptimizerConfig optimizer_of(const RunConfig& c) {
  OptimizerConfig opt;
  opt.kind = c.optimizer == "sgd" ? OptimizerKind::SGD : OptimizerKind::AdamLike;
  opt.step_size = c.lr;
  opt.max_iters = c.iters;
  opt.seed = c.seed;
  opt.validate();
  return opt;
}

inline std::vector<AdapterSpec> specs_of(const RunConfig& c) {
  auto specs = parse_spec_list(c.specs);
  for (auto& s : specs) {
    if (c.alpha_c) s.alpha_c = *c.alpha_c;
    if (c.norm_correct) s.norm_correct = true;
  }
  return specs;
}

inline bool needs_basis_stack(const AdapterSpec& s) {
  return !std::holds_alternative<LoRASpec>(s.kind) && !std::holds_alternative<FullFineTuneSpec>(s.kind) &&
         !std::holds_alternative<VeRALikeSpec>(s.kind);
}

/// Basis set large enough for every spec on a D x d layer.
inline BasisSet bases_for(const RunConfig& c, const std::vector<AdapterSpec>& specs, int D, int d) {
  int r = c.rank;
  int n = c.n_bases;
  for (const auto& s : specs) {
    if (!needs_basis_stack(s)) continue;
    if (c.rank == 0) r = std::max(r, basis_rank(s, D, d));
    if (c.n_bases == 0) n = std::max(n, resolved_terms(s, D, d));
  }
  return generate_basis_set(c.seed, distribution_of(c), std::max(n, 1), std::max(r, 1), D, d);
}

inline std::vector<int> parse_dims(const std::string& text, const std::string& what) {
  std::vector<int> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, 'x')) {
    try {
      dims.push_back(std::stoi(item));
    } catch (const std::exception&) {
      fail<UsageError>("cli::target", "bad dimensions in '" + what + "'");
    }
    if (dims.back() < 1) fail<UsageError>("cli::target", "dimensions must be >= 1 in '" + what + "'");
  }
  return dims;
}

/// Target matrices: identity:N, flat:DxD, random:DxD, lowrank:DxD:k, or a
/// .json manifest / .csv file.
inline Matrix make_target(const std::string& text, std::uint64_t seed) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "identity") {
    const auto dims = parse_dims(arg, text);
    if (dims.size() != 1) fail<UsageError>("cli::target", "identity:N expects one size");
    return Matrix::Identity(dims[0], dims[0]);
  }
  if (kind == "flat" || kind == "random" || kind == "lowrank") {
    const auto second = arg.find(':');
    const auto dims = parse_dims(arg.substr(0, second), text);
    if (dims.size() != 2) fail<UsageError>("cli::target", "expected DxD in '" + text + "'");
    const int k = std::min(dims[0], dims[1]);
    if (kind == "random") {
      CounterStream rng(seed, 0x7A9);
      return randlora::detail::gaussian(rng, dims[0], dims[1]);
    }
    std::vector<double> spectrum(static_cast<std::size_t>(k), 1.0);
    if (kind == "lowrank") {
      if (second == std::string::npos) fail<UsageError>("cli::target", "lowrank:DxD:k needs k");
      const int rank = std::stoi(arg.substr(second + 1));
      for (int i = rank; i < k; ++i) spectrum[static_cast<std::size_t>(i)] = 0.0;
    }
    return matrix_with_spectrum(seed, dims[0], dims[1], spectrum);
  }
  if (std::filesystem::exists(text)) return io::load_matrix(text);
  fail<UsageError>("cli::target", "unknown target '" + text + "'");
}

inline std::vector<double> spectrum_of(const std::string& name, int k) {
  std::vector<double> s(static_cast<std::size_t>(k), 0.0);
  if (name == "flat") {
    std::fill(s.begin(), s.end(), 1.0);
  } else if (name == "decay") {
    for (int i = 0; i < k; ++i) s[static_cast<std::size_t>(i)] = 1.0 / (1.0 + i);
  } else if (name == "rank1") {
    s[0] = 1.0;
  } else if (name != "zero") {
    fail<UsageError>("cli", "unknown spectrum '" + name + "' (flat, decay, rank1, zero)");
  }
  return s;
}

inline TeacherStudentTask task_of(const RunConfig& c) {
  const int samples = c.samples > 0 ? c.samples : 16 * c.big_d;
  const auto spectrum = spectrum_of(c.spectrum, std::min(c.big_d, c.small_d));
  return make_teacher_student(c.seed, c.big_d, c.small_d, spectrum, samples, c.noise);
}

class Emitter {
public:
  Emitter(const RunConfig& c, std::ostream& out) : config_(c), out_(out) {}

  void emit(const std::string& text) const {
    if (config_.out.empty()) {
      out_ << text;
      return;
    }
    std::ofstream file(config_.out, std::ios::trunc);
    if (!file) fail<Error>("cli", "cannot open output file " + config_.out);
    file << text;
  }

  void emit(const json& j) const { emit(j.dump(2) + "\n"); }

private:
  const RunConfig& config_;
  std::ostream& out_;
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline void cmd_gen_bases(const RunConfig& c, std::ostream& out) {
  if (c.out.empty()) fail<UsageError>("cli::gen-bases", "--out <stem> is required");
  const int r = c.rank > 0 ? c.rank : 4;
  const int n = c.n_bases > 0 ? c.n_bases : 8;
  const BasisSet set = generate_basis_set(c.seed, distribution_of(c), n, r, c.big_d, c.small_d);
  const auto manifest = io::save_basis_set(c.out, set, c.to_json());
  json summary{{"config", c.to_json()},
               {"manifest", manifest.string()},
               {"zero_fraction", zero_fraction(set)},
               {"n_bases", n},
               {"r", r}};
  out << summary.dump(2) << "\n";
}

inline json budget_row(const std::string& name, const std::string& model, int D, int d, const AdapterSpec& spec,
                       const std::string& scaling) {
  const int n = resolved_terms(spec, D, d);
  const int r = basis_rank(spec, D, d);
  return {{"name", name},
          {"model", model},
          {"spec", spec_name(spec)},
          {"D", D},
          {"d", d},
          {"r", r},
          {"n", n},
          {"param_count", param_count(spec, D, d)},
          {"scaling", scaling},
          {"alpha", resolved_alpha(spec, D, d)},
          {"effective_rank", effective_rank(spec, D, d)},
          {"full_rank", effective_rank(spec, D, d) == std::min(D, d)}};
}

inline void cmd_budget(const RunConfig& c, std::ostream& out) {
  json rows = json::array();
  if (!c.preset.empty()) {
    const auto& p = find_preset(c.preset);
    rows.push_back(budget_row(p.name, p.model, p.D, p.d, p.spec, p.scaling));
  } else if (!c.specs.empty()) {
    for (const auto& spec : specs_of(c)) {
      std::ostringstream scaling;
      scaling << spec.alpha_c << (spec.per_rank ? "/r" : "") << (spec.norm_correct ? "/sqrt(n)" : "");
      rows.push_back(budget_row(spec_name(spec), "custom", c.big_d, c.small_d, spec, scaling.str()));
    }
  } else {
    for (const auto& p : presets()) rows.push_back(budget_row(p.name, p.model, p.D, p.d, p.spec, p.scaling));
  }
  Emitter emitter(c, out);
  if (c.format == "csv") {
    std::string text = "name,model,spec,D,d,r,n,param_count,scaling,alpha,full_rank\n";
    for (const auto& row : rows) {
      std::ostringstream line;
      line.precision(17);
      line << io::csv_escape(row["name"].get<std::string>()) << ',' << io::csv_escape(row["model"].get<std::string>())
           << ',' << io::csv_escape(row["spec"].get<std::string>()) << ',' << row["D"] << ',' << row["d"] << ','
           << row["r"] << ',' << row["n"] << ',' << row["param_count"] << ','
           << io::csv_escape(row["scaling"].get<std::string>()) << ',' << row["alpha"].get<double>() << ','
           << (row["full_rank"].get<bool>() ? "true" : "false") << '\n';
      text += line.str();
    }
    emitter.emit(text);
    return;
  }
  emitter.emit(json{{"config", c.to_json()}, {"budgets", rows}});
}

/// Independent-pair Monte-Carlo estimate of the ternary collinearity event.
inline json collinearity_monte_carlo(double s, int d, int samples, std::uint64_t seed) {
  const int si = static_cast<int>(std::lround(s));
  const Distribution dist = Distribution::ternary(si);
  std::int64_t hits = 0;
  for (int k = 0; k < samples; ++k) {
    bool equal = true;
    bool negated = true;
    for (int i = 0; i < d && (equal || negated); ++i) {
      const auto idx = static_cast<std::uint32_t>(k);
      const double a = randlora::detail::raw_entry(seed, dist, BasisStream::BStack, idx, 0, static_cast<std::uint32_t>(i));
      const double b = randlora::detail::raw_entry(seed, dist, BasisStream::BStack, idx, 1, static_cast<std::uint32_t>(i));
      equal = equal && a == b;
      negated = negated && a == -b;
    }
    if (equal || negated) ++hits;
  }
  const double est = static_cast<double>(hits) / samples;
  return {{"samples", samples},
          {"hits", hits},
          {"estimate", est},
          {"std_error", std::sqrt(std::max(est * (1.0 - est), 0.0) / samples)},
          {"s_rounded", si}};
}

inline void cmd_collinearity(const RunConfig& c, std::ostream& out) {
  const auto prob = collinearity_probability(c.s, c.row_len, c.n_bases, c.big_d);
  json j{{"config", c.to_json()}, {"p", prob.p}, {"p2", prob.p2}};
  if (c.mc_samples > 0) j["monte_carlo"] = collinearity_monte_carlo(c.s, c.row_len, c.mc_samples, c.seed);
  Emitter emitter(c, out);
  if (c.format == "csv") {
    std::ostringstream text;
    text.precision(17);
    text << "s,d,n_bases,D,p,p2\n" << c.s << ',' << c.row_len << ',' << c.n_bases << ',' << c.big_d << ',' << prob.p
         << ',' << prob.p2 << '\n';
    emitter.emit(text.str());
    return;
  }
  emitter.emit(j);
}

inline void cmd_fit(const RunConfig& c, std::ostream& out) {
  if (c.targets.empty()) fail<UsageError>("cli::" + c.subcommand, "--target is required");
  if (c.subcommand == "fit" && c.targets.size() != 1) fail<UsageError>("cli::fit", "fit takes exactly one target");
  const auto specs = specs_of(c);
  const auto opt = optimizer_of(c);

  struct Row {
    std::string target_id;
    std::string spec;
    FitReport report;
  };
  std::vector<Row> rows;
  for (const auto& target_id : c.targets) {
    const Matrix target = make_target(target_id, c.seed);
    const int D = static_cast<int>(target.rows());
    const int d = static_cast<int>(target.cols());
    const BasisSet set = bases_for(c, specs, D, d);
    for (const auto& spec : specs) rows.push_back({target_id, spec_name(spec), fit_adapter(target, spec, set, opt, target_id)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.target_id != b.target_id ? a.target_id < b.target_id : a.spec < b.spec;
  });

  Emitter emitter(c, out);
  if (c.format == "csv") {
    std::ostringstream text;
    text.precision(17);
    text << "target_id,spec,params,final_sq_error,bound_ey\n";
    for (const auto& row : rows) {
      text << io::csv_escape(row.target_id) << ',' << io::csv_escape(row.spec) << ',' << row.report.param_count << ','
           << row.report.final_sq_error << ',' << row.report.bound_ey << '\n';
    }
    emitter.emit(text.str());
    return;
  }
  json reports = json::array();
  for (const auto& row : rows) reports.push_back(io::to_json(row.report));
  emitter.emit(json{{"config", c.to_json()}, {"reports", reports}});
}

inline void cmd_train(const RunConfig& c, std::ostream& out) {
  const auto specs = specs_of(c);
  const auto opt = optimizer_of(c);
  const auto task = task_of(c);
  const BasisSet set = bases_for(c, specs, c.big_d, c.small_d);
  std::vector<TrainRun> runs;
  for (const auto& spec : specs) runs.push_back(train(task.W0, spec, set, task, opt));

  Emitter emitter(c, out);
  if (c.format == "csv") {
    std::ostringstream text;
    text.precision(17);
    text << "spec,params,initial_loss,final_loss\n";
    for (const auto& run : runs) {
      text << io::csv_escape(spec_name(run.spec)) << ',' << run.param_count << ',' << run.initial_loss << ','
           << run.final_loss << '\n';
    }
    emitter.emit(text.str());
    return;
  }
  json arr = json::array();
  for (const auto& run : runs) arr.push_back(io::to_json(run));
  emitter.emit(json{{"config", c.to_json()}, {"runs", arr}});
}

/// LoRA, RandLoRA and dense fine-tuning trained on the same task. LoRA's rank
/// is chosen to match RandLoRA's parameter count as closely as possible.
struct ThreeModels {
  TeacherStudentTask task;
  TrainRun lora;
  TrainRun randlora;
  TrainRun full;
};

inline ThreeModels train_three(const RunConfig& c) {
  const auto opt = optimizer_of(c);
  ThreeModels m{task_of(c), {}, {}, {}};
  const int D = c.big_d;
  const int d = c.small_d;
  AdapterSpec rl;
  rl.kind = RandLoRASpec{c.rank > 0 ? c.rank : std::max(1, std::min(D, d) / 4), std::nullopt};
  if (c.alpha_c) rl.alpha_c = *c.alpha_c;
  const auto budget = param_count(rl, D, d);
  AdapterSpec lora;
  lora.kind = LoRASpec{std::max<int>(1, static_cast<int>(std::llround(static_cast<double>(budget) / (D + d))))};
  if (c.alpha_c) lora.alpha_c = *c.alpha_c;
  AdapterSpec full;
  full.kind = FullFineTuneSpec{};
  const BasisSet set = bases_for(c, {rl}, D, d);
  m.lora = train(m.task.W0, lora, set, m.task, opt);
  m.randlora = train(m.task.W0, rl, set, m.task, opt);
  m.full = train(m.task.W0, full, set, m.task, opt);
  return m;
}

inline void cmd_landscape(const RunConfig& c, std::ostream& out) {
  if (!(c.subset_pct > 0.0 && c.subset_pct <= 100.0)) fail<UsageError>("cli::landscape", "--subset-pct must lie in (0, 100]");
  const auto m = train_three(c);
  const auto rows = static_cast<Eigen::Index>(
      std::max(2.0, std::ceil(c.subset_pct / 100.0 * static_cast<double>(m.task.X.rows()))));
  const Matrix Xs = m.task.X.topRows(rows);
  const Matrix Ys = m.task.Y.topRows(rows);
  const auto D = m.task.W0.rows();
  const auto d = m.task.W0.cols();
  const LossFn loss = [&](const Vector& theta) { return mse(Xs, unflatten(theta, D, d), Ys); };
  const auto grid = landscape_grid(flatten(m.lora.final_weight), flatten(m.randlora.final_weight),
                                   flatten(m.full.final_weight), loss, c.resolution, c.clamp_pct);
  Emitter emitter(c, out);
  if (c.format == "csv") {
    emitter.emit(io::matrix_csv(grid.losses));
    return;
  }
  json j = io::to_json(grid);
  j["config"] = c.to_json();
  j["anchor_names"] = {spec_name(m.lora.spec), spec_name(m.randlora.spec), "full"};
  j["subset_rows"] = rows;
  emitter.emit(j);
}

inline void cmd_cka(const RunConfig& c, std::ostream& out) {
  json j{{"config", c.to_json()}};
  if (!c.feat_a.empty() || !c.feat_b.empty()) {
    if (c.feat_a.empty() || c.feat_b.empty()) fail<UsageError>("cli::cka", "--a and --b must be given together");
    j["cka"] = cka_linear(io::load_matrix(c.feat_a), io::load_matrix(c.feat_b));
  } else {
    const auto m = train_three(c);
    // Features are the adapted layer's outputs on the training inputs.
    const Matrix f_full = m.task.X * m.full.final_weight;
    j["cka_full_vs_lora"] = cka_linear(f_full, m.task.X * m.lora.final_weight);
    j["cka_full_vs_randlora"] = cka_linear(f_full, m.task.X * m.randlora.final_weight);
    j["cka_lora_vs_randlora"] = cka_linear(m.task.X * m.lora.final_weight, m.task.X * m.randlora.final_weight);
    j["specs"] = {spec_name(m.lora.spec), spec_name(m.randlora.spec), "full"};
  }
  Emitter(c, out).emit(j);
}

} // namespace detail

/// Parses argv and runs one subcommand. Exit codes: 0 success, 2 usage error,
/// 1 numerical or runtime error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"RandLoRA: full-rank parameter-efficient updates from random bases"};
  app.require_subcommand(1);
  RunConfig c;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "Master seed")->capture_default_str();
    sub->add_option("--out", c.out, "Output path (stdout when empty; a file stem for gen-bases)");
    sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  };
  auto bases = [&](CLI::App* sub) {
    sub->add_option("--dist", c.dist, "Basis distribution")
        ->check(CLI::IsMember({"uniform", "normal", "ternary"}))
        ->capture_default_str();
    sub->add_option("--sparsity-s", c.sparsity_s, "Ternary sparsity s (zeros with probability 1 - 2/s)");
    sub->add_option("--rank", c.rank, "Basis rank r (0 derives it from the specs)");
    sub->add_option("--n-bases", c.n_bases, "Number of bases (0 derives it from the specs)");
  };
  auto scaling = [&](CLI::App* sub) {
    sub->add_option("--alpha-c", c.alpha_c, "Scaling coefficient c (alpha = c / r)");
    sub->add_flag("--norm-correct", c.norm_correct, "Further scale alpha by 1/sqrt(n)");
  };
  auto optim = [&](CLI::App* sub) {
    sub->add_option("--optimizer", c.optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
    sub->add_option("--lr", c.lr, "Step size")->capture_default_str();
    sub->add_option("--iters", c.iters, "Iteration cap")->capture_default_str();
  };
  auto layer = [&](CLI::App* sub) {
    sub->add_option("--D", c.big_d, "Output dimension D")->capture_default_str();
    sub->add_option("--d", c.small_d, "Input dimension d")->capture_default_str();
  };
  auto task = [&](CLI::App* sub) {
    layer(sub);
    sub->add_option("--spectrum", c.spectrum, "Spectrum of the teacher update (flat, decay, rank1, zero)")
        ->capture_default_str();
    sub->add_option("--samples", c.samples, "Training samples (0 means 16 * D)");
    sub->add_option("--noise", c.noise, "Gaussian label noise std");
  };

  auto* gen = app.add_subcommand("gen-bases", "Generate and persist a basis set");
  common(gen);
  bases(gen);
  layer(gen);

  auto* budget = app.add_subcommand("budget", "Trainable-parameter budgets for presets or specs");
  common(budget);
  scaling(budget);
  layer(budget);
  budget->add_option("--preset", c.preset, "Preset name (omit to list all)");
  budget->add_option("--specs", c.specs, "Adapter specs, e.g. lora:r=32,randlora:r=6");

  auto* col = app.add_subcommand("collinearity", "Ternary row collinearity probabilities");
  common(col);
  col->add_option("--s", c.s, "Sparsity s")->capture_default_str();
  col->add_option("--d", c.row_len, "Row length d")->capture_default_str();
  col->add_option("--n-bases", c.n_bases, "Number of bases N for the union bound");
  col->add_option("--D", c.big_d, "Rows D for the union bound")->capture_default_str();
  col->add_option("--mc-samples", c.mc_samples, "Monte-Carlo row pairs (0 disables)");

  auto* fit = app.add_subcommand("fit", "Fit adapters to one target matrix");
  auto* compare = app.add_subcommand("compare", "Fit adapters to several targets and summarize");
  for (auto* sub : {fit, compare}) {
    common(sub);
    bases(sub);
    scaling(sub);
    optim(sub);
    sub->add_option("--target,--targets", c.targets,
                    "identity:N, flat:DxD, random:DxD, lowrank:DxD:k, or a .json/.csv matrix")
        ->delimiter(',')
        ->required();
    sub->add_option("--specs", c.specs, "Adapter specs, e.g. lora:r=1,randlora:r=1")->required();
  }

  auto* tr = app.add_subcommand("train", "Train adapters on a teacher-student regression task");
  common(tr);
  bases(tr);
  scaling(tr);
  optim(tr);
  task(tr);
  tr->add_option("--specs", c.specs, "Adapter specs")->required();

  auto* land = app.add_subcommand("landscape", "Barycentric loss landscape between LoRA, RandLoRA and full updates");
  auto* cka = app.add_subcommand("cka", "Linear CKA between feature matrices or trained models");
  for (auto* sub : {land, cka}) {
    common(sub);
    bases(sub);
    scaling(sub);
    optim(sub);
    task(sub);
  }
  land->add_option("--resolution", c.resolution)->capture_default_str();
  land->add_option("--clamp-pct", c.clamp_pct)->capture_default_str();
  land->add_option("--subset-pct", c.subset_pct, "Percent of training rows used for evaluation")->capture_default_str();
  cka->add_option("--a", c.feat_a, "First feature matrix (.json manifest or .csv)");
  cka->add_option("--b", c.feat_b, "Second feature matrix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }
  auto* chosen = app.get_subcommands().front();
  c.subcommand = chosen->get_name();
  if (c.subcommand == "compare" && chosen->count("--format") == 0) c.format = "csv";
  if ((c.subcommand == "train" || c.subcommand == "landscape" || c.subcommand == "cka") && chosen->count("--iters") == 0) {
    c.iters = 2000;
  }

  try {
    if (c.subcommand == "gen-bases") detail::cmd_gen_bases(c, out);
    else if (c.subcommand == "budget") detail::cmd_budget(c, out);
    else if (c.subcommand == "collinearity") detail::cmd_collinearity(c, out);
    else if (c.subcommand == "fit" || c.subcommand == "compare") detail::cmd_fit(c, out);
    else if (c.subcommand == "train") detail::cmd_train(c, out);
    else if (c.subcommand == "landscape") detail::cmd_landscape(c, out);
    else if (c.subcommand == "cka") detail::cmd_cka(c, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace randlora::cli
