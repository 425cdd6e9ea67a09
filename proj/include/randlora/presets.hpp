#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "randlora/adapters.hpp"
#include "randlora/errors.hpp"

namespace randlora {

/// Published hyper-parameter rows, kept as budget metadata only.
struct Preset {
  std::string name;
  std::string model;
  int D = 0;
  int d = 0;
  AdapterSpec spec;
  std::string scaling;  // human-readable scaling coefficient
};

namespace detail {

inline AdapterSpec with_scaling(AdapterKind kind, double c, bool per_rank, bool norm_correct) {
  AdapterSpec s;
  s.kind = kind;
  s.alpha_c = c;
  s.per_rank = per_rank;
  s.norm_correct = norm_correct;
  return s;
}

} // namespace detail

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    using detail::with_scaling;
    std::vector<Preset> p;
    struct Vision {
      const char* tag;
      const char* model;
      int width;
      int vera_rank;
      int randlora_rank;
    };
    // Vision backbones: LoRA 1/r, NoLA 1/r, VeRA 1/r, RandLoRA 10/r with n = 128.
    for (const Vision& v : {Vision{"vitb32", "CLIP ViT-B/32", 768, 256, 6},
                            Vision{"vitl14", "CLIP ViT-L/14", 1024, 256, 8},
                            Vision{"vith14", "CLIP ViT-H/14", 1280, 1024, 10}}) {
      const std::string tag = v.tag;
      p.push_back({tag + "-lora", v.model, v.width, v.width, with_scaling(LoRASpec{32}, 1.0, true, false), "1/r"});
      p.push_back({tag + "-nola", v.model, v.width, v.width, with_scaling(NoLALikeSpec{1024, 1}, 1.0, true, false), "1/r"});
      p.push_back({tag + "-vera", v.model, v.width, v.width, with_scaling(VeRALikeSpec{v.vera_rank}, 1.0, true, false), "1/r"});
      p.push_back({tag + "-randlora", v.model, v.width, v.width,
                   with_scaling(RandLoRASpec{v.randlora_rank, 128}, 10.0, true, false), "10/r"});
    }
    struct Llm {
      const char* tag;
      const char* model;
      int width;
      int vera_rank;
      int randlora_rank;
      int randlora_n;
    };
    // Language models: LoRA 2, NoLA 2/sqrt(n), VeRA 2, RandLoRA 2/sqrt(n).
    for (const Llm& m : {Llm{"qwen2-0.5b", "Qwen2-0.5B", 896, 256, 6, 149},
                         Llm{"phi3", "Phi3", 3072, 1024, 10, 153},
                         Llm{"llama3-8b", "LLama3-8B", 4096, 1024, 15, 136}}) {
      const std::string tag = m.tag;
      p.push_back({tag + "-lora", m.model, m.width, m.width, with_scaling(LoRASpec{32}, 2.0, false, false), "2"});
      p.push_back({tag + "-nola", m.model, m.width, m.width, with_scaling(NoLALikeSpec{1024, 1}, 2.0, false, true), "2/sqrt(n)"});
      p.push_back({tag + "-vera", m.model, m.width, m.width, with_scaling(VeRALikeSpec{m.vera_rank}, 2.0, false, false), "2"});
      p.push_back({tag + "-randlora", m.model, m.width, m.width,
                   with_scaling(RandLoRASpec{m.randlora_rank, m.randlora_n}, 2.0, false, true), "2/sqrt(n)"});
    }
    return p;
  }();
  return table;
}

inline const Preset& find_preset(std::string_view name) {
  const auto& table = presets();
  const auto it = std::find_if(table.begin(), table.end(), [&](const Preset& p) { return p.name == name; });
  if (it == table.end()) detail::fail<UsageError>("cli::budget", "unknown preset '" + std::string(name) + "'");
  return *it;
}

// ---------------------------------------------------------------------------
// Spec strings: "<kind>:key=value;key=value", e.g. "randlora:r=4;n=6".
// ---------------------------------------------------------------------------

namespace detail {

inline int parse_positive(std::string_view key, std::string_view value) {
  int out = 0;
  try {
    std::size_t used = 0;
    out = std::stoi(std::string(value), &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    fail<UsageError>("cli::parse_spec", "'" + std::string(key) + "' expects an integer, got '" + std::string(value) + "'");
  }
  if (out < 1) fail<UsageError>("cli::parse_spec", "'" + std::string(key) + "' must be >= 1");
  return out;
}

} // namespace detail

inline AdapterSpec parse_spec(std::string_view text) {
  constexpr const char* where = "cli::parse_spec";
  const auto colon = text.find(':');
  const std::string kind(text.substr(0, colon));
  std::optional<int> r;
  std::optional<int> n;
  AdapterSpec spec;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto sep = rest.find_first_of(";,");
      const std::string_view item = rest.substr(0, sep);
      rest = sep == std::string_view::npos ? std::string_view{} : rest.substr(sep + 1);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) detail::fail<UsageError>(where, "expected key=value, got '" + std::string(item) + "'");
      const auto key = item.substr(0, eq);
      const auto value = item.substr(eq + 1);
      if (key == "r") {
        r = detail::parse_positive(key, value);
      } else if (key == "n") {
        n = detail::parse_positive(key, value);
      } else if (key == "c") {
        try {
          spec.alpha_c = std::stod(std::string(value));
        } catch (const std::exception&) {
          detail::fail<UsageError>(where, "'c' expects a number");
        }
      } else if (key == "norm") {
        spec.norm_correct = value == "1" || value == "true";
      } else {
        detail::fail<UsageError>(where, "unknown key '" + std::string(key) + "' in spec '" + std::string(text) + "'");
      }
    }
  }
  auto need_r = [&] {
    if (!r) detail::fail<UsageError>(where, "spec '" + kind + "' needs r=");
    return *r;
  };
  if (kind == "randlora") {
    spec.kind = RandLoRASpec{need_r(), n};
  } else if (kind == "lora") {
    spec.kind = LoRASpec{need_r()};
  } else if (kind == "vera") {
    spec.kind = VeRALikeSpec{need_r()};
  } else if (kind == "nola") {
    if (!n) detail::fail<UsageError>(where, "spec 'nola' needs n=");
    spec.kind = NoLALikeSpec{*n, r.value_or(1)};
  } else if (kind == "randlora-a") {
    if (!n) detail::fail<UsageError>(where, "spec 'randlora-a' needs n=");
    spec.kind = RandLoRAAvgSpec{need_r(), *n};
  } else if (kind == "randlora-b") {
    spec.kind = RandLoRAHalfSpec{need_r(), n};
  } else if (kind == "full") {
    spec.kind = FullFineTuneSpec{};
  } else {
    detail::fail<UsageError>(where, "unknown adapter kind '" + kind + "'");
  }
  return spec;
}

/// Splits "lora:r=1,randlora:r=1,n=8" into specs: a comma starts a new spec
/// only when the next item names a kind (contains ':' or is "full").
inline std::vector<AdapterSpec> parse_spec_list(std::string_view text) {
  std::vector<std::string> parts;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto sep = rest.find(',');
    const std::string item(rest.substr(0, sep));
    rest = sep == std::string_view::npos ? std::string_view{} : rest.substr(sep + 1);
    if (item.empty()) continue;
    const bool starts_spec = item.find(':') != std::string::npos || item == "full";
    if (starts_spec || parts.empty()) {
      parts.push_back(item);
    } else {
      parts.back() += ";" + item;
    }
  }
  std::vector<AdapterSpec> specs;
  for (const auto& p : parts) specs.push_back(parse_spec(p));
  if (specs.empty()) detail::fail<UsageError>("cli::parse_spec_list", "no specs given");
  return specs;
}

} // namespace randlora
