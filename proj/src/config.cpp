#include "milplot/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "milplot/error.hpp"
#include "milplot/metrics.hpp"

namespace milplot::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorKind::InvalidConfig, "config key '" + key + "': '" + value + "' is not " + expected);
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return out;
}

double as_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad(key, v, "a number");
  }
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "a boolean");
}

std::vector<std::size_t> as_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(as_u64(key, std::string(trim(tok))));
  if (out.empty()) bad(key, v, "a comma-separated size list");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string num(double v) { return metrics::format_number(v); }

}  // namespace

KeyValues parse_kv(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) throw Error(ErrorKind::InvalidConfig, "duplicate config key '" + key + "'");
  }
  return kv;
}

KeyValues load_kv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kv(ss.str());
}

std::string format_kv(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

SynthSettings synth_settings(const KeyValues& kv) {
  SynthSettings s;
  auto& c = s.synth;
  for (const auto& [k, v] : kv) {
    if (k == "families") c.families = as_u64(k, v);
    else if (k == "samples_per_family") c.min_samples_per_family = c.max_samples_per_family = as_u64(k, v);
    else if (k == "min_samples_per_family") c.min_samples_per_family = as_u64(k, v);
    else if (k == "max_samples_per_family") c.max_samples_per_family = as_u64(k, v);
    else if (k == "min_size") c.min_size = as_u64(k, v);
    else if (k == "max_size") c.max_size = as_u64(k, v);
    else if (k == "tile_noise") c.tile_noise = as_double(k, v);
    else if (k == "min_sections") c.min_sections = as_u64(k, v);
    else if (k == "max_sections") c.max_sections = as_u64(k, v);
    else if (k == "shared_filler") c.shared_filler = as_bool(k, v);
    else if (k == "max_filler_blocks") c.max_filler_blocks = as_u64(k, v);
    else if (k == "max_filler_fraction") c.max_filler_fraction = as_double(k, v);
    else if (k == "test_fraction") s.split.test_fraction = as_double(k, v);
    else if (k == "seed") s.seed = as_u64(k, v);
    else throw Error(ErrorKind::InvalidConfig, "unknown synth config key '" + k + "'");
  }
  s.split.seed = s.seed;
  c.validate();
  if (!(s.split.test_fraction > 0.0 && s.split.test_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "test_fraction must be in (0,1)");
  }
  return s;
}

KeyValues to_kv(const SynthSettings& s) {
  const auto& c = s.synth;
  return {
      {"families", std::to_string(c.families)},
      {"min_samples_per_family", std::to_string(c.min_samples_per_family)},
      {"max_samples_per_family", std::to_string(c.max_samples_per_family)},
      {"min_size", std::to_string(c.min_size)},
      {"max_size", std::to_string(c.max_size)},
      {"tile_noise", num(c.tile_noise)},
      {"min_sections", std::to_string(c.min_sections)},
      {"max_sections", std::to_string(c.max_sections)},
      {"shared_filler", c.shared_filler ? "true" : "false"},
      {"max_filler_blocks", std::to_string(c.max_filler_blocks)},
      {"max_filler_fraction", num(c.max_filler_fraction)},
      {"test_fraction", num(s.split.test_fraction)},
      {"seed", std::to_string(s.seed)},
  };
}

harness::TrainConfig train_config(const KeyValues& kv, harness::TrainConfig c) {
  if (auto it = kv.find("arch"); it != kv.end()) {
    if (it->second == "full") c.arch = harness::ArchConfig::full();
    else if (it->second == "desk") c.arch = harness::ArchConfig{};
    else bad("arch", it->second, "desk or full");
  }
  for (const auto& [k, v] : kv) {
    if (k == "arch") continue;
    if (k == "model_kind") {
      try {
        c.model_kind = harness::parse_model_kind(v);
      } catch (const Error&) {
        bad(k, v, "baseline, mil_attention or mil_gated");
      }
    }
    else if (k == "epochs") c.epochs = as_u64(k, v);
    else if (k == "accumulation_bags") c.accumulation_bags = as_u64(k, v);
    else if (k == "sub_batch") c.sub_batch = as_u64(k, v);
    else if (k == "k_top") c.k_top = as_u64(k, v);
    else if (k == "seed") c.seed = as_u64(k, v);
    else if (k == "learning_rate") c.adam.learning_rate = as_double(k, v);
    else if (k == "beta1") c.adam.beta1 = as_double(k, v);
    else if (k == "beta2") c.adam.beta2 = as_double(k, v);
    else if (k == "epsilon") c.adam.epsilon = as_double(k, v);
    else if (k == "shuffle") c.shuffle = as_bool(k, v);
    else if (k == "mil_channels") c.arch.mil_channels = as_sizes(k, v);
    else if (k == "mil_first_stride") c.arch.mil_first_stride = as_u64(k, v);
    else if (k == "baseline_channels") c.arch.baseline_channels = as_sizes(k, v);
    else if (k == "baseline_first_stride") c.arch.baseline_first_stride = as_u64(k, v);
    else if (k == "attention_dim") c.arch.attention_dim = as_u64(k, v);
    else if (k == "baseline_hidden") c.arch.baseline_hidden = as_u64(k, v);
    else if (k == "patch") c.arch.patch = as_u64(k, v);
    else if (k == "threads") c.threads = as_u64(k, v);
    else if (k == "deterministic") c.deterministic = as_bool(k, v);
    else throw Error(ErrorKind::InvalidConfig, "unknown train config key '" + k + "'");
  }
  c.validate();
  return c;
}

KeyValues to_kv(const harness::TrainConfig& c) {
  return {
      {"model_kind", std::string(harness::to_string(c.model_kind))},
      {"epochs", std::to_string(c.epochs)},
      {"accumulation_bags", std::to_string(c.accumulation_bags)},
      {"sub_batch", std::to_string(c.sub_batch)},
      {"k_top", std::to_string(c.k_top)},
      {"seed", std::to_string(c.seed)},
      {"learning_rate", num(c.adam.learning_rate)},
      {"beta1", num(c.adam.beta1)},
      {"beta2", num(c.adam.beta2)},
      {"epsilon", num(c.adam.epsilon)},
      {"shuffle", c.shuffle ? "true" : "false"},
      {"mil_channels", join(c.arch.mil_channels)},
      {"mil_first_stride", std::to_string(c.arch.mil_first_stride)},
      {"baseline_channels", join(c.arch.baseline_channels)},
      {"baseline_first_stride", std::to_string(c.arch.baseline_first_stride)},
      {"attention_dim", std::to_string(c.arch.attention_dim)},
      {"baseline_hidden", std::to_string(c.arch.baseline_hidden)},
      {"patch", std::to_string(c.arch.patch)},
      {"deterministic", c.deterministic ? "true" : "false"},
  };
}

}  // namespace milplot::config
