#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "milplot/bytesrc.hpp"
#include "milplot/harness.hpp"

namespace milplot::config {

// Flat `key = value` text. `#` starts a comment; blank lines are ignored.
// Duplicate keys and lines without '=' are InvalidConfig.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_kv(std::string_view text);
KeyValues load_kv(const std::filesystem::path& path);
std::string format_kv(const KeyValues& kv);

struct SynthSettings {
  bytesrc::SynthConfig synth;
  bytesrc::SplitSpec split;
  std::uint64_t seed = 1;
};

// Keys: families, samples_per_family, min_samples_per_family,
// max_samples_per_family, min_size, max_size, tile_noise, min_sections,
// max_sections, shared_filler, max_filler_blocks, max_filler_fraction,
// test_fraction, seed. Unknown keys are rejected.
SynthSettings synth_settings(const KeyValues& kv);
KeyValues to_kv(const SynthSettings& settings);

// Keys: model_kind, epochs, accumulation_bags, sub_batch, k_top, seed,
// learning_rate, beta1, beta2, epsilon, shuffle, arch (desk|full),
// mil_channels, mil_first_stride, baseline_channels, baseline_first_stride,
// attention_dim, baseline_hidden, patch, threads, deterministic.
// `arch` is applied before the individual size keys.
harness::TrainConfig train_config(const KeyValues& kv, harness::TrainConfig base = {});
KeyValues to_kv(const harness::TrainConfig& config);

}  // namespace milplot::config
