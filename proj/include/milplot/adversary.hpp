#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "milplot/byteplot.hpp"

namespace milplot::adversary {

enum class EnlargeMode { zeros, uniform_noise };

std::string_view to_string(EnlargeMode mode);
EnlargeMode parse_enlarge_mode(std::string_view text);

inline constexpr double kDefaultFactor = 20.0;
inline constexpr std::size_t kFullScaleSide = 10000;

struct EnlargeSpec {
  EnlargeMode mode = EnlargeMode::zeros;
  // Total output length in bytes (= pixels of the enlarged byteplot).
  std::size_t target_pixels = 0;
  std::uint64_t seed = 0;

  static EnlargeSpec by_factor(EnlargeMode mode, std::size_t original_size, double factor, std::uint64_t seed = 0);
  static EnlargeSpec by_side(EnlargeMode mode, std::size_t side, std::uint64_t seed = 0);
};

// Appends zeros or seeded uniform bytes until the output holds
// `target_pixels` bytes. The input is an exact prefix of the result.
Bytes enlarge(std::span<const std::uint8_t> bytes, const EnlargeSpec& spec);

struct SweepPoint {
  std::size_t side = 0;
  double mi_percent = 0.0;
};

// For each side: zero-pad to side x side, resize to resize_to, resize back,
// keep the row-major prefix covering the original bytes and report
// MI(original, reconstruction) as a percentage of the original's entropy.
std::vector<SweepPoint> mi_padding_sweep(std::span<const std::uint8_t> bytes, std::span<const std::size_t> sides,
                                         std::size_t resize_to = byteplot::kPatchSide);

// Square side of the unpadded byteplot: ceil(sqrt(n)).
std::size_t square_side(std::size_t byte_count);

// `side,mi_percent`
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);

}  // namespace milplot::adversary
