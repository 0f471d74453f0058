#include "milplot/adversary.hpp"

#include <cmath>

#include "milplot/error.hpp"
#include "milplot/metrics.hpp"
#include "milplot/rng.hpp"

namespace milplot::adversary {

std::string_view to_string(EnlargeMode mode) {
  return mode == EnlargeMode::zeros ? "zeros" : "noise";
}

EnlargeMode parse_enlarge_mode(std::string_view text) {
  if (text == "zeros") return EnlargeMode::zeros;
  if (text == "noise" || text == "uniform_noise") return EnlargeMode::uniform_noise;
  throw Error(ErrorKind::Usage, "unknown enlargement mode '" + std::string(text) + "' (expected zeros|noise)");
}

EnlargeSpec EnlargeSpec::by_factor(EnlargeMode mode, std::size_t original_size, double factor, std::uint64_t seed) {
  if (!(factor >= 1.0)) throw Error(ErrorKind::TargetTooSmall, "enlargement factor must be at least 1");
  const auto target = static_cast<std::size_t>(std::ceil(static_cast<double>(original_size) * factor));
  return {mode, target, seed};
}

EnlargeSpec EnlargeSpec::by_side(EnlargeMode mode, std::size_t side, std::uint64_t seed) {
  return {mode, side * side, seed};
}

Bytes enlarge(std::span<const std::uint8_t> bytes, const EnlargeSpec& spec) {
  if (spec.target_pixels < bytes.size()) {
    throw Error(ErrorKind::TargetTooSmall, "target of " + std::to_string(spec.target_pixels) +
                                               " bytes is smaller than the sample (" + std::to_string(bytes.size()) + ")");
  }
  Bytes out(spec.target_pixels, 0);
  std::copy(bytes.begin(), bytes.end(), out.begin());
  if (spec.mode == EnlargeMode::uniform_noise) {
    Rng rng(spec.seed);
    for (std::size_t i = bytes.size(); i < out.size(); ++i) out[i] = rng.byte();
  }
  return out;
}

std::size_t square_side(std::size_t byte_count) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(byte_count)));
  while (r * r > byte_count) --r;
  while (r * r < byte_count) ++r;
  return r;
}

std::vector<SweepPoint> mi_padding_sweep(std::span<const std::uint8_t> bytes, std::span<const std::size_t> sides,
                                         std::size_t resize_to) {
  if (bytes.empty()) throw Error(ErrorKind::EmptyInput, "sweep of an empty sample");
  const std::size_t original_side = square_side(bytes.size());
  const double entropy = metrics::entropy_bits(bytes);
  std::vector<SweepPoint> points;
  points.reserve(sides.size());
  for (std::size_t side : sides) {
    if (side < original_side) {
      throw Error(ErrorKind::TargetTooSmall, "side " + std::to_string(side) + " is below the sample's side " +
                                                 std::to_string(original_side));
    }
    const byteplot::ByteImage padded = byteplot::to_square_image(enlarge(bytes, EnlargeSpec::by_side(EnlargeMode::zeros, side)));
    const byteplot::ByteImage small = byteplot::resize_bilinear(padded, resize_to, resize_to);
    const byteplot::ByteImage back = byteplot::resize_bilinear(small, side, side);
    const auto reconstructed = byteplot::pixel_prefix(back, bytes.size());
    const double mi = metrics::mutual_information_bits(bytes, reconstructed);
    points.push_back({side, metrics::mi_percent(mi, entropy)});
  }
  return points;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
  out << "side,mi_percent\n";
  for (const auto& p : points) out << p.side << ',' << metrics::format_number(p.mi_percent) << '\n';
}

}  // namespace milplot::adversary
