#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace milplot {

using Bytes = std::vector<std::uint8_t>;

namespace byteplot {

inline constexpr std::size_t kPatchSide = 224;

// Greyscale image, one byte per pixel, row-major.
struct ByteImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ByteImage() = default;
  ByteImage(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }

  bool operator==(const ByteImage&) const = default;
};

// Pixel values scaled to [0,1].
struct UnitImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;
};

// A square instance patch (patch_side x patch_side).
using Patch = UnitImage;

struct Bag {
  std::vector<Patch> instances;
  std::optional<std::size_t> label;
  std::string source_id;

  std::size_t size() const { return instances.size(); }
};

// width = height = ceil(sqrt(n)); trailing cells are zero.
ByteImage to_square_image(std::span<const std::uint8_t> bytes);

// height = ceil(n / width); last row zero-padded.
ByteImage to_fixed_width_image(std::span<const std::uint8_t> bytes, std::size_t width = kPatchSide);

// Pads the image with zero rows to a multiple of `patch` and cuts it into
// vertically stacked patch x patch instances.
Bag make_bag(const ByteImage& image, std::size_t patch = kPatchSide);

// Convenience: bytes -> fixed-width image -> bag.
Bag bag_from_bytes(std::span<const std::uint8_t> bytes, std::size_t patch = kPatchSide);

// Bilinear resize with half-pixel centres:
//   src = (dst + 0.5) * in / out - 0.5, clamped to [0, in - 1].
// Results are rounded half away from zero and clamped to 0..255.
ByteImage resize_bilinear(const ByteImage& image, std::size_t out_w, std::size_t out_h);

UnitImage to_unit(const ByteImage& image);

// Concatenates instances back into bytes (x255, rounded) and trims trailing
// zero bytes.
Bytes reassemble_bag(const Bag& bag);

// Row-major prefix of `count` pixels.
std::span<const std::uint8_t> pixel_prefix(const ByteImage& image, std::size_t count);

void write_pgm(const ByteImage& image, const std::filesystem::path& path);
ByteImage read_pgm(const std::filesystem::path& path);

}  // namespace byteplot
}  // namespace milplot
