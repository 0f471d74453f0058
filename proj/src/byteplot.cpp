#include "milplot/byteplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "milplot/error.hpp"

namespace milplot::byteplot {

namespace {

std::size_t ceil_sqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while (r * r < n) ++r;
  return r;
}

}  // namespace

ByteImage to_square_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorKind::EmptyInput, "cannot build a byteplot from zero bytes");
  const std::size_t side = ceil_sqrt(bytes.size());
  ByteImage image(side, side);
  std::copy(bytes.begin(), bytes.end(), image.pixels.begin());
  return image;
}

ByteImage to_fixed_width_image(std::span<const std::uint8_t> bytes, std::size_t width) {
  if (bytes.empty()) throw Error(ErrorKind::EmptyInput, "cannot build a byteplot from zero bytes");
  if (width == 0) throw Error(ErrorKind::InvalidConfig, "image width must be positive");
  const std::size_t height = (bytes.size() + width - 1) / width;
  ByteImage image(width, height);
  std::copy(bytes.begin(), bytes.end(), image.pixels.begin());
  return image;
}

Bag make_bag(const ByteImage& image, std::size_t patch) {
  if (patch == 0 || image.width != patch) {
    throw Error(ErrorKind::WidthMismatch, "image width " + std::to_string(image.width) +
                                              " does not match patch side " + std::to_string(patch));
  }
  const std::size_t k = std::max<std::size_t>(1, (image.height + patch - 1) / patch);
  const std::size_t patch_pixels = patch * patch;
  Bag bag;
  bag.instances.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Patch p{patch, patch, std::vector<float>(patch_pixels, 0.0f)};
    const std::size_t begin = j * patch_pixels;
    const std::size_t end = std::min(image.pixels.size(), begin + patch_pixels);
    for (std::size_t i = begin; i < end; ++i) {
      p.values[i - begin] = static_cast<float>(image.pixels[i]) / 255.0f;
    }
    bag.instances.push_back(std::move(p));
  }
  return bag;
}

Bag bag_from_bytes(std::span<const std::uint8_t> bytes, std::size_t patch) {
  return make_bag(to_fixed_width_image(bytes, patch), patch);
}

ByteImage resize_bilinear(const ByteImage& image, std::size_t out_w, std::size_t out_h) {
  if (image.width == 0 || image.height == 0 || out_w == 0 || out_h == 0) {
    throw Error(ErrorKind::EmptyInput, "resize dimensions must be at least 1");
  }
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> result(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    const double upper = static_cast<double>(in - 1);
    for (std::size_t d = 0; d < out; ++d) {
      double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, upper);
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      result[d] = {lo, hi, src - static_cast<double>(lo)};
    }
    return result;
  };
  const auto xs = taps(image.width, out_w);
  const auto ys = taps(image.height, out_h);

  ByteImage out(out_w, out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    const std::uint8_t* row0 = &image.pixels[ty.lo * image.width];
    const std::uint8_t* row1 = &image.pixels[ty.hi * image.width];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      const double top = row0[tx.lo] + (row0[tx.hi] - static_cast<double>(row0[tx.lo])) * tx.frac;
      const double bottom = row1[tx.lo] + (row1[tx.hi] - static_cast<double>(row1[tx.lo])) * tx.frac;
      const double v = top + (bottom - top) * ty.frac;
      out.pixels[y * out_w + x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

UnitImage to_unit(const ByteImage& image) {
  UnitImage unit{image.width, image.height, std::vector<float>(image.pixels.size())};
  std::transform(image.pixels.begin(), image.pixels.end(), unit.values.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return unit;
}

Bytes reassemble_bag(const Bag& bag) {
  Bytes bytes;
  for (const Patch& p : bag.instances) {
    for (float v : p.values) {
      bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0f), 0L, 255L)));
    }
  }
  while (!bytes.empty() && bytes.back() == 0) bytes.pop_back();
  return bytes;
}

std::span<const std::uint8_t> pixel_prefix(const ByteImage& image, std::size_t count) {
  if (count > image.pixels.size()) {
    throw Error(ErrorKind::LengthMismatch, "prefix longer than image");
  }
  return std::span<const std::uint8_t>(image.pixels.data(), count);
}

void write_pgm(const ByteImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

ByteImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w == 0 || h == 0) {
    throw Error(ErrorKind::Io, path.string() + " is not an 8-bit binary PGM");
  }
  in.get();
  ByteImage image(w, h);
  in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
    throw Error(ErrorKind::Io, path.string() + " is truncated");
  }
  return image;
}

}  // namespace milplot::byteplot
