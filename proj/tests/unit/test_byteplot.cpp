#include <doctest.h>

#include <filesystem>

#include "milplot/byteplot.hpp"
#include "milplot/error.hpp"
#include "oracles.hpp"

using namespace milplot;
using namespace milplot::byteplot;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("square image sides") {
  CHECK(to_square_image(Bytes(4194304, 1)).width == 2048);
  const auto ten_million = to_square_image(Bytes(10000000, 1));
  CHECK(ten_million.width == 3163);
  CHECK(ten_million.height == 3163);
  const auto one = to_square_image(Bytes{0xFF});
  CHECK(one.width == 1);
  CHECK(one.pixels == std::vector<std::uint8_t>{255});
  CHECK(kind_of([] { to_square_image(Bytes{}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("square image is row-major with zero tail") {
  const Bytes b{1, 2, 3, 4, 5};
  const auto img = to_square_image(b);
  CHECK(img.width == 3);
  CHECK(img.pixels == std::vector<std::uint8_t>{1, 2, 3, 4, 5, 0, 0, 0, 0});
}

TEST_CASE("fixed width image") {
  CHECK(to_fixed_width_image(Bytes(448, 7)).height == 2);
  const auto img = to_fixed_width_image(Bytes(450, 7));
  CHECK(img.width == 224);
  CHECK(img.height == 3);
  CHECK(std::count(img.pixels.begin(), img.pixels.end(), 0) == 222);
  CHECK(to_fixed_width_image(Bytes(150528, 1)).height == 672);
  CHECK(kind_of([] { to_fixed_width_image(Bytes{}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("bags") {
  const auto bag3 = make_bag(ByteImage(224, 672, 9));
  CHECK(bag3.size() == 3);
  const auto bag2 = make_bag(ByteImage(224, 225, 255));
  REQUIRE(bag2.size() == 2);
  const auto& second = bag2.instances[1].values;
  CHECK(std::count(second.begin(), second.end(), 0.0f) == 224 * 223);
  CHECK(kind_of([] { make_bag(ByteImage(100, 224)); }) == ErrorKind::WidthMismatch);
  for (const auto& inst : bag3.instances) {
    CHECK(inst.width == 224);
    CHECK(inst.height == 224);
  }
}

TEST_CASE("bag instance j covers bytes [j*P*P, (j+1)*P*P)") {
  Rng rng(3);
  const auto bytes = oracle::random_bytes(rng, 3 * 28 * 28 + 5);
  const auto bag = bag_from_bytes(bytes, 28);
  REQUIRE(bag.size() == 4);
  for (std::size_t j = 0; j < bag.size(); ++j) {
    for (std::size_t i = 0; i < 28 * 28; ++i) {
      const std::size_t src = j * 28 * 28 + i;
      const float expect = src < bytes.size() ? bytes[src] / 255.0f : 0.0f;
      REQUIRE(bag.instances[j].values[i] == expect);
    }
  }
}

TEST_CASE("bilinear resize worked example") {
  ByteImage img(2, 2);
  img.pixels = {0, 255, 0, 255};
  const auto out = resize_bilinear(img, 4, 4);
  for (std::size_t y = 0; y < 4; ++y) {
    CHECK(out.at(0, y) == 0);
    CHECK(out.at(1, y) == 64);
    CHECK(out.at(2, y) == 191);
    CHECK(out.at(3, y) == 255);
  }
}

TEST_CASE("bilinear resize matches the direct oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t w = 1 + rng.below(40), h = 1 + rng.below(40);
    const std::size_t ow = 1 + rng.below(60), oh = 1 + rng.below(60);
    ByteImage img(w, h);
    img.pixels = oracle::random_bytes(rng, w * h);
    const auto out = resize_bilinear(img, ow, oh);
    std::vector<double> exact;
    const auto expect = oracle::bilinear(img.pixels, w, h, ow, oh, &exact);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      if (out.pixels[i] == expect[i]) continue;
      // Only a half-way value may round either way between formulations.
      CHECK(std::abs(int(out.pixels[i]) - int(expect[i])) == 1);
      CHECK(std::abs(exact[i] - std::floor(exact[i]) - 0.5) < 1e-9);
    }
  }
}

TEST_CASE("bilinear resize properties") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t w = 1 + rng.below(50), h = 1 + rng.below(50);
    ByteImage img(w, h);
    img.pixels = oracle::random_bytes(rng, w * h);
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const auto out = resize_bilinear(img, 1 + rng.below(70), 1 + rng.below(70));
    for (auto v : out.pixels) {
      REQUIRE(v >= *lo);
      REQUIRE(v <= *hi);
    }
  }
  const ByteImage flat(37, 11, 77);
  const auto down = resize_bilinear(flat, 5, 9);
  CHECK(std::all_of(down.pixels.begin(), down.pixels.end(), [](auto v) { return v == 77; }));
  CHECK(resize_bilinear(down, 37, 11) == flat);
  CHECK(kind_of([&] { resize_bilinear(flat, 0, 3); }) == ErrorKind::EmptyInput);
}

TEST_CASE("unit scaling") {
  ByteImage img(3, 1);
  img.pixels = {255, 0, 128};
  const auto u = to_unit(img);
  CHECK(u.values[0] == 1.0f);
  CHECK(u.values[1] == 0.0f);
  CHECK(u.values[2] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("bag reassembly is lossless") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    Bytes bytes = oracle::random_bytes(rng, 1 + rng.below(5000));
    if (bytes.back() == 0) bytes.back() = 1;
    const std::size_t patch = trial % 2 ? 28 : 224;
    CHECK(reassemble_bag(bag_from_bytes(bytes, patch)) == bytes);
  }
}

TEST_CASE("make_bag is deterministic") {
  Rng rng(2);
  const auto bytes = oracle::random_bytes(rng, 2000);
  const auto a = bag_from_bytes(bytes, 28), b = bag_from_bytes(bytes, 28);
  REQUIRE(a.size() == b.size());
  for (std::size_t j = 0; j < a.size(); ++j) CHECK(a.instances[j].values == b.instances[j].values);
}

TEST_CASE("pixel prefix") {
  ByteImage img(3, 2);
  img.pixels = {1, 2, 3, 4, 5, 6};
  const auto p = pixel_prefix(img, 4);
  CHECK(std::vector<std::uint8_t>(p.begin(), p.end()) == std::vector<std::uint8_t>{1, 2, 3, 4});
  CHECK(kind_of([&] { pixel_prefix(img, 7); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("PGM round trip") {
  Rng rng(8);
  ByteImage img(17, 9);
  img.pixels = oracle::random_bytes(rng, img.size());
  const auto path = std::filesystem::temp_directory_path() / "milplot_test_roundtrip.pgm";
  write_pgm(img, path);
  CHECK(read_pgm(path) == img);
  std::filesystem::remove(path);
}
