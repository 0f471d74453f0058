#include <doctest.h>

#include <cmath>

#include "milplot/adam.hpp"
#include "milplot/baseline.hpp"
#include "milplot/byteplot.hpp"
#include "milplot/error.hpp"
#include "oracles.hpp"

using namespace milplot;
using namespace milplot::baseline;

namespace {

BaselineConfig tiny() {
  BaselineConfig c;
  c.stack = {{4, 8}, 1, true, 2};
  c.hidden = 16;
  c.classes = 3;
  c.side = 16;
  return c;
}

}  // namespace

TEST_CASE("preprocess resizes the square byteplot and scales to unit range") {
  Rng rng(1);
  const auto bytes = oracle::random_bytes(rng, 1000);  // 32 x 32 square, 24 zero cells
  const auto patch = baseline_preprocess(bytes, 16);
  CHECK(patch.width == 16);
  CHECK(patch.height == 16);
  std::vector<std::uint8_t> square(32 * 32, 0);
  std::copy(bytes.begin(), bytes.end(), square.begin());
  const auto want = oracle::bilinear(square, 32, 32, 16, 16);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(patch.values[i] == doctest::Approx(want[i] / 255.0).epsilon(1e-6));
}

TEST_CASE("an enlarged sample reaches the network as mostly padding") {
  Rng rng(2);
  const auto bytes = oracle::random_bytes(rng, 4096);
  Bytes big(bytes.size() * 20, 0);
  std::copy(bytes.begin(), bytes.end(), big.begin());
  const auto patch = baseline_preprocess(big, 32);
  std::size_t zero_cells = 0;
  for (float v : patch.values) zero_cells += v == 0.0f;
  // The original occupies about 1/20 of the square.
  CHECK(zero_cells > patch.values.size() / 2);
}

TEST_CASE("forward gives a distribution") {
  BaselineModel<float> m(tiny());
  m.init(3);
  Rng rng(3);
  const auto p = m.forward(baseline_preprocess(oracle::random_bytes(rng, 700), 16));
  REQUIRE(p.size() == 3);
  double s = 0.0;
  for (float v : p) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("initialisation is seeded") {
  BaselineModel<float> a(tiny()), b(tiny()), c(tiny());
  a.init(5);
  b.init(5);
  c.init(6);
  const auto pa = a.params(), pb = b.params(), pc = c.params();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    differs |= !(pa[i]->value == pc[i]->value);
  }
  CHECK(differs);
}

TEST_CASE("a few Adam steps fit a single example") {
  BaselineModel<double> m(tiny());
  m.init(4);
  Rng rng(4);
  const auto patch = baseline_preprocess(oracle::random_bytes(rng, 256), 16);
  nn::AdamState<double> state;
  state.config.learning_rate = 1e-2;
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 30; ++i) {
    nn::zero_grads(m.params());
    last = m.accumulate_gradients(patch, 1);
    if (i == 0) first = last;
    nn::adam_step(m.params(), state);
  }
  CHECK(first == doctest::Approx(std::log(3.0)).epsilon(0.5));
  CHECK(last < 0.1 * first);
}

TEST_CASE("wrong patch side is rejected") {
  BaselineModel<float> m(tiny());
  m.init(1);
  CHECK_THROWS_AS(m.forward(byteplot::Patch{8, 8, std::vector<float>(64)}), Error);
}
