#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "milplot/bytesrc.hpp"
#include "milplot/error.hpp"
#include "oracles.hpp"

using namespace milplot;
using namespace milplot::bytesrc;
namespace fs = std::filesystem;

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

Corpus counted_corpus(const std::vector<std::size_t>& counts) {
  Corpus c;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    c.class_names.push_back("class" + std::to_string(k));
    for (std::size_t i = 0; i < counts[k]; ++i) {
      c.samples.push_back({"s" + std::to_string(k) + "_" + std::to_string(i), Bytes{std::uint8_t(k + 1)}, k});
    }
  }
  return c;
}

std::size_t count_family(const Corpus& c, std::size_t f) {
  return static_cast<std::size_t>(
      std::count_if(c.samples.begin(), c.samples.end(), [&](const RawSample& s) { return s.family == f; }));
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("hex dump parsing") {
  CHECK(parse_hex_dump("00401000 4D 5A 90") == Bytes{0x4D, 0x5A, 0x90});
  CHECK(parse_hex_dump("00401000 4D ?? 90") == Bytes{0x4D, 0x90});
  CHECK(kind_of([] { parse_hex_dump("00401000 ?? ??"); }) == ErrorKind::EmptySample);
  CHECK(kind_of([] { parse_hex_dump("00401000 4D 5G"); }) == ErrorKind::MalformedToken);
  CHECK(kind_of([] { parse_hex_dump("00401000 4D5A"); }) == ErrorKind::MalformedToken);
  CHECK(parse_hex_dump("00401000 ab\r\n\n00401010 cD\r\n") == Bytes{0xAB, 0xCD});
}

TEST_CASE("hex dump round trip through an independent renderer") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto bytes = oracle::random_bytes(rng, 1 + rng.below(300));
    std::vector<bool> unknown(bytes.size());
    for (std::size_t i = 0; i < unknown.size(); ++i) unknown[i] = rng.below(7) == 0;
    CHECK(parse_hex_dump(oracle::render_hex_dump(bytes)) == bytes);
    CHECK(parse_hex_dump(oracle::render_hex_dump(bytes, unknown)) == bytes);
  }
}

TEST_CASE("stratified split of a balanced corpus") {
  const auto corpus = counted_corpus({50, 50});
  const auto [train, test] = stratified_split(corpus, {0.1, 7});
  CHECK(train.size() == 90);
  CHECK(test.size() == 10);
  CHECK(count_family(test, 0) == 5);
  CHECK(count_family(test, 1) == 5);

  const auto [train2, test2] = stratified_split(corpus, {0.1, 7});
  std::vector<std::string> a, b;
  for (const auto& s : test.samples) a.push_back(s.id);
  for (const auto& s : test2.samples) b.push_back(s.id);
  CHECK(a == b);

  std::set<std::string> ids;
  for (const auto& s : train.samples) ids.insert(s.id);
  for (const auto& s : test.samples) CHECK(ids.insert(s.id).second);
  CHECK(ids.size() == corpus.size());
}

TEST_CASE("stratified split rounding on imbalanced classes") {
  const auto [train, test] = stratified_split(counted_corpus({43, 2942}), {0.1, 3});
  // round(4.3) = 4, round(294.2) = 294
  CHECK(count_family(test, 0) == 4);
  CHECK(count_family(test, 1) == 294);
}

TEST_CASE("stratification stays within one sample of the global fraction") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::size_t> counts(2 + rng.below(5));
    for (auto& c : counts) c = 2 + rng.below(200);
    const double f = 0.05 + 0.5 * rng.uniform01();
    const auto corpus = counted_corpus(counts);
    const auto [train, test] = stratified_split(corpus, {f, rng.next()});
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const double expect = f * static_cast<double>(counts[k]);
      CHECK(std::abs(static_cast<double>(count_family(test, k)) - expect) <= 1.0);
    }
    CHECK(train.size() + test.size() == corpus.size());
  }
}

TEST_CASE("split errors") {
  CHECK(kind_of([] { stratified_split(counted_corpus({5, 1}), {0.1, 0}); }) == ErrorKind::ClassTooSmall);
}

TEST_CASE("synthetic corpus counts and determinism") {
  SynthConfig cfg;
  cfg.min_size = 4096;
  cfg.max_size = 8192;
  const auto a = synth_corpus(cfg, 1);
  CHECK(a.size() == 500);
  CHECK(a.num_classes() == 5);
  for (auto n : a.class_counts()) CHECK(n == 100);
  for (const auto& s : a.samples) {
    CHECK(s.bytes.size() >= cfg.min_size);
    CHECK(s.bytes.size() <= cfg.max_size);
  }
  const auto b = synth_corpus(cfg, 1);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.samples[i].bytes == b.samples[i].bytes);
  const auto c = synth_corpus(cfg, 2);
  CHECK(c.samples[0].bytes != a.samples[0].bytes);
}

TEST_CASE("synthetic config validation") {
  SynthConfig cfg;
  cfg.families = 1;
  CHECK(kind_of([&] { synth_corpus(cfg, 1); }) == ErrorKind::InvalidConfig);
  cfg = {};
  cfg.min_size = 10;
  cfg.max_size = 5;
  CHECK(kind_of([&] { synth_corpus(cfg, 1); }) == ErrorKind::InvalidConfig);
  cfg = {};
  cfg.min_samples_per_family = 0;
  CHECK(kind_of([&] { synth_corpus(cfg, 1); }) == ErrorKind::InvalidConfig);
}

namespace {

std::array<double, 256> histogram(const Bytes& b) {
  std::array<double, 256> h{};
  for (auto v : b) h[v] += 1.0 / static_cast<double>(b.size());
  return h;
}

}  // namespace

TEST_CASE("families have different byte histograms") {
  SynthConfig cfg;
  cfg.min_samples_per_family = cfg.max_samples_per_family = 4;
  cfg.min_size = cfg.max_size = 64 * 1024;
  const auto corpus = synth_corpus(cfg, 1);
  // Pooled histograms per family, compared by the chi-squared statistic.
  std::vector<std::array<double, 256>> counts(cfg.families);
  for (const auto& s : corpus.samples) {
    for (auto v : s.bytes) counts[*s.family][v] += 1.0;
  }
  for (std::size_t a = 0; a < cfg.families; ++a) {
    for (std::size_t b = a + 1; b < cfg.families; ++b) {
      double chi2 = 0.0;
      const double na = std::accumulate(counts[a].begin(), counts[a].end(), 0.0);
      const double nb = std::accumulate(counts[b].begin(), counts[b].end(), 0.0);
      for (int v = 0; v < 256; ++v) {
        const double total = counts[a][v] + counts[b][v];
        if (total == 0) continue;
        const double ea = total * na / (na + nb), eb = total * nb / (na + nb);
        chi2 += (counts[a][v] - ea) * (counts[a][v] - ea) / ea + (counts[b][v] - eb) * (counts[b][v] - eb) / eb;
      }
      // 255 degrees of freedom; the 0.999 quantile is about 330.
      CHECK(chi2 > 1000.0);
    }
  }
}

TEST_CASE("byte histograms separate the synthetic families") {
  SynthConfig cfg;
  cfg.min_size = 16 * 1024;
  cfg.max_size = 64 * 1024;
  const auto corpus = synth_corpus(cfg, 3);
  const auto [train, test] = stratified_split(corpus, {0.1, 3});
  std::vector<std::array<double, 256>> centroid(cfg.families);
  for (const auto& s : train.samples) {
    const auto h = histogram(s.bytes);
    for (int v = 0; v < 256; ++v) centroid[*s.family][v] += h[v];
  }
  for (std::size_t f = 0; f < cfg.families; ++f) {
    for (auto& v : centroid[f]) v /= static_cast<double>(count_family(train, f));
  }
  std::size_t correct = 0;
  for (const auto& s : test.samples) {
    const auto h = histogram(s.bytes);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t f = 0; f < cfg.families; ++f) {
      double d = 0.0;
      for (int v = 0; v < 256; ++v) d += std::abs(h[v] - centroid[f][v]);
      if (d < best_d) best_d = d, best = f;
    }
    correct += best == *s.family;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(test.size()) >= 0.9);
}

TEST_CASE("corpus directory round trip") {
  SynthConfig cfg;
  cfg.families = 3;
  cfg.min_samples_per_family = cfg.max_samples_per_family = 4;
  cfg.min_size = 100;
  cfg.max_size = 300;
  const auto corpus = synth_corpus(cfg, 5);
  const auto [train, test] = stratified_split(corpus, {0.25, 5});
  const auto dir = fresh_dir("milplot_test_corpus");
  write_corpus_dir(dir, train, test);

  const auto manifest = read_manifest(dir / "manifest.csv");
  CHECK(manifest.size() == corpus.size());
  std::ifstream header_in(dir / "manifest.csv");
  std::string header;
  std::getline(header_in, header);
  CHECK(header == "id,family_index,size_bytes,split");

  const auto loaded_test = load_corpus_dir(dir, "test");
  CHECK(loaded_test.size() == test.size());
  CHECK(load_corpus_dir(dir, "train").size() == train.size());
  CHECK(load_corpus_dir(dir).size() == corpus.size());
  CHECK(read_class_names(dir) == corpus.class_names);
  for (const auto& s : loaded_test.samples) {
    const auto it = std::find_if(test.samples.begin(), test.samples.end(), [&](auto& t) { return t.id == s.id; });
    REQUIRE(it != test.samples.end());
    CHECK(it->bytes == s.bytes);
    CHECK(it->family == s.family);
  }
  fs::remove_all(dir);
}

TEST_CASE("ingest skips all-unknown samples") {
  const auto dir = fresh_dir("milplot_test_ingest");
  Rng rng(1);
  std::ofstream labels(dir / "labels.csv");
  labels << "id,family_name\n";
  for (int i = 0; i < 6; ++i) {
    const std::string id = "x" + std::to_string(i);
    std::ofstream(dir / (id + ".bytes")) << oracle::render_hex_dump(oracle::random_bytes(rng, 40));
    labels << id << ',' << (i % 2 ? "Ramnit" : "Lollipop") << '\n';
  }
  std::ofstream(dir / "empty.bytes") << "00401000 ?? ?? ??\n";
  labels << "empty,Ramnit\n";
  labels.close();

  std::vector<std::string> skipped;
  const auto corpus = ingest_hex_directory(dir, dir / "labels.csv", &skipped);
  CHECK(corpus.size() == 6);
  CHECK(skipped == std::vector<std::string>{"empty"});
  CHECK(corpus.class_names == std::vector<std::string>{"Lollipop", "Ramnit"});
  fs::remove_all(dir);
}

TEST_CASE("corpus validation") {
  auto c = counted_corpus({2, 2});
  c.samples[1].id = c.samples[0].id;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::InvalidConfig);
  c = counted_corpus({2, 2});
  c.samples[0].family = 7;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::InvalidConfig);
}
