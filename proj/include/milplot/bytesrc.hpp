#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "milplot/byteplot.hpp"

namespace milplot::bytesrc {

struct RawSample {
  std::string id;
  Bytes bytes;
  std::optional<std::size_t> family;
};

struct Corpus {
  std::vector<RawSample> samples;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  // Throws InvalidConfig on empty samples, out-of-range labels or duplicate ids.
  void validate() const;
  std::vector<std::size_t> class_counts() const;
};

struct SplitSpec {
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SynthConfig {
  std::size_t families = 5;
  std::size_t min_samples_per_family = 100;
  std::size_t max_samples_per_family = 100;
  std::size_t min_size = 100 * 1024;
  std::size_t max_size = 400 * 1024;
  // Fraction of tile bytes replaced by uniform noise.
  double tile_noise = 0.05;
  std::size_t min_sections = 1;
  std::size_t max_sections = 4;
  // Family-agnostic zero-padding and high-entropy blocks, as found in real
  // executables (alignment padding, packed resources).
  bool shared_filler = true;
  std::size_t max_filler_blocks = 2;
  double max_filler_fraction = 0.3;

  void validate() const;
};

// Parses a BIG-2015 style `.bytes` dump: the first token of each line is an
// address and is skipped; "??" tokens are dropped.
Bytes parse_hex_dump(std::string_view text);

// Returns (train, test). Per class, round(test_fraction * n_c) samples go to
// test (clamped to [1, n_c - 1]); both halves keep corpus order.
std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus, const SplitSpec& spec);

Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed);

// Family-level generator parameters; exposed for tests and diagnostics.
struct FamilyMotif {
  std::array<std::uint8_t, 16> tile{};
  std::array<double, 4> section_means{};
  double section_spread = 0.0;
};
FamilyMotif family_motif(std::size_t family, std::size_t families, std::uint64_t seed);

// On-disk corpus layout:
//   <dir>/manifest.csv   id,family_index,size_bytes,split
//   <dir>/classes.csv    index,name
//   <dir>/samples/<id>.bin
struct ManifestEntry {
  std::string id;
  std::size_t family = 0;
  std::size_t size_bytes = 0;
  std::string split;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

void write_corpus_dir(const std::filesystem::path& dir, const Corpus& train, const Corpus& test);

// Loads the samples whose manifest split equals `split` (all when empty).
Corpus load_corpus_dir(const std::filesystem::path& dir, std::string_view split = {});
std::vector<std::string> read_class_names(const std::filesystem::path& dir);

// Reads `<id>.bytes` files listed in a label CSV (`id,family_name`).
// Samples that are empty after "??" removal are skipped, not fatal.
Corpus ingest_hex_directory(const std::filesystem::path& bytes_dir, const std::filesystem::path& labels_csv,
                            std::vector<std::string>* skipped = nullptr);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Raw binary, or a hex dump when the extension is `.bytes`.
Bytes load_sample(const std::filesystem::path& path);

}  // namespace milplot::bytesrc
