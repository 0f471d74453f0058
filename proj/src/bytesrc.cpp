#include "milplot/bytesrc.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "milplot/error.hpp"
#include "milplot/rng.hpp"

namespace milplot::bytesrc {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    field.erase(std::remove(field.begin(), field.end(), '"'), field.end());
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  return fields;
}

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

void Corpus::validate() const {
  std::set<std::string> ids;
  for (const RawSample& s : samples) {
    if (s.bytes.empty()) throw Error(ErrorKind::InvalidConfig, "sample " + s.id + " has no bytes");
    if (s.family && *s.family >= class_names.size()) {
      throw Error(ErrorKind::InvalidConfig, "sample " + s.id + " has out-of-range family");
    }
    if (!ids.insert(s.id).second) throw Error(ErrorKind::InvalidConfig, "duplicate sample id " + s.id);
  }
}

std::vector<std::size_t> Corpus::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const RawSample& s : samples) {
    if (s.family) ++counts.at(*s.family);
  }
  return counts;
}

void SynthConfig::validate() const {
  if (families < 2) throw Error(ErrorKind::InvalidConfig, "need at least 2 families");
  if (min_samples_per_family == 0 || min_samples_per_family > max_samples_per_family) {
    throw Error(ErrorKind::InvalidConfig, "empty samples-per-family range");
  }
  if (min_size == 0 || min_size > max_size) throw Error(ErrorKind::InvalidConfig, "empty size range");
  if (min_sections > max_sections) throw Error(ErrorKind::InvalidConfig, "empty section range");
  if (tile_noise < 0.0 || tile_noise > 1.0) throw Error(ErrorKind::InvalidConfig, "tile_noise outside [0,1]");
  if (max_filler_fraction < 0.0 || max_filler_fraction >= 1.0) {
    throw Error(ErrorKind::InvalidConfig, "max_filler_fraction outside [0,1)");
  }
}

Bytes parse_hex_dump(std::string_view text) {
  Bytes bytes;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;

    bool address_seen = false;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      std::string_view token = line.substr(i, j - i);
      i = j;
      if (!address_seen) {
        address_seen = true;
        continue;
      }
      if (token == "??") continue;
      if (token.size() != 2 || hex_value(token[0]) < 0 || hex_value(token[1]) < 0) {
        throw Error(ErrorKind::MalformedToken, "bad byte token '" + std::string(token) + "'");
      }
      bytes.push_back(static_cast<std::uint8_t>(hex_value(token[0]) * 16 + hex_value(token[1])));
    }
  }
  if (bytes.empty()) throw Error(ErrorKind::EmptySample, "no bytes left after removing unknown-byte tokens");
  return bytes;
}

std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "test_fraction must lie in (0,1)");
  }
  const std::size_t C = corpus.num_classes();
  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& family = corpus.samples[i].family;
    if (!family || *family >= C) throw Error(ErrorKind::InvalidConfig, "unlabelled sample in split");
    by_class[*family].push_back(i);
  }

  std::vector<bool> is_test(corpus.samples.size(), false);
  Rng rng(spec.seed);
  for (std::size_t c = 0; c < C; ++c) {
    auto& members = by_class[c];
    if (members.size() < 2) {
      throw Error(ErrorKind::ClassTooSmall, "class " + corpus.class_names[c] + " has fewer than 2 samples");
    }
    const double exact = spec.test_fraction * static_cast<double>(members.size());
    auto take = static_cast<std::size_t>(std::lround(exact));
    take = std::clamp<std::size_t>(take, 1, members.size() - 1);
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t t = 0; t < take; ++t) is_test[members[t]] = true;
  }

  Corpus train{{}, corpus.class_names};
  Corpus test{{}, corpus.class_names};
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    (is_test[i] ? test : train).samples.push_back(corpus.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

FamilyMotif family_motif(std::size_t family, std::size_t families, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 1000 + family));
  FamilyMotif motif;
  // Spread family intensity levels across the byte range so that families
  // differ in both texture (tile) and layout (section means).
  const double level = 30.0 + 195.0 * static_cast<double>(family) / static_cast<double>(std::max<std::size_t>(1, families - 1));
  const double tile_spread = rng.uniform(8.0, 24.0);
  for (auto& b : motif.tile) b = clamp_byte(level + tile_spread * rng.normal());
  // Section means cluster around the family level, so families occupy
  // separate brightness bands that survive resizing.
  const double n_means = static_cast<double>(motif.section_means.size());
  for (std::size_t j = 0; j < motif.section_means.size(); ++j) {
    motif.section_means[j] = level + 12.0 * (static_cast<double>(j) - (n_means - 1.0) / 2.0) + rng.uniform(-3.0, 3.0);
  }
  motif.section_spread = rng.uniform(3.0, 10.0);
  return motif;
}

Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Corpus corpus;
  for (std::size_t f = 0; f < config.families; ++f) corpus.class_names.push_back("family_" + std::to_string(f));

  for (std::size_t f = 0; f < config.families; ++f) {
    const FamilyMotif motif = family_motif(f, config.families, seed);
    Rng rng(mix_seed(seed, f));
    const std::size_t count = rng.between(config.min_samples_per_family, config.max_samples_per_family);
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t size = rng.between(config.min_size, config.max_size);
      Bytes bytes(size);

      // Layout: tile regions separated by sections at random cut points.
      const std::size_t sections = rng.between(config.min_sections, config.max_sections);
      std::vector<std::size_t> cuts;
      for (std::size_t c = 0; c < 2 * sections; ++c) cuts.push_back(rng.below(size));
      std::sort(cuts.begin(), cuts.end());
      cuts.insert(cuts.begin(), 0);
      cuts.push_back(size);
      const std::size_t phase = rng.below(16);
      for (std::size_t r = 0; r + 1 < cuts.size(); ++r) {
        const bool is_section = (r % 2) == 1;
        const double mean = motif.section_means[rng.below(motif.section_means.size())];
        for (std::size_t i = cuts[r]; i < cuts[r + 1]; ++i) {
          if (is_section) {
            bytes[i] = clamp_byte(mean + motif.section_spread * rng.normal());
          } else if (rng.uniform01() < config.tile_noise) {
            bytes[i] = rng.byte();
          } else {
            bytes[i] = motif.tile[(i + phase) % motif.tile.size()];
          }
        }
      }

      if (config.shared_filler && config.max_filler_blocks > 0) {
        const std::size_t blocks = rng.below(config.max_filler_blocks + 1);
        for (std::size_t b = 0; b < blocks; ++b) {
          const auto length = static_cast<std::size_t>(rng.uniform(0.02, config.max_filler_fraction) * static_cast<double>(size));
          if (length == 0 || length >= size) continue;
          const std::size_t start = rng.below(size - length);
          const bool zeros = rng.uniform01() < 0.5;
          for (std::size_t i = start; i < start + length; ++i) bytes[i] = zeros ? 0 : rng.byte();
        }
      }

      char id[64];
      std::snprintf(id, sizeof(id), "f%02zu_%05zu", f, s);
      corpus.samples.push_back({id, std::move(bytes), f});
    }
  }
  return corpus;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (header) {
      header = false;
      if (line.rfind("id,", 0) == 0) continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) throw Error(ErrorKind::Io, "malformed manifest row: " + line);
    try {
      entries.push_back({fields[0], std::stoul(fields[1]), std::stoul(fields[2]), fields[3]});
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Io, "malformed manifest row: " + line);
    }
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "id,family_index,size_bytes,split\n";
  for (const auto& e : entries) out << e.id << ',' << e.family << ',' << e.size_bytes << ',' << e.split << '\n';
}

void write_corpus_dir(const std::filesystem::path& dir, const Corpus& train, const Corpus& test) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "samples");
  std::vector<ManifestEntry> entries;
  for (const auto* part : {&train, &test}) {
    const std::string split = part == &train ? "train" : "test";
    for (const RawSample& s : part->samples) {
      write_file(dir / "samples" / (s.id + ".bin"), s.bytes);
      entries.push_back({s.id, s.family.value_or(0), s.bytes.size(), split});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  write_manifest(dir / "manifest.csv", entries);

  std::ofstream classes(dir / "classes.csv");
  classes << "index,name\n";
  for (std::size_t c = 0; c < train.class_names.size(); ++c) classes << c << ',' << train.class_names[c] << '\n';
}

std::vector<std::string> read_class_names(const std::filesystem::path& dir) {
  std::ifstream in(dir / "classes.csv");
  if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "classes.csv").string());
  std::vector<std::string> names;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw Error(ErrorKind::Io, "malformed classes row: " + line);
    const std::size_t index = std::stoul(fields[0]);
    if (index != names.size()) throw Error(ErrorKind::Io, "classes.csv indices must be consecutive");
    names.push_back(fields[1]);
  }
  return names;
}

Corpus load_corpus_dir(const std::filesystem::path& dir, std::string_view split) {
  Corpus corpus;
  corpus.class_names = read_class_names(dir);
  for (const auto& e : read_manifest(dir / "manifest.csv")) {
    if (!split.empty() && e.split != split) continue;
    Bytes bytes = read_file(dir / "samples" / (e.id + ".bin"));
    if (bytes.size() != e.size_bytes) {
      throw Error(ErrorKind::Io, "sample " + e.id + " size differs from manifest");
    }
    corpus.samples.push_back({e.id, std::move(bytes), e.family});
  }
  corpus.validate();
  return corpus;
}

Corpus ingest_hex_directory(const std::filesystem::path& bytes_dir, const std::filesystem::path& labels_csv,
                            std::vector<std::string>* skipped) {
  std::ifstream in(labels_csv);
  if (!in) throw Error(ErrorKind::Io, "cannot open labels " + labels_csv.string());
  std::vector<std::pair<std::string, std::string>> labels;
  std::string line;
  while (std::getline(in, line)) {
    const auto fields = split_csv_line(line);
    if (fields.size() < 2 || fields[0].empty()) continue;
    if (labels.empty() && (fields[0] == "id" || fields[0] == "Id")) continue;
    labels.emplace_back(fields[0], fields[1]);
  }
  std::set<std::string> names;
  for (const auto& [id, name] : labels) names.insert(name);

  Corpus corpus;
  corpus.class_names.assign(names.begin(), names.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < corpus.class_names.size(); ++c) index[corpus.class_names[c]] = c;

  for (const auto& [id, name] : labels) {
    const Bytes raw = read_file(bytes_dir / (id + ".bytes"));
    try {
      corpus.samples.push_back({id, parse_hex_dump(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size())),
                                index.at(name)});
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptySample) throw;
      if (skipped) skipped->push_back(id);
    }
  }
  corpus.validate();
  return corpus;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  Bytes bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (static_cast<std::size_t>(in.gcount()) != size) throw Error(ErrorKind::Io, "short read on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

Bytes load_sample(const std::filesystem::path& path) {
  Bytes raw = read_file(path);
  if (path.extension() == ".bytes") {
    return parse_hex_dump(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()));
  }
  if (raw.empty()) throw Error(ErrorKind::EmptySample, path.string() + " is empty");
  return raw;
}

}  // namespace milplot::bytesrc
