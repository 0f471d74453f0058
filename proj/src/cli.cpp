#include "milplot/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "milplot/adversary.hpp"
#include "milplot/blas.hpp"
#include "milplot/byteplot.hpp"
#include "milplot/bytesrc.hpp"
#include "milplot/config.hpp"
#include "milplot/harness.hpp"
#include "milplot/metrics.hpp"

namespace milplot::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return kExitUsage;
    case ErrorKind::NumericFailure:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

std::string sha256_hex(std::span<const unsigned char> data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "sha256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::string sha256_file(const fs::path& path) {
  const Bytes data = bytesrc::read_file(path);
  return sha256_hex(data);
}

namespace {

struct Common {
  std::size_t threads = 1;
  bool deterministic = false;
};

std::size_t default_threads() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      const auto n = std::stoull(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

void apply_threads(const Common& common) {
  nn::blas::set_threads(static_cast<int>(common.deterministic ? 1 : common.threads));
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

// Records inputs, configuration and output hashes of one command.
class RunManifest {
 public:
  RunManifest(std::string command, fs::path out_dir, const std::vector<std::string>& args)
      : out_dir_(std::move(out_dir)) {
    doc_["command"] = std::move(command);
    doc_["args"] = args;
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }

  void config(const config::KeyValues& kv) { doc_["config"] = kv; }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void input(const fs::path& p) { doc_["inputs"].push_back(p.string()); }

  // `deterministic = false` marks timing-dependent files.
  void output(const fs::path& relative, bool deterministic = true) {
    doc_["outputs"].push_back({{"path", relative.generic_string()},
                               {"sha256", sha256_file(out_dir_ / relative)},
                               {"deterministic", deterministic}});
  }

  void write() const {
    auto out = open_out(out_dir_ / "run_manifest.json");
    out << doc_.dump(2) << '\n';
  }

 private:
  fs::path out_dir_;
  json doc_;
};

std::string config_hash(const config::KeyValues& kv) {
  const std::string text = config::format_kv(kv);
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void write_corpus_outputs(RunManifest& manifest, const fs::path& dir) {
  manifest.output("manifest.csv");
  manifest.output("classes.csv");
  std::vector<fs::path> samples;
  for (const auto& e : fs::directory_iterator(dir / "samples")) samples.push_back(fs::relative(e.path(), dir));
  std::sort(samples.begin(), samples.end());
  for (const auto& s : samples) manifest.output(s);
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  auto settings = config::synth_settings(a.config_path.empty() ? config::KeyValues{} : config::load_kv(a.config_path));
  if (a.seed) settings.seed = settings.split.seed = *a.seed;

  const auto corpus = bytesrc::synth_corpus(settings.synth, settings.seed);
  const auto [train, test] = bytesrc::stratified_split(corpus, settings.split);
  const fs::path dir = a.out_dir;
  bytesrc::write_corpus_dir(dir, train, test);

  RunManifest manifest("synth", dir, args);
  if (!a.config_path.empty()) manifest.input(a.config_path);
  manifest.config(config::to_kv(settings));
  manifest.seed(settings.seed);
  write_corpus_outputs(manifest, dir);
  manifest.write();
  out << "synth: " << corpus.size() << " samples in " << corpus.num_classes() << " classes (" << train.size()
      << " train, " << test.size() << " test) -> " << dir.string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ ingest

struct IngestArgs {
  std::string bytes_dir;
  std::string labels;
  std::string out_dir;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

int cmd_ingest(const IngestArgs& a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!(a.test_fraction > 0.0 && a.test_fraction < 1.0)) {
    throw Error(ErrorKind::Usage, "--test-fraction must be in (0,1)");
  }
  std::vector<std::string> skipped;
  const auto corpus = bytesrc::ingest_hex_directory(a.bytes_dir, a.labels, &skipped);
  for (const auto& id : skipped) err << "ingest: skipped " << id << " (no bytes after removing unknown tokens)\n";
  const auto [train, test] = bytesrc::stratified_split(corpus, {a.test_fraction, a.seed});
  const fs::path dir = a.out_dir;
  bytesrc::write_corpus_dir(dir, train, test);

  RunManifest manifest("ingest", dir, args);
  manifest.input(a.bytes_dir);
  manifest.input(a.labels);
  manifest.config({{"test_fraction", metrics::format_number(a.test_fraction)}});
  manifest.seed(a.seed);
  write_corpus_outputs(manifest, dir);
  manifest.write();
  out << "ingest: " << corpus.size() << " samples, " << skipped.size() << " skipped -> " << dir.string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string corpus_dir;
  std::string model;
  std::string config_path;
  std::string out_dir;
  std::string resume;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool no_epoch_eval = false;
};

std::string join_lines(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "\n" : "") + v[i];
  return s;
}

int cmd_train(const TrainArgs& a, const Common& common, const std::vector<std::string>& args, std::ostream& out) {
  harness::TrainConfig cfg =
      config::train_config(a.config_path.empty() ? config::KeyValues{} : config::load_kv(a.config_path));
  cfg.model_kind = harness::parse_model_kind(a.model);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.seed) cfg.seed = *a.seed;
  cfg.threads = common.threads;
  cfg.deterministic = common.deterministic;
  cfg.validate();

  const fs::path corpus_dir = a.corpus_dir;
  if (!fs::is_directory(corpus_dir)) throw Error(ErrorKind::Io, "corpus directory not found: " + corpus_dir.string());
  const auto train_corpus = bytesrc::load_corpus_dir(corpus_dir, "train");
  const auto test_corpus = bytesrc::load_corpus_dir(corpus_dir, "test");
  const auto split_manifest = bytesrc::read_manifest(corpus_dir / "manifest.csv");

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  auto trace_out = open_out(dir / "trace.csv");
  harness::write_trace_header(trace_out);

  harness::TrainHooks hooks;
  hooks.manifest = &split_manifest;
  if (!a.no_epoch_eval && !test_corpus.empty()) hooks.eval_corpus = &test_corpus;
  hooks.on_epoch = [&](const harness::EpochMetrics& m) {
    harness::write_trace_row(trace_out, m);
    trace_out.flush();
    out << "epoch " << m.epoch << ' ' << m.split << " accuracy=" << metrics::format_number(m.accuracy)
        << " macro_f1=" << metrics::format_number(m.macro_f1) << " loss=" << metrics::format_number(m.loss) << '\n';
  };

  std::unique_ptr<harness::Classifier> model;
  std::size_t start_epoch = 0;
  if (!a.resume.empty()) {
    const auto ckpt = harness::load_checkpoint(a.resume);
    model = harness::restore(ckpt, cfg.model_kind);
    if (auto it = ckpt.metadata.find("epoch"); it != ckpt.metadata.end()) start_epoch = std::stoull(it->second);
    harness::fit(*model, train_corpus, cfg, hooks);
  } else {
    model = harness::train(train_corpus, cfg, hooks).model;
  }
  trace_out.close();

  const auto cfg_kv = config::to_kv(cfg);
  auto meta = harness::arch_metadata(model->arch(), cfg.sub_batch, cfg.k_top);
  meta["epoch"] = std::to_string(start_epoch + cfg.epochs);
  meta["seed"] = std::to_string(cfg.seed);
  meta["config_hash"] = config_hash(cfg_kv);
  meta["class_names"] = join_lines(train_corpus.class_names);
  harness::save_checkpoint(harness::snapshot(*model, std::move(meta)), dir / "checkpoint.bin");
  {
    auto cfg_out = open_out(dir / "config.txt");
    cfg_out << config::format_kv(cfg_kv);
  }

  RunManifest manifest("train", dir, args);
  manifest.input(corpus_dir);
  if (!a.config_path.empty()) manifest.input(a.config_path);
  if (!a.resume.empty()) manifest.input(a.resume);
  manifest.config(cfg_kv);
  manifest.seed(cfg.seed);
  manifest.output("checkpoint.bin");
  manifest.output("trace.csv");
  manifest.output("config.txt");
  manifest.write();
  out << "train: " << harness::to_string(cfg.model_kind) << " checkpoint -> " << (dir / "checkpoint.bin").string()
      << '\n';
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string corpus_dir;
  std::string split = "test";
  std::string out_dir;
  std::string attack;
  std::optional<double> factor;
  std::optional<std::size_t> side;
  std::uint64_t seed = 0;
  bool attention = false;
};

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<harness::AttackConfig> parse_attack(const std::string& mode, std::optional<double> factor,
                                                  std::optional<std::size_t> side, std::uint64_t seed) {
  if (mode.empty()) {
    if (factor || side) throw Error(ErrorKind::Usage, "--factor/--side require --attack");
    return std::nullopt;
  }
  if (factor && side) throw Error(ErrorKind::Usage, "--factor and --side are mutually exclusive");
  harness::AttackConfig ac;
  ac.mode = adversary::parse_enlarge_mode(mode);
  if (factor) {
    if (!(*factor >= 1.0)) throw Error(ErrorKind::Usage, "--factor must be at least 1");
    ac.factor = *factor;
  }
  ac.side = side;
  ac.seed = seed;
  return ac;
}

config::KeyValues attack_kv(const harness::AttackConfig& ac) {
  config::KeyValues kv{{"attack", std::string(adversary::to_string(ac.mode))}, {"seed", std::to_string(ac.seed)}};
  if (ac.side) kv["side"] = std::to_string(*ac.side);
  else kv["factor"] = metrics::format_number(ac.factor);
  return kv;
}

int cmd_eval(const EvalArgs& a, const Common& common, const std::vector<std::string>& args, std::ostream& out) {
  const auto attack = parse_attack(a.attack, a.factor, a.side, a.seed);

  const auto ckpt = harness::load_checkpoint(a.checkpoint);
  const auto model = harness::restore(ckpt);
  const fs::path corpus_dir = a.corpus_dir;
  if (!fs::is_directory(corpus_dir)) throw Error(ErrorKind::Io, "corpus directory not found: " + corpus_dir.string());
  const auto corpus = bytesrc::load_corpus_dir(corpus_dir, a.split);

  harness::EvalOptions options;
  options.attack = attack;
  options.threads = common.threads;
  const auto report = harness::evaluate(*model, corpus, options);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "report.csv");
    metrics::write_report_csv(f, report);
  }
  {
    auto f = open_out(dir / "confusion.csv");
    metrics::write_confusion_csv(f, report, corpus.class_names);
  }
  {
    auto f = open_out(dir / "latency.csv");
    metrics::write_latency_csv(f, report);
  }
  const std::string attack_name = attack ? std::string(adversary::to_string(attack->mode)) : "none";
  json summary = {
      {"model_kind", harness::to_string(model->kind())},
      {"attack", attack_name},
      {"split", a.split},
      {"samples", report.samples},
      {"accuracy", report.accuracy},
      {"macro_f1", report.macro_f1},
      {"auroc_macro", report.auroc_macro},
      {"mean_loss", report.mean_loss},
  };
  if (attack) {
    if (attack->side) summary["side"] = *attack->side;
    else summary["factor"] = attack->factor;
    summary["attack_seed"] = attack->seed;
  }
  {
    auto f = open_out(dir / "summary.json");
    f << summary.dump(2) << '\n';
  }
  if (a.attention && model->kind() != harness::ModelKind::baseline) {
    auto f = open_out(dir / "attention.csv");
    mil::write_attention_header(f);
    for (const auto& s : corpus.samples) {
      Bytes bytes = s.bytes;
      if (attack) bytes = adversary::enlarge(s.bytes, attack->for_sample(s.bytes.size(), s.id));
      const auto detail = model->explain(model->prepare(bytes));
      mil::write_attention_rows(f, s.id, *detail);
    }
  }

  RunManifest manifest("eval", dir, args);
  manifest.input(a.checkpoint);
  manifest.input(corpus_dir);
  manifest.config({{"attack", attack_name}, {"split", a.split}});
  manifest.seed(a.seed);
  manifest.output("report.csv");
  manifest.output("confusion.csv");
  manifest.output("summary.json");
  manifest.output("latency.csv", false);
  if (fs::exists(dir / "attention.csv")) manifest.output("attention.csv");
  manifest.write();

  out << "eval: " << harness::to_string(model->kind()) << " attack=" << attack_name
      << " accuracy=" << metrics::format_number(report.accuracy)
      << " macro_f1=" << metrics::format_number(report.macro_f1)
      << " network_ms=" << metrics::format_number(mean(report.network_ms))
      << " end_to_end_ms=" << metrics::format_number(mean(report.end_to_end_ms)) << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ attack

struct AttackArgs {
  std::string corpus_dir;
  std::string split = "test";
  std::string out_dir;
  std::string mode;
  std::optional<double> factor;
  std::optional<std::size_t> side;
  std::uint64_t seed = 0;
};

// Writes the enlarged samples of one split as a corpus directory that
// `eval` can read directly.
int cmd_attack(const AttackArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto attack = parse_attack(a.mode, a.factor, a.side, a.seed);
  const fs::path corpus_dir = a.corpus_dir;
  if (!fs::is_directory(corpus_dir)) throw Error(ErrorKind::Io, "corpus directory not found: " + corpus_dir.string());
  if (a.split != "train" && a.split != "test") throw Error(ErrorKind::Usage, "--split must be train or test");
  auto enlarged = bytesrc::load_corpus_dir(corpus_dir, a.split);
  if (enlarged.empty()) throw Error(ErrorKind::EmptyCorpus, "split '" + a.split + "' has no samples");
  for (auto& s : enlarged.samples) s.bytes = adversary::enlarge(s.bytes, attack->for_sample(s.bytes.size(), s.id));

  bytesrc::Corpus none;
  none.class_names = enlarged.class_names;
  const fs::path dir = a.out_dir;
  if (a.split == "test") bytesrc::write_corpus_dir(dir, none, enlarged);
  else bytesrc::write_corpus_dir(dir, enlarged, none);

  RunManifest manifest("attack", dir, args);
  manifest.input(corpus_dir);
  manifest.config(attack_kv(*attack));
  manifest.seed(a.seed);
  write_corpus_outputs(manifest, dir);
  manifest.write();
  out << "attack: " << enlarged.size() << " enlarged samples -> " << dir.string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- audit

struct AuditArgs {
  std::string sample;
  std::string out_dir;
  std::string sides;
  std::string factors = "1,2,4,8,16";
  std::size_t resize = byteplot::kPatchSide;
};

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Usage, std::string(flag) + ": bad list element '" + tok + "'");
    }
  }
  if (v.empty()) throw Error(ErrorKind::Usage, std::string(flag) + " must not be empty");
  return v;
}

int cmd_audit(const AuditArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.resize < 1) throw Error(ErrorKind::Usage, "--resize must be >= 1");
  const Bytes bytes = bytesrc::load_sample(a.sample);
  if (bytes.empty()) throw Error(ErrorKind::EmptyInput, "sample is empty: " + a.sample);

  const auto original = byteplot::to_square_image(bytes);
  const auto resized = byteplot::resize_bilinear(original, a.resize, a.resize);
  const auto reconstructed = byteplot::resize_bilinear(resized, original.width, original.height);
  const auto panel = metrics::loss_panel(original, reconstructed);

  std::vector<std::size_t> sides;
  if (!a.sides.empty()) {
    for (double s : parse_list(a.sides, "--sides")) {
      if (s < 1 || s != std::floor(s)) throw Error(ErrorKind::Usage, "--sides must be positive integers");
      sides.push_back(static_cast<std::size_t>(s));
    }
  } else {
    for (double f : parse_list(a.factors, "--factors")) {
      if (!(f >= 1.0)) throw Error(ErrorKind::Usage, "--factors must be >= 1");
      sides.push_back(adversary::square_side(static_cast<std::size_t>(std::ceil(static_cast<double>(bytes.size()) * f))));
    }
  }
  const auto sweep = adversary::mi_padding_sweep(bytes, sides, a.resize);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "panel.csv");
    metrics::write_panel_csv(f, panel);
  }
  {
    auto f = open_out(dir / "sweep.csv");
    adversary::write_sweep_csv(f, sweep);
  }
  byteplot::write_pgm(original, dir / "original.pgm");
  byteplot::write_pgm(resized, dir / "resized.pgm");
  byteplot::write_pgm(metrics::difference_image(original, reconstructed), dir / "difference.pgm");

  RunManifest manifest("audit", dir, args);
  manifest.input(a.sample);
  manifest.config({{"resize", std::to_string(a.resize)}});
  for (const char* name : {"panel.csv", "sweep.csv", "original.pgm", "resized.pgm", "difference.pgm"}) {
    manifest.output(name);
  }
  manifest.write();
  out << "audit: " << original.width << "x" << original.height << " mi_percent=" << metrics::format_number(panel.mi_percent)
      << " ssim=" << metrics::format_number(panel.ssim) << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ report

struct ReportRow {
  json summary;
  double network_ms = 0.0;
  double end_to_end_ms = 0.0;
};

std::optional<ReportRow> read_run(const fs::path& dir, std::ostream& err) {
  std::ifstream in(dir / "summary.json");
  if (!in) {
    err << "report: no summary.json in " << dir.string() << ", skipped\n";
    return std::nullopt;
  }
  ReportRow row;
  try {
    row.summary = json::parse(in);
  } catch (const json::exception& e) {
    err << "report: unreadable summary in " << dir.string() << ": " << e.what() << '\n';
    return std::nullopt;
  }
  std::ifstream lat(dir / "latency.csv");
  std::string line;
  std::vector<double> net, e2e;
  if (lat && std::getline(lat, line)) {
    while (std::getline(lat, line)) {
      std::stringstream ss(line);
      std::string id, n, e;
      if (std::getline(ss, id, ',') && std::getline(ss, n, ',') && std::getline(ss, e, ',')) {
        net.push_back(std::stod(n));
        e2e.push_back(std::stod(e));
      }
    }
  }
  row.network_ms = mean(net);
  row.end_to_end_ms = mean(e2e);
  return row;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& csv_path, std::ostream& out,
               std::ostream& err) {
  std::map<std::pair<std::string, std::string>, ReportRow> found;
  for (const auto& r : runs) {
    auto row = read_run(r, err);
    if (!row) continue;
    const auto key = std::make_pair(row->summary.value("model_kind", std::string()),
                                    row->summary.value("attack", std::string()));
    if (found.count(key)) err << "report: duplicate run for " << key.first << '/' << key.second << ", using " << r << '\n';
    found[key] = std::move(*row);
  }

  std::vector<std::vector<std::string>> table;
  using metrics::format_number;
  for (const char* model : {"baseline", "mil_attention", "mil_gated"}) {
    for (const char* attack : {"none", "zeros", "noise"}) {
      const auto it = found.find({model, attack});
      if (it == found.end()) {
        table.push_back({model, attack, "absent", "absent", "absent", "absent", "absent", "absent", "absent"});
        continue;
      }
      const auto& s = it->second.summary;
      table.push_back({model, attack, format_number(s.value("accuracy", NAN)), format_number(s.value("macro_f1", NAN)),
                       format_number(s.value("auroc_macro", NAN)), format_number(s.value("mean_loss", NAN)),
                       format_number(it->second.network_ms), format_number(it->second.end_to_end_ms),
                       std::to_string(s.value("samples", 0))});
    }
  }

  std::vector<std::string> header;
  {
    std::stringstream ss(kReportColumns);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : table) width[c] = std::max(width[c], row[c].size());
  }
  auto print_row = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(width[c])) << row[c] << (c + 1 < row.size() ? "  " : "\n");
    }
  };
  print_row(header);
  for (const auto& row : table) print_row(row);

  if (!csv_path.empty()) {
    auto f = open_out(csv_path);
    f << kReportColumns << '\n';
    for (const auto& row : table) {
      for (std::size_t c = 0; c < row.size(); ++c) f << row[c] << (c + 1 < row.size() ? "," : "\n");
    }
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Byteplot malware classification with attention MIL, resize baseline and enlargement attacks",
               "milplot"};
  app.require_subcommand(1);

  Common common;
  common.threads = default_threads();
  app.add_option("--threads", common.threads, std::string("Worker threads (default from ") + kThreadsEnv + ")")
      ->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", common.deterministic, "Single-threaded BLAS; bit-reproducible outputs");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labelled corpus with a train/test split");
  synth_cmd->add_option("--config", synth.config_path, "key = value config file")->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth.out_dir, "Output corpus directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Overrides the config seed");

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Import .bytes hex dumps with a label CSV (id,family_name)");
  ingest_cmd->add_option("--bytes", ingest.bytes_dir, "Directory of <id>.bytes files")->required();
  ingest_cmd->add_option("--labels", ingest.labels, "Label CSV")->required();
  ingest_cmd->add_option("--out", ingest.out_dir, "Output corpus directory")->required();
  ingest_cmd->add_option("--test-fraction", ingest.test_fraction, "Stratified test fraction");
  ingest_cmd->add_option("--seed", ingest.seed, "Split seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model on the corpus' train split");
  train_cmd->add_option("--corpus", train.corpus_dir, "Corpus directory")->required();
  train_cmd->add_option("--model", train.model, "baseline | mil_attention | mil_gated")->required();
  train_cmd->add_option("--config", train.config_path, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out_dir, "Output run directory")->required();
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint of the same model kind");
  train_cmd->add_option("--epochs", train.epochs, "Overrides the config epochs");
  train_cmd->add_option("--seed", train.seed, "Overrides the config seed");
  train_cmd->add_flag("--no-epoch-eval", train.no_epoch_eval, "Skip the per-epoch test evaluation");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint, optionally under an enlargement attack");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--corpus", eval.corpus_dir, "Corpus directory")->required();
  eval_cmd->add_option("--split", eval.split, "Manifest split to evaluate (default test)");
  eval_cmd->add_option("--out", eval.out_dir, "Output directory")->required();
  eval_cmd->add_option("--attack", eval.attack, "zeros | noise");
  eval_cmd->add_option("--factor", eval.factor, "Enlarge to factor x the original size (default 20)");
  eval_cmd->add_option("--side", eval.side, "Enlarge to side x side bytes");
  eval_cmd->add_option("--seed", eval.seed, "Noise seed");
  eval_cmd->add_flag("--attention", eval.attention, "Write per-instance attention for MIL models");

  AttackArgs attack;
  auto* attack_cmd = app.add_subcommand("attack", "Write enlarged copies of one corpus split as a new corpus");
  attack_cmd->add_option("--corpus", attack.corpus_dir, "Corpus directory")->required();
  attack_cmd->add_option("--split", attack.split, "Split to enlarge (default test)");
  attack_cmd->add_option("--out", attack.out_dir, "Output corpus directory")->required();
  attack_cmd->add_option("--mode", attack.mode, "zeros | noise")->required();
  attack_cmd->add_option("--factor", attack.factor, "Enlarge to factor x the original size (default 20)");
  attack_cmd->add_option("--side", attack.side, "Enlarge to side x side bytes");
  attack_cmd->add_option("--seed", attack.seed, "Noise seed");

  AuditArgs audit;
  auto* audit_cmd = app.add_subcommand("audit", "Information-loss panel and padding sweep for one sample");
  audit_cmd->add_option("--sample", audit.sample, "Raw binary or .bytes hex dump")->required();
  audit_cmd->add_option("--out", audit.out_dir, "Output directory")->required();
  audit_cmd->add_option("--sides", audit.sides, "Comma-separated padded sides for the sweep");
  audit_cmd->add_option("--factors", audit.factors, "Comma-separated size factors (used when --sides is absent)");
  audit_cmd->add_option("--resize", audit.resize, "Resize target side");

  std::vector<std::string> runs;
  std::string report_csv;
  auto* report_cmd = app.add_subcommand("report", "Merge eval runs into a model x attack table");
  report_cmd->add_option("runs", runs, "Eval output directories")->required();
  report_cmd->add_option("--out", report_csv, "Also write the table as CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    apply_threads(common);
    if (*synth_cmd) return cmd_synth(synth, args, out);
    if (*ingest_cmd) return cmd_ingest(ingest, args, out, err);
    if (*train_cmd) return cmd_train(train, common, args, out);
    if (*eval_cmd) return cmd_eval(eval, common, args, out);
    if (*attack_cmd) return cmd_attack(attack, args, out);
    if (*audit_cmd) return cmd_audit(audit, args, out);
    if (*report_cmd) return cmd_report(runs, report_csv, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error (Io): " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace milplot::cli
