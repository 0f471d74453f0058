#include "milplot/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "milplot/error.hpp"
#include "milplot/rng.hpp"

namespace milplot::harness {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::baseline:
      return "baseline";
    case ModelKind::mil_attention:
      return "mil_attention";
    case ModelKind::mil_gated:
      return "mil_gated";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "baseline") return ModelKind::baseline;
  if (text == "mil_attention" || text == "mil") return ModelKind::mil_attention;
  if (text == "mil_gated" || text == "gated") return ModelKind::mil_gated;
  throw Error(ErrorKind::Usage,
              "unknown model kind '" + std::string(text) + "' (expected baseline|mil_attention|mil_gated)");
}

ArchConfig ArchConfig::full() {
  ArchConfig a;
  a.mil_channels = {32, 64, 64};
  a.mil_first_stride = 1;
  a.baseline_channels = {64, 128};
  a.baseline_first_stride = 1;
  return a;
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidConfig, what);
  };
  need(epochs >= 1, "epochs must be >= 1");
  need(accumulation_bags >= 1, "accumulation_bags must be >= 1");
  need(sub_batch >= 1, "sub_batch must be >= 1");
  need(threads >= 1, "threads must be >= 1");
  need(adam.learning_rate > 0.0, "learning_rate must be positive");
  need(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "beta1 must be in [0,1)");
  need(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "beta2 must be in [0,1)");
  need(adam.epsilon > 0.0, "epsilon must be positive");
  need(!arch.mil_channels.empty() && !arch.baseline_channels.empty(), "channel lists must be non-empty");
  need(arch.mil_first_stride >= 1 && arch.baseline_first_stride >= 1, "strides must be >= 1");
  need(arch.attention_dim >= 1 && arch.baseline_hidden >= 1, "layer widths must be >= 1");
  need(arch.patch >= 8, "patch must be >= 8");
}

std::optional<mil::MilOutput<float>> Classifier::explain(const ModelInput&) const { return std::nullopt; }

namespace {

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

class BaselineClassifier final : public Classifier {
 public:
  BaselineClassifier(std::size_t classes, const ArchConfig& arch)
      : Classifier(arch), model_(config_for(classes, arch)) {}

  ModelKind kind() const override { return ModelKind::baseline; }
  std::size_t classes() const override { return model_.config().classes; }
  void init(std::uint64_t seed) override { model_.init(seed); }

  ModelInput prepare(std::span<const std::uint8_t> bytes) const override {
    return baseline::baseline_preprocess(bytes, arch().patch);
  }

  std::vector<double> predict(const ModelInput& input) const override {
    return widen(model_.forward(std::get<byteplot::Patch>(input)));
  }

  double accumulate_gradients(const ModelInput& input, std::size_t label,
                              std::vector<double>* probabilities) override {
    std::vector<float> probs;
    const float loss = model_.accumulate_gradients(std::get<byteplot::Patch>(input), label, &probs);
    if (probabilities) *probabilities = widen(probs);
    return loss;
  }

  nn::ParamRefs<float> params() override { return model_.params(); }

 private:
  static baseline::BaselineConfig config_for(std::size_t classes, const ArchConfig& arch) {
    baseline::BaselineConfig c;
    c.stack.channels = arch.baseline_channels;
    c.stack.first_stride = arch.baseline_first_stride;
    c.hidden = arch.baseline_hidden;
    c.classes = classes;
    c.side = arch.patch;
    return c;
  }

  baseline::BaselineModel<float> model_;
};

class MilClassifier final : public Classifier {
 public:
  MilClassifier(bool gated, std::size_t classes, const ArchConfig& arch, std::size_t sub_batch, std::size_t k_top)
      : Classifier(arch), model_(config_for(gated, classes, arch, sub_batch, k_top)) {}

  ModelKind kind() const override {
    return model_.config().gated ? ModelKind::mil_gated : ModelKind::mil_attention;
  }
  std::size_t classes() const override { return model_.config().classes; }
  void init(std::uint64_t seed) override { model_.init(seed); }

  ModelInput prepare(std::span<const std::uint8_t> bytes) const override {
    return byteplot::bag_from_bytes(bytes, arch().patch);
  }

  std::vector<double> predict(const ModelInput& input) const override {
    return widen(model_.forward(std::get<byteplot::Bag>(input)).probabilities);
  }

  double accumulate_gradients(const ModelInput& input, std::size_t label,
                              std::vector<double>* probabilities) override {
    mil::MilOutput<float> out;
    const float loss = model_.accumulate_gradients(std::get<byteplot::Bag>(input), label, &out);
    if (probabilities) *probabilities = widen(out.probabilities);
    return loss;
  }

  nn::ParamRefs<float> params() override { return model_.params(); }

  std::optional<mil::MilOutput<float>> explain(const ModelInput& input) const override {
    return model_.forward(std::get<byteplot::Bag>(input));
  }

 private:
  static mil::MilConfig config_for(bool gated, std::size_t classes, const ArchConfig& arch, std::size_t sub_batch,
                                   std::size_t k_top) {
    mil::MilConfig c;
    c.embedder.channels = arch.mil_channels;
    c.embedder.first_stride = arch.mil_first_stride;
    c.attention_dim = arch.attention_dim;
    c.gated = gated;
    c.classes = classes;
    c.sub_batch = sub_batch;
    c.k_top = k_top;
    c.patch = arch.patch;
    return c;
  }

  mil::MilModel<float> model_;
};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

EpochMetrics to_epoch_metrics(std::size_t epoch, std::string split, const metrics::EvalReport& r) {
  return {epoch, std::move(split), r.accuracy, r.macro_f1, r.mean_loss, r.auroc_macro};
}

void check_manifest(const bytesrc::Corpus& corpus, const std::vector<bytesrc::ManifestEntry>& manifest) {
  std::unordered_map<std::string, std::string> split_of;
  for (const auto& e : manifest) split_of[e.id] = e.split;
  for (const auto& s : corpus.samples) {
    const auto it = split_of.find(s.id);
    if (it != split_of.end() && it->second == "test") {
      throw Error(ErrorKind::InvalidConfig, "training corpus contains test sample " + s.id);
    }
  }
}

}  // namespace

std::unique_ptr<Classifier> make_classifier(ModelKind kind, std::size_t classes, const ArchConfig& arch,
                                            std::size_t sub_batch, std::size_t k_top) {
  if (classes < 2) throw Error(ErrorKind::InvalidConfig, "at least two classes are required");
  if (kind == ModelKind::baseline) return std::make_unique<BaselineClassifier>(classes, arch);
  return std::make_unique<MilClassifier>(kind == ModelKind::mil_gated, classes, arch, sub_batch, k_top);
}

std::vector<EpochMetrics> fit(Classifier& model, const bytesrc::Corpus& train_corpus, const TrainConfig& config,
                              const TrainHooks& hooks, std::size_t* optimizer_steps) {
  config.validate();
  if (train_corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "training corpus is empty");
  if (train_corpus.num_classes() != model.classes()) {
    throw Error(ErrorKind::InvalidConfig, "corpus has " + std::to_string(train_corpus.num_classes()) +
                                              " classes, model has " + std::to_string(model.classes()));
  }
  train_corpus.validate();
  if (hooks.manifest) check_manifest(train_corpus, *hooks.manifest);
  for (const auto& s : train_corpus.samples) {
    if (!s.family) throw Error(ErrorKind::InvalidConfig, "unlabelled training sample " + s.id);
  }

  const auto params = model.params();
  nn::AdamState<float> adam{config.adam, 0, {}, {}};
  nn::zero_grads(params);

  std::vector<EpochMetrics> trace;
  std::vector<std::size_t> order(train_corpus.size());
  std::size_t steps = 0;

  auto step = [&](std::size_t group) {
    nn::scale_grads(params, 1.0f / static_cast<float>(group));
    nn::adam_step(params, adam);
    nn::zero_grads(params);
    ++steps;
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle) {
      Rng rng(mix_seed(config.seed, epoch));
      rng.shuffle(std::span<std::size_t>(order));
    }

    std::vector<std::size_t> truths;
    std::vector<std::vector<double>> probs;
    truths.reserve(order.size());
    probs.reserve(order.size());
    std::size_t group = 0;
    for (std::size_t idx : order) {
      const auto& sample = train_corpus.samples[idx];
      const ModelInput input = model.prepare(sample.bytes);
      std::vector<double> p;
      const double loss = model.accumulate_gradients(input, *sample.family, &p);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::NumericFailure,
                    "non-finite loss at epoch " + std::to_string(epoch) + " on sample " + sample.id);
      }
      truths.push_back(*sample.family);
      probs.push_back(std::move(p));
      if (++group == config.accumulation_bags) {
        step(group);
        group = 0;
      }
    }
    if (group > 0) step(group);

    const auto train_report = metrics::classification_report(truths, probs, model.classes());
    trace.push_back(to_epoch_metrics(epoch, "train", train_report));
    if (hooks.on_epoch) hooks.on_epoch(trace.back());
    if (hooks.eval_corpus && !hooks.eval_corpus->empty()) {
      EvalOptions options;
      options.threads = config.threads;
      trace.push_back(to_epoch_metrics(epoch, "test", evaluate(model, *hooks.eval_corpus, options)));
      if (hooks.on_epoch) hooks.on_epoch(trace.back());
    }
  }
  if (optimizer_steps) *optimizer_steps = steps;
  return trace;
}

void write_trace_header(std::ostream& out) { out << "epoch,split,accuracy,macro_f1,loss,auroc\n"; }

void write_trace_row(std::ostream& out, const EpochMetrics& row) {
  using metrics::format_number;
  out << row.epoch << ',' << row.split << ',' << format_number(row.accuracy) << ',' << format_number(row.macro_f1)
      << ',' << format_number(row.loss) << ',' << format_number(row.auroc) << '\n';
}

TrainResult train(const bytesrc::Corpus& train_corpus, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "training corpus is empty");
  TrainResult result;
  result.model =
      make_classifier(config.model_kind, train_corpus.num_classes(), config.arch, config.sub_batch, config.k_top);
  result.model->init(config.seed);
  result.trace = fit(*result.model, train_corpus, config, hooks, &result.optimizer_steps);
  return result;
}

adversary::EnlargeSpec AttackConfig::for_sample(std::size_t size, std::string_view sample_id) const {
  const std::uint64_t sample_seed = mix_seed(seed, fnv1a64(sample_id));
  if (side) return adversary::EnlargeSpec::by_side(mode, *side, sample_seed);
  return adversary::EnlargeSpec::by_factor(mode, size, factor, sample_seed);
}

metrics::EvalReport evaluate(const Classifier& model, const bytesrc::Corpus& corpus, const EvalOptions& options) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "evaluation corpus is empty");
  if (corpus.num_classes() != model.classes()) {
    throw Error(ErrorKind::IncompatibleCheckpoint, "model has " + std::to_string(model.classes()) +
                                                       " classes, corpus has " +
                                                       std::to_string(corpus.num_classes()));
  }
  for (const auto& s : corpus.samples) {
    if (!s.family) throw Error(ErrorKind::InvalidConfig, "unlabelled evaluation sample " + s.id);
  }

  const std::size_t n = corpus.size();
  std::vector<std::vector<double>> probs(n);
  std::vector<double> network_ms(n), end_to_end_ms(n);
  std::vector<std::exception_ptr> failures(n);

  auto run_one = [&](std::size_t i) {
    try {
      const auto& sample = corpus.samples[i];
      const auto start = std::chrono::steady_clock::now();
      Bytes enlarged;
      std::span<const std::uint8_t> bytes = sample.bytes;
      if (options.attack) {
        enlarged = adversary::enlarge(sample.bytes, options.attack->for_sample(sample.bytes.size(), sample.id));
        bytes = enlarged;
      }
      const ModelInput input = model.prepare(bytes);
      const auto net_start = std::chrono::steady_clock::now();
      probs[i] = model.predict(input);
      network_ms[i] = elapsed_ms(net_start);
      end_to_end_ms[i] = std::max(elapsed_ms(start), network_ms[i]);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run_one(i);
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<std::size_t> truths(n);
  for (std::size_t i = 0; i < n; ++i) truths[i] = *corpus.samples[i].family;
  auto report = metrics::classification_report(truths, probs, model.classes());
  report.sample_ids.reserve(n);
  for (const auto& s : corpus.samples) report.sample_ids.push_back(s.id);
  report.network_ms = std::move(network_ms);
  report.end_to_end_ms = std::move(end_to_end_ms);
  return report;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'I', 'L', 'P', 'L', 'O', 'T', 'C'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    std::string_view v(data_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorKind::CorruptCheckpoint, "checkpoint is truncated");
  }

  std::string data_;
  std::size_t pos_ = 0;
};

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw Error(ErrorKind::CorruptCheckpoint, "bad size list '" + text + "'");
    }
  }
  return out;
}

std::size_t meta_size(const std::map<std::string, std::string>& meta, const std::string& key, std::size_t fallback) {
  const auto it = meta.find(key);
  if (it == meta.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorKind::CorruptCheckpoint, "bad metadata value for " + key);
  }
}

}  // namespace

std::map<std::string, std::string> arch_metadata(const ArchConfig& arch, std::size_t sub_batch, std::size_t k_top) {
  return {
      {"mil_channels", join(arch.mil_channels)},
      {"mil_first_stride", std::to_string(arch.mil_first_stride)},
      {"baseline_channels", join(arch.baseline_channels)},
      {"baseline_first_stride", std::to_string(arch.baseline_first_stride)},
      {"attention_dim", std::to_string(arch.attention_dim)},
      {"baseline_hidden", std::to_string(arch.baseline_hidden)},
      {"patch", std::to_string(arch.patch)},
      {"sub_batch", std::to_string(sub_batch)},
      {"k_top", std::to_string(k_top)},
  };
}

Checkpoint snapshot(Classifier& model, std::map<std::string, std::string> metadata) {
  Checkpoint c;
  c.kind = model.kind();
  c.classes = model.classes();
  c.metadata = std::move(metadata);
  for (const auto& p : model.params()) c.tensors.emplace_back(p->name, p->value);
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(to_string(checkpoint.kind));
  w.u32(static_cast<std::uint32_t>(checkpoint.classes));
  w.u32(static_cast<std::uint32_t>(checkpoint.metadata.size()));
  for (const auto& [k, v] : checkpoint.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& [name, t] : checkpoint.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (float v : t.values()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));

  if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw Error(ErrorKind::CorruptCheckpoint, "not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  try {
    c.kind = parse_model_kind(r.str());
  } catch (const Error&) {
    throw Error(ErrorKind::CorruptCheckpoint, "unknown model kind in checkpoint");
  }
  c.classes = r.u32();
  const std::uint32_t meta = r.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str();
    c.metadata[std::move(k)] = r.str();
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw Error(ErrorKind::CorruptCheckpoint, "implausible tensor rank in " + name);
    nn::Shape shape(rank);
    std::size_t size = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d > (1ULL << 32)) throw Error(ErrorKind::CorruptCheckpoint, "implausible dimension in " + name);
      size *= d;
    }
    nn::Tensor<float> t(shape);
    auto bytes = r.raw(size * 4);
    for (std::size_t j = 0; j < size; ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * j + b])) << (8 * b);
      t[j] = std::bit_cast<float>(bits);
    }
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw Error(ErrorKind::CorruptCheckpoint, "trailing bytes after checkpoint tensors");
  return c;
}

void load_parameters(Classifier& model, const Checkpoint& checkpoint) {
  const auto params = model.params();
  if (params.size() != checkpoint.tensors.size()) {
    throw Error(ErrorKind::IncompatibleCheckpoint, "checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                                                       " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = checkpoint.tensors[i];
    if (name != params[i]->name || t.shape() != params[i]->value.shape()) {
      throw Error(ErrorKind::IncompatibleCheckpoint, "tensor '" + name + "' " + nn::shape_string(t.shape()) +
                                                         " does not match '" + params[i]->name + "' " +
                                                         nn::shape_string(params[i]->value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = checkpoint.tensors[i].second;
}

std::unique_ptr<Classifier> restore(const Checkpoint& checkpoint, std::optional<ModelKind> expected) {
  if (expected && *expected != checkpoint.kind) {
    throw Error(ErrorKind::IncompatibleCheckpoint, "checkpoint holds a " + std::string(to_string(checkpoint.kind)) +
                                                       " model, expected " + std::string(to_string(*expected)));
  }
  const auto& m = checkpoint.metadata;
  ArchConfig arch;
  if (auto it = m.find("mil_channels"); it != m.end()) arch.mil_channels = split_sizes(it->second);
  if (auto it = m.find("baseline_channels"); it != m.end()) arch.baseline_channels = split_sizes(it->second);
  arch.mil_first_stride = meta_size(m, "mil_first_stride", arch.mil_first_stride);
  arch.baseline_first_stride = meta_size(m, "baseline_first_stride", arch.baseline_first_stride);
  arch.attention_dim = meta_size(m, "attention_dim", arch.attention_dim);
  arch.baseline_hidden = meta_size(m, "baseline_hidden", arch.baseline_hidden);
  arch.patch = meta_size(m, "patch", arch.patch);
  const std::size_t sub_batch = meta_size(m, "sub_batch", mil::kDefaultSubBatch);
  const std::size_t k_top = meta_size(m, "k_top", mil::kDefaultTopK);
  if (arch.mil_channels.empty() || arch.baseline_channels.empty() || sub_batch == 0) {
    throw Error(ErrorKind::CorruptCheckpoint, "invalid architecture metadata");
  }

  auto model = make_classifier(checkpoint.kind, checkpoint.classes, arch, sub_batch, k_top);
  load_parameters(*model, checkpoint);
  return model;
}

}  // namespace milplot::harness
