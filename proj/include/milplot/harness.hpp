#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "milplot/adam.hpp"
#include "milplot/adversary.hpp"
#include "milplot/baseline.hpp"
#include "milplot/bytesrc.hpp"
#include "milplot/metrics.hpp"
#include "milplot/mil.hpp"

namespace milplot::harness {

enum class ModelKind { baseline, mil_attention, mil_gated };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

// Layer sizes for both model families.
struct ArchConfig {
  std::vector<std::size_t> mil_channels{16, 32, 32};
  std::size_t mil_first_stride = 2;
  std::vector<std::size_t> baseline_channels{16, 32};
  std::size_t baseline_first_stride = 2;
  std::size_t attention_dim = 128;
  std::size_t baseline_hidden = 512;
  std::size_t patch = byteplot::kPatchSide;

  // Layer sizes of the full-size architecture (32/64/64 embedder, 64/128
  // baseline, stride 1). Much slower on CPU.
  static ArchConfig full();
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t accumulation_bags = 48;
  std::size_t sub_batch = mil::kDefaultSubBatch;
  std::size_t k_top = mil::kDefaultTopK;
  std::uint64_t seed = 0;
  ModelKind model_kind = ModelKind::baseline;
  nn::AdamConfig adam{};
  ArchConfig arch{};
  bool shuffle = true;
  std::size_t threads = 1;
  bool deterministic = true;

  void validate() const;
};

// Either a resized image (baseline) or a bag of patches (MIL).
using ModelInput = std::variant<byteplot::Patch, byteplot::Bag>;

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t classes() const = 0;
  virtual void init(std::uint64_t seed) = 0;

  virtual ModelInput prepare(std::span<const std::uint8_t> bytes) const = 0;
  virtual std::vector<double> predict(const ModelInput& input) const = 0;
  virtual double accumulate_gradients(const ModelInput& input, std::size_t label,
                                      std::vector<double>* probabilities = nullptr) = 0;
  virtual nn::ParamRefs<float> params() = 0;

  // Attention details for MIL models; nullopt for the baseline.
  virtual std::optional<mil::MilOutput<float>> explain(const ModelInput& input) const;

  const ArchConfig& arch() const { return arch_; }

 protected:
  explicit Classifier(ArchConfig arch) : arch_(std::move(arch)) {}

 private:
  ArchConfig arch_;
};

std::unique_ptr<Classifier> make_classifier(ModelKind kind, std::size_t classes, const ArchConfig& arch,
                                            std::size_t sub_batch = mil::kDefaultSubBatch,
                                            std::size_t k_top = mil::kDefaultTopK);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double loss = 0.0;
  double auroc = 0.0;
};

// `epoch,split,accuracy,macro_f1,loss,auroc`
void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const EpochMetrics& row);

struct TrainResult {
  std::unique_ptr<Classifier> model;
  std::vector<EpochMetrics> trace;
  std::size_t optimizer_steps = 0;
};

struct TrainHooks {
  // Optional per-epoch evaluation set (never used for gradients).
  const bytesrc::Corpus* eval_corpus = nullptr;
  // When set, training refuses samples the manifest marks as test.
  const std::vector<bytesrc::ManifestEntry>* manifest = nullptr;
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Bags are processed one at a time; gradients are averaged over groups of
// `accumulation_bags` before each Adam step, and a trailing partial group
// still triggers a step.
TrainResult train(const bytesrc::Corpus& train_corpus, const TrainConfig& config, const TrainHooks& hooks = {});

// Same loop on an existing model (used by train()).
std::vector<EpochMetrics> fit(Classifier& model, const bytesrc::Corpus& train_corpus, const TrainConfig& config,
                              const TrainHooks& hooks, std::size_t* optimizer_steps = nullptr);

struct AttackConfig {
  adversary::EnlargeMode mode = adversary::EnlargeMode::zeros;
  double factor = adversary::kDefaultFactor;
  std::optional<std::size_t> side;
  std::uint64_t seed = 0;

  adversary::EnlargeSpec for_sample(std::size_t size, std::string_view sample_id) const;
};

struct EvalOptions {
  std::optional<AttackConfig> attack;
  // Samples are spread over this many worker threads; results do not
  // depend on the count.
  std::size_t threads = 1;
};

// Reports network latency (model forward only) and end-to-end latency
// (enlargement + byteplot/bag construction + forward) per sample.
metrics::EvalReport evaluate(const Classifier& model, const bytesrc::Corpus& corpus, const EvalOptions& options = {});

// ---------------------------------------------------------------- checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelKind kind = ModelKind::baseline;
  std::size_t classes = 0;
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;
};

Checkpoint snapshot(Classifier& model, std::map<std::string, std::string> metadata = {});
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the model described by the checkpoint. Throws
// IncompatibleCheckpoint when `expected` is given and differs.
std::unique_ptr<Classifier> restore(const Checkpoint& checkpoint, std::optional<ModelKind> expected = std::nullopt);

// Copies checkpoint tensors into an existing model (names and shapes must match).
void load_parameters(Classifier& model, const Checkpoint& checkpoint);

// Serialises the architecture into checkpoint metadata and back.
std::map<std::string, std::string> arch_metadata(const ArchConfig& arch, std::size_t sub_batch, std::size_t k_top);

}  // namespace milplot::harness
