#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "milplot/error.hpp"
#include "milplot/harness.hpp"

using namespace milplot;
using namespace milplot::harness;
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

ArchConfig tiny_arch() {
  ArchConfig a;
  a.mil_channels = {4, 8};
  a.mil_first_stride = 1;
  a.baseline_channels = {4, 8};
  a.baseline_first_stride = 1;
  a.attention_dim = 8;
  a.baseline_hidden = 16;
  a.patch = 32;
  return a;
}

bytesrc::Corpus tiny_corpus(std::size_t per_family, std::uint64_t seed = 1) {
  bytesrc::SynthConfig cfg;
  cfg.families = 3;
  cfg.min_samples_per_family = cfg.max_samples_per_family = per_family;
  cfg.min_size = 1500;
  cfg.max_size = 5000;
  return bytesrc::synth_corpus(cfg, seed);
}

TrainConfig tiny_config(ModelKind kind) {
  TrainConfig c;
  c.model_kind = kind;
  c.arch = tiny_arch();
  c.epochs = 2;
  c.accumulation_bags = 4;
  c.sub_batch = 3;
  c.k_top = 4;
  c.seed = 9;
  c.adam.learning_rate = 1e-3;
  return c;
}

std::vector<float> flat_params(Classifier& m) {
  std::vector<float> out;
  for (auto* p : m.params()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

const ModelKind kAllKinds[] = {ModelKind::baseline, ModelKind::mil_attention, ModelKind::mil_gated};

}  // namespace

TEST_CASE("model kind names") {
  for (auto k : kAllKinds) CHECK(parse_model_kind(to_string(k)) == k);
  CHECK(kind_of([] { parse_model_kind("resnet"); }) == ErrorKind::Usage);
}

TEST_CASE("accumulation of one bag equals per-bag stepping") {
  const auto corpus = tiny_corpus(4);  // 12 bags
  for (auto kind : kAllKinds) {
    INFO(to_string(kind));
    auto cfg = tiny_config(kind);
    cfg.accumulation_bags = 1;
    cfg.shuffle = false;
    auto trained = train(corpus, cfg);
    CHECK(trained.optimizer_steps == cfg.epochs * corpus.size());

    // Reference schedule written out by hand: one Adam step after every bag.
    auto ref = make_classifier(kind, corpus.num_classes(), cfg.arch, cfg.sub_batch, cfg.k_top);
    ref->init(cfg.seed);
    nn::AdamState<float> adam{cfg.adam, 0, {}, {}};
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      double loss_sum = 0.0;
      for (const auto& s : corpus.samples) {
        nn::zero_grads(ref->params());
        std::vector<double> p;
        ref->accumulate_gradients(ref->prepare(s.bytes), *s.family, &p);
        loss_sum -= std::log(p[*s.family]);
        nn::adam_step(ref->params(), adam);
      }
      CHECK(trained.trace[e].loss == doctest::Approx(loss_sum / static_cast<double>(corpus.size())).epsilon(1e-5));
    }
    const auto a = flat_params(*trained.model), b = flat_params(*ref);
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("one step on averaged gradients of three bags") {
  const auto corpus = tiny_corpus(1);  // 3 bags
  for (auto kind : kAllKinds) {
    INFO(to_string(kind));
    auto cfg = tiny_config(kind);
    cfg.accumulation_bags = 3;
    cfg.epochs = 1;
    cfg.shuffle = false;
    auto trained = train(corpus, cfg);
    CHECK(trained.optimizer_steps == 1);

    // Gradient of the mean loss, then Adam's first step written out:
    // m = (1-b1) g, v = (1-b2) g^2, bias-corrected step = lr * g / (|g| + eps).
    auto ref = make_classifier(kind, corpus.num_classes(), cfg.arch, cfg.sub_batch, cfg.k_top);
    ref->init(cfg.seed);
    const auto before = flat_params(*ref);
    std::vector<double> mean_grad(before.size(), 0.0);
    for (const auto& s : corpus.samples) {
      nn::zero_grads(ref->params());
      ref->accumulate_gradients(ref->prepare(s.bytes), *s.family);
      std::size_t off = 0;
      for (auto* p : ref->params())
        for (float g : p->grad.values()) mean_grad[off++] += g / 3.0;
    }
    const auto after = flat_params(*trained.model);
    double worst = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const double g = mean_grad[i];
      const double want = before[i] - cfg.adam.learning_rate * g / (std::abs(g) + cfg.adam.epsilon);
      // Gradients near epsilon make g / (|g| + eps) hinge on float rounding
      // of the sum itself; there only the step bound is checked.
      if (std::abs(g) > 100 * cfg.adam.epsilon) {
        worst = std::max(worst, std::abs(after[i] - want));
      } else {
        CHECK(std::abs(after[i] - before[i]) <= cfg.adam.learning_rate * 1.001);
      }
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("a trailing partial group still steps") {
  const auto corpus = tiny_corpus(3);  // 9 bags
  auto cfg = tiny_config(ModelKind::baseline);
  cfg.accumulation_bags = 4;
  cfg.epochs = 3;
  CHECK(train(corpus, cfg).optimizer_steps == 9);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto corpus = tiny_corpus(3);
  for (auto kind : kAllKinds) {
    const auto cfg = tiny_config(kind);
    auto a = train(corpus, cfg), b = train(corpus, cfg);
    CHECK(flat_params(*a.model) == flat_params(*b.model));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].loss == b.trace[i].loss);
    auto c_cfg = cfg;
    c_cfg.seed = 10;
    CHECK(flat_params(*train(corpus, c_cfg).model) != flat_params(*a.model));
  }
}

TEST_CASE("trace carries test rows when an eval corpus is given") {
  const auto corpus = tiny_corpus(3);
  const auto held = tiny_corpus(1, 5);
  TrainHooks hooks;
  hooks.eval_corpus = &held;
  std::size_t calls = 0;
  hooks.on_epoch = [&](const EpochMetrics&) { ++calls; };
  const auto r = train(corpus, tiny_config(ModelKind::mil_attention), hooks);
  REQUIRE(r.trace.size() == 4);
  CHECK(r.trace[0].split == "train");
  CHECK(r.trace[1].split == "test");
  CHECK(r.trace[3].epoch == 2);
  CHECK(calls == 4);
  std::ostringstream s;
  write_trace_header(s);
  CHECK(s.str() == "epoch,split,accuracy,macro_f1,loss,auroc\n");
}

TEST_CASE("training input validation") {
  const auto cfg = tiny_config(ModelKind::baseline);
  bytesrc::Corpus empty;
  empty.class_names = {"a", "b", "c"};
  CHECK(kind_of([&] { train(empty, cfg); }) == ErrorKind::EmptyCorpus);

  auto corpus = tiny_corpus(2);
  std::vector<bytesrc::ManifestEntry> manifest;
  for (const auto& s : corpus.samples) manifest.push_back({s.id, *s.family, s.bytes.size(), "train"});
  manifest[3].split = "test";
  TrainHooks hooks;
  hooks.manifest = &manifest;
  CHECK(kind_of([&] { train(corpus, cfg, hooks); }) == ErrorKind::InvalidConfig);

  corpus.samples[0].family.reset();
  CHECK(kind_of([&] { train(corpus, cfg); }) == ErrorKind::InvalidConfig);

  auto bad = cfg;
  bad.epochs = 0;
  CHECK(kind_of([&] { train(tiny_corpus(2), bad); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("evaluation is independent of the thread count") {
  const auto corpus = tiny_corpus(3);
  auto model = train(corpus, tiny_config(ModelKind::mil_attention)).model;
  const auto a = evaluate(*model, corpus, {std::nullopt, 1});
  const auto b = evaluate(*model, corpus, {std::nullopt, 4});
  CHECK(a.confusion == b.confusion);
  CHECK(a.mean_loss == b.mean_loss);
  CHECK(a.sample_ids == b.sample_ids);
  CHECK(a.samples == corpus.size());
}

TEST_CASE("latencies: end-to-end covers the network and attacks add overhead") {
  const auto corpus = tiny_corpus(3);
  for (auto kind : kAllKinds) {
    auto model = make_classifier(kind, 3, tiny_arch(), 3, 4);
    model->init(1);
    const auto clean = evaluate(*model, corpus);
    AttackConfig attack;
    attack.factor = 20;
    const auto attacked = evaluate(*model, corpus, {attack, 1});
    double clean_overhead = 0.0, attacked_overhead = 0.0;
    for (const auto* r : {&clean, &attacked}) {
      REQUIRE(r->network_ms.size() == corpus.size());
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(r->network_ms[i] > 0.0);
        CHECK(r->end_to_end_ms[i] >= r->network_ms[i]);
      }
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      clean_overhead += clean.end_to_end_ms[i] - clean.network_ms[i];
      attacked_overhead += attacked.end_to_end_ms[i] - attacked.network_ms[i];
    }
    CHECK(attacked_overhead > clean_overhead);
  }
}

TEST_CASE("attack seeds are per sample and reproducible") {
  AttackConfig a;
  a.mode = adversary::EnlargeMode::uniform_noise;
  a.seed = 3;
  CHECK(a.for_sample(100, "x").seed == a.for_sample(100, "x").seed);
  CHECK(a.for_sample(100, "x").seed != a.for_sample(100, "y").seed);
  CHECK(a.for_sample(100, "x").target_pixels == 2000);
  a.side = 50;
  CHECK(a.for_sample(100, "x").target_pixels == 2500);
}

TEST_CASE("evaluation errors") {
  auto model = make_classifier(ModelKind::baseline, 3, tiny_arch());
  model->init(1);
  bytesrc::Corpus empty;
  empty.class_names = {"a", "b", "c"};
  CHECK(kind_of([&] { evaluate(*model, empty); }) == ErrorKind::EmptyCorpus);
  auto four = tiny_corpus(1);
  four.class_names.push_back("extra");
  CHECK(kind_of([&] { evaluate(*model, four); }) == ErrorKind::IncompatibleCheckpoint);
}

TEST_CASE("checkpoint round trip") {
  const auto corpus = tiny_corpus(2);
  const auto dir = fs::temp_directory_path() / "milplot_test_ckpt";
  fs::create_directories(dir);
  for (auto kind : kAllKinds) {
    INFO(to_string(kind));
    auto cfg = tiny_config(kind);
    auto model = train(corpus, cfg).model;
    auto meta = arch_metadata(cfg.arch, cfg.sub_batch, cfg.k_top);
    meta["note"] = "a=b, \"quoted\"\nsecond line";
    const auto path = dir / "model.bin";
    save_checkpoint(snapshot(*model, meta), path);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.kind == kind);
    CHECK(loaded.classes == 3);
    CHECK(loaded.metadata.at("note") == meta["note"]);
    auto restored = restore(loaded, kind);
    CHECK(flat_params(*restored) == flat_params(*model));
    for (const auto& s : corpus.samples) {
      CHECK(restored->predict(restored->prepare(s.bytes)) == model->predict(model->prepare(s.bytes)));
    }
    const ModelKind other = kind == ModelKind::baseline ? ModelKind::mil_attention : ModelKind::baseline;
    CHECK(kind_of([&] { restore(loaded, other); }) == ErrorKind::IncompatibleCheckpoint);
  }
  fs::remove_all(dir);
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto dir = fs::temp_directory_path() / "milplot_test_ckpt_bad";
  fs::create_directories(dir);
  auto model = make_classifier(ModelKind::mil_attention, 3, tiny_arch(), 3, 4);
  model->init(2);
  const auto path = dir / "m.bin";
  save_checkpoint(snapshot(*model, arch_metadata(tiny_arch(), 3, 4)), path);
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  auto write = [&](const std::string& content) {
    std::ofstream(path, std::ios::binary | std::ios::trunc) << content;
  };

  write(bytes.substr(0, bytes.size() / 2));
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::CorruptCheckpoint);
  write(bytes + "x");
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::CorruptCheckpoint);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::CorruptCheckpoint);
  std::string bad_version = bytes;
  bad_version[8] = 2;  // version follows the 8-byte magic
  write(bad_version);
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::VersionMismatch);
  CHECK(kind_of([&] { load_checkpoint(dir / "missing.bin"); }) == ErrorKind::Io);

  // Shapes that do not fit the target model.
  write(bytes);
  auto other_arch = tiny_arch();
  other_arch.mil_channels = {4, 6};
  auto wrong = make_classifier(ModelKind::mil_attention, 3, other_arch, 3, 4);
  CHECK(kind_of([&] { load_parameters(*wrong, load_checkpoint(path)); }) == ErrorKind::IncompatibleCheckpoint);
  fs::remove_all(dir);
}
