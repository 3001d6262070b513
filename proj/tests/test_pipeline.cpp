#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <set>

#include "pfp/error.hpp"
#include "pfp/jsonl.hpp"
#include "pfp/mock.hpp"
#include "pfp/pipeline.hpp"
#include "pfp/templates.hpp"
#include "support/mockworld.hpp"
#include "support/schema.hpp"
#include "support/testutil.hpp"

using namespace pfp;
namespace fs = std::filesystem;

namespace {

const testutil::WorldComposition kSeedComp =
    testutil::WorldComposition::of({0.40, 0.25, 0.15, 0.12, 0.08});

// Drift concentrated in two Style bins; other domains stay on the seed mix.
testutil::WorldComposition drifted_composition() {
  testutil::WorldComposition comp = kSeedComp;
  comp.probs[0] = {0.55, 0.10, 0.15, 0.12, 0.08};
  return comp;
}

PipelineConfig small_config() {
  PipelineConfig config;
  config.iterations = 2;
  config.prompts_per_iteration = 100;
  config.seed_size = 150;
  config.classifier.buckets = std::size_t{1} << 14;
  config.classifier.learning_rate = 0.5;
  config.max_in_flight = 4;
  return config;
}

RunInputs small_inputs(const PipelineConfig& config) {
  RunInputs inputs;
  inputs.seed_records = testutil::seed_records(kSeedComp, config.seed_size, 11);
  for (int t = 1; t <= config.iterations; ++t)
    inputs.iteration_instructions.push_back(testutil::instruction_set(
        drifted_composition(), config.prompts_per_iteration, t, 100 + t));
  return inputs;
}

struct MockStack {
  DeterministicMockClient chat{2024};
  HashLogProbProvider provider{2024};

  PipelineBackends backends() {
    PipelineBackends b;
    b.annotator = &chat;
    b.synthesizer = &chat;
    b.generator_for = [this](int) { return &chat; };
    b.provider_for = [this](int) { return &provider; };
    return b;
  }
};

std::string tree_digest(const fs::path& root) {
  // Paths and bytes of every regular file, concatenated in sorted order.
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string digest;
  for (const fs::path& p : files) {
    digest += fs::relative(p, root).string();
    digest += '\0';
    digest += testutil::read_file(p);
    digest += '\0';
  }
  return digest;
}

}  // namespace

TEST_CASE("temperature schedule follows the configured decrement") {
  TemperatureSchedule scheduled;
  CHECK(schedule_temperature(1, scheduled) == 1.25);
  CHECK(schedule_temperature(2, scheduled) == 1.00);
  CHECK(schedule_temperature(3, scheduled) == 0.75);
  CHECK(schedule_temperature(4, scheduled) == 0.50);
  CHECK(schedule_temperature(10, scheduled) == 0.1);  // floor clamp

  TemperatureSchedule constant;
  constant.mode = TemperatureSchedule::Mode::Constant;
  for (int t = 1; t <= 4; ++t) CHECK(schedule_temperature(t, constant) == 1.0);

  CHECK_THROWS_AS(schedule_temperature(0, scheduled), Error);
}

TEST_CASE("build_prompted_set makes two synthesis calls per instruction") {
  MockStack stack;
  PipelineConfig config = small_config();
  const auto instructions =
      testutil::instruction_set(kSeedComp, 10, 1, 5);
  testutil::SkewedMockClassifier classifier(kSeedComp);

  FeatureDistribution seed_dist;
  seed_dist.probs = kSeedComp.probs;
  const auto prompted = build_prompted_set(instructions, classifier, seed_dist,
                                           stack.chat, 1, config);
  CHECK(prompted.size() == 10);
  CHECK(stack.chat.synthesis_calls() == 20);
  for (const auto& p : prompted) {
    CHECK(p.iteration == 1);
    CHECK(!p.system1.empty());
    CHECK(!p.system2.empty());
    CHECK(p.system1 != p.system2);  // double sampling differs per seed
    // Both prompts realize the same sampled feature vector.
    for (int d = 0; d < kDomainCount; ++d) {
      const std::string tag = DeterministicMockClient::feature_tag(
          static_cast<Domain>(d), p.features.entries[d]);
      CHECK(p.system1.find(tag) != std::string::npos);
      CHECK(p.system2.find(tag) != std::string::npos);
    }
  }

  CHECK(build_prompted_set({}, classifier, seed_dist, stack.chat, 1, config)
            .empty());
}

TEST_CASE("sampled marginals stay near the seed distribution at scale") {
  MockStack stack;
  PipelineConfig config = small_config();
  config.solver.max_iterations = 1000;
  const auto instructions =
      testutil::instruction_set(drifted_composition(), 5000, 1, 6);

  // A confident per-instruction classifier over a drifted instruction
  // stream: the relabeler must pull the sampled marginals back onto the
  // seed distribution.
  testutil::TagMockClassifier classifier(0.95);
  FeatureDistribution seed_dist;
  seed_dist.probs = kSeedComp.probs;

  const auto prompted = build_prompted_set(instructions, classifier, seed_dist,
                                           stack.chat, 1, config);
  std::vector<FeatureVector> fvs;
  for (const auto& p : prompted) fvs.push_back(p.features);
  const FeatureDistribution marginal = empirical_distribution(fvs);
  for (int d = 0; d < kDomainCount; ++d) {
    double l1 = 0.0;
    for (int j = 0; j < kSubFeatureCount; ++j)
      l1 += std::abs(marginal.probs[d][j] - seed_dist.probs[d][j]);
    CHECK(l1 < 0.03);
  }
}

TEST_CASE("synthesis calls carry the scheduled temperature") {
  // Wraps the mock and records every synthesis temperature it sees.
  class Recording : public ChatClient {
   public:
    explicit Recording(ChatClient& inner) : inner_(inner) {}
    std::string complete(const ChatRequest& request) override {
      if (request.system && *request.system == synthesis_system_message()) {
        std::lock_guard<std::mutex> lock(mu_);
        temperatures_.insert(request.temperature);
      }
      return inner_.complete(request);
    }
    std::set<double> temperatures() {
      std::lock_guard<std::mutex> lock(mu_);
      return temperatures_;
    }

   private:
    ChatClient& inner_;
    std::mutex mu_;
    std::set<double> temperatures_;
  };

  PipelineConfig config = small_config();
  testutil::SkewedMockClassifier classifier(kSeedComp);
  FeatureDistribution seed_dist;
  seed_dist.probs = kSeedComp.probs;
  const auto instructions = testutil::instruction_set(kSeedComp, 5, 1, 3);

  for (int t = 1; t <= 4; ++t) {
    DeterministicMockClient mock(1);
    Recording recorder(mock);
    build_prompted_set(instructions, classifier, seed_dist, recorder, t,
                       config);
    const auto seen = recorder.temperatures();
    REQUIRE(seen.size() == 1);
    CHECK(*seen.begin() == schedule_temperature(t, config.schedule));
  }
}

TEST_CASE("collect_and_judge drops degenerate identical pairs") {
  class SameText : public ChatClient {
   public:
    std::string complete(const ChatRequest&) override { return "identical"; }
  } generator;
  HashLogProbProvider provider(1);
  PipelineConfig config = small_config();

  std::vector<PromptedInstruction> prompted(3);
  for (int i = 0; i < 3; ++i) {
    prompted[i].id = "p" + std::to_string(i);
    prompted[i].instruction = "ask";
    prompted[i].system1 = "s1";
    prompted[i].system2 = "s2";
    prompted[i].iteration = 1;
  }
  CollectStats stats;
  const auto records =
      collect_and_judge(prompted, generator, provider, config, 9, &stats);
  CHECK(records.empty());
  CHECK(stats.degenerate_dropped == 3);
  CHECK(stats.generation_failures == 0);
}

TEST_CASE("a provider favoring the first response always picks it") {
  class TwoTexts : public ChatClient {
   public:
    std::string complete(const ChatRequest& request) override {
      // The first of the pair is requested under system1.
      return request.system && request.system->find("s1-") == 0
                 ? "alpha " + request.user
                 : "beta " + request.user;
    }
  } generator;
  class FavorAlpha : public LogProbProvider {
   public:
    double logprob(std::string_view, std::string_view,
                   std::string_view response, PolicyRef model) override {
      if (model == PolicyRef::Reference) return -10.0;
      return response.substr(0, 5) == "alpha" ? -8.0 : -12.0;
    }
  } provider;

  PipelineConfig config = small_config();
  std::vector<PromptedInstruction> prompted(20);
  for (int i = 0; i < 20; ++i) {
    prompted[i].id = "p" + std::to_string(i);
    prompted[i].instruction = "q" + std::to_string(i);
    prompted[i].system1 = "s1-" + std::to_string(i);
    prompted[i].system2 = "s2-" + std::to_string(i);
    prompted[i].iteration = 1;
  }
  const auto records =
      collect_and_judge(prompted, generator, provider, config, 5, nullptr);
  CHECK(records.size() == 20);
  for (const auto& rec : records) {
    CHECK(rec.chosen.substr(0, 5) == "alpha");
    CHECK(rec.rejected.substr(0, 4) == "beta");
    CHECK(rec.judge_probability > 0.5);
  }
}

TEST_CASE("generation failures yield partial results with a summary") {
  class Flaky : public ChatClient {
   public:
    std::string complete(const ChatRequest& request) override {
      if (request.user.find("q3") != std::string::npos)
        throw TransportError("boom");
      return "text under " + *request.system;
    }
  } generator;
  HashLogProbProvider provider(4);
  PipelineConfig config = small_config();
  std::vector<PromptedInstruction> prompted(6);
  for (int i = 0; i < 6; ++i) {
    prompted[i].id = "p" + std::to_string(i);
    prompted[i].instruction = "q" + std::to_string(i);
    prompted[i].system1 = "s1." + std::to_string(i);
    prompted[i].system2 = "s2." + std::to_string(i);
  }
  CollectStats stats;
  const auto records =
      collect_and_judge(prompted, generator, provider, config, 5, &stats);
  CHECK(records.size() == 5);
  CHECK(stats.generation_failures == 1);
}

TEST_CASE("collect_and_judge is bit-reproducible for fixed seeds") {
  testutil::TempDir dir("collect-determinism");
  PipelineConfig config = small_config();

  for (int round = 0; round < 2; ++round) {
    MockStack stack;
    testutil::SkewedMockClassifier classifier(kSeedComp);
    FeatureDistribution seed_dist;
    seed_dist.probs = kSeedComp.probs;
    const auto instructions = testutil::instruction_set(kSeedComp, 40, 1, 8);
    const auto prompted = build_prompted_set(
        instructions, classifier, seed_dist, stack.chat, 1, config);
    const auto records = collect_and_judge(prompted, stack.chat,
                                           stack.provider, config, 77, nullptr);
    export_dataset(records,
                   dir.path / ("round-" + std::to_string(round) + ".jsonl"));
  }
  CHECK(testutil::read_file(dir.path / "round-0.jsonl") ==
        testutil::read_file(dir.path / "round-1.jsonl"));
}

TEST_CASE("export round-trips and satisfies the independent validator") {
  MockStack stack;
  PipelineConfig config = small_config();
  testutil::SkewedMockClassifier classifier(kSeedComp);
  FeatureDistribution seed_dist;
  seed_dist.probs = kSeedComp.probs;
  const auto instructions = testutil::instruction_set(kSeedComp, 30, 1, 9);
  const auto prompted = build_prompted_set(instructions, classifier, seed_dist,
                                           stack.chat, 1, config);
  const auto records = collect_and_judge(prompted, stack.chat, stack.provider,
                                         config, 13, nullptr);

  testutil::TempDir dir("export-roundtrip");
  const fs::path path = dir.path / "dataset.jsonl";
  export_dataset(records, path);
  const auto loaded = read_dataset(path);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].id == records[i].id);
    CHECK(loaded[i].system == records[i].system);
    CHECK(loaded[i].chosen == records[i].chosen);
    CHECK(loaded[i].features == records[i].features);
    CHECK(loaded[i].judge_probability ==
          doctest::Approx(records[i].judge_probability).epsilon(1e-15));
  }

  const auto report = testutil::validate_export_file(path.string());
  CHECK(report.ok());
  CHECK(report.records == records.size());

  // Empty export: an empty file, still readable.
  export_dataset({}, dir.path / "empty.jsonl");
  CHECK(read_dataset(dir.path / "empty.jsonl").empty());
  CHECK(testutil::read_file(dir.path / "empty.jsonl").empty());
}

TEST_CASE("run with T=0 emits only seed artifacts") {
  MockStack stack;
  PipelineConfig config = small_config();
  config.iterations = 0;
  config.seed_size = 40;
  RunInputs inputs;
  inputs.seed_records = testutil::seed_records(kSeedComp, 40, 21);

  testutil::TempDir dir("run-t0");
  auto backends = stack.backends();
  const RunResult result = run(config, inputs, backends, dir.path / "run");
  CHECK(result.iterations.empty());
  CHECK(result.seed_labeled == 40);
  CHECK(fs::exists(dir.path / "run" / "seed" / "d_fe.jsonl"));
  CHECK(fs::exists(dir.path / "run" / "seed" / "seed_distribution.json"));
  CHECK(fs::exists(dir.path / "run" / "seed" / "dataset.jsonl"));
  CHECK(fs::exists(dir.path / "run" / "seed" / "classifier" / "meta.json"));
  CHECK(!fs::exists(dir.path / "run" / "iter-1"));

  // The seed dataset export also validates.
  const auto report = testutil::validate_export_file(
      (dir.path / "run" / "seed" / "dataset.jsonl").string());
  CHECK(report.ok());
}

TEST_CASE("run produces disjoint per-iteration datasets that validate") {
  MockStack stack;
  PipelineConfig config = small_config();
  RunInputs inputs = small_inputs(config);

  testutil::TempDir dir("run-t2");
  auto backends = stack.backends();
  std::vector<int> exported_iterations;
  backends.on_dataset_exported = [&](int t, const fs::path& path) {
    exported_iterations.push_back(t);
    CHECK(fs::exists(path));
  };
  const RunResult result = run(config, inputs, backends, dir.path / "run");
  REQUIRE(result.iterations.size() == 2);
  CHECK(exported_iterations == std::vector<int>{1, 2});

  std::set<std::string> ids;
  for (int t = 1; t <= 2; ++t) {
    const fs::path dataset =
        dir.path / "run" / ("iter-" + std::to_string(t)) / "dataset.jsonl";
    const auto report = testutil::validate_export_file(dataset.string());
    CHECK(report.ok());
    CHECK(report.records > 0);
    for (const auto& rec : read_dataset(dataset))
      CHECK(ids.insert(rec.id).second);  // globally unique across iterations
  }
}

TEST_CASE("run rejects overlapping instruction sets") {
  MockStack stack;
  PipelineConfig config = small_config();
  RunInputs inputs = small_inputs(config);
  inputs.iteration_instructions[1][0].id =
      inputs.iteration_instructions[0][0].id;
  testutil::TempDir dir("run-overlap");
  auto backends = stack.backends();
  CHECK_THROWS_AS(run(config, inputs, backends, dir.path / "run"),
                  ConfigError);
}

TEST_CASE("a finished run resumes without re-calling any backend") {
  PipelineConfig config = small_config();
  config.iterations = 1;
  config.seed_size = 60;
  config.prompts_per_iteration = 30;
  RunInputs inputs;
  inputs.seed_records = testutil::seed_records(kSeedComp, 60, 31);
  inputs.iteration_instructions.push_back(
      testutil::instruction_set(kSeedComp, 30, 1, 32));

  testutil::TempDir dir("run-resume");
  {
    MockStack stack;
    auto backends = stack.backends();
    const RunResult first = run(config, inputs, backends, dir.path / "run");
    CHECK(first.stages_skipped.empty());
  }
  MockStack fresh;
  auto backends = fresh.backends();
  const RunResult second = run(config, inputs, backends, dir.path / "run");
  CHECK(second.stages_run.empty());
  CHECK(!second.stages_skipped.empty());
  CHECK(fresh.chat.total_calls() == 0);
  REQUIRE(second.iterations.size() == 1);
  CHECK(second.iterations[0].record_count > 0);
}

TEST_CASE("a deleted later artifact re-runs only the missing stages") {
  PipelineConfig config = small_config();
  config.iterations = 1;
  config.seed_size = 50;
  config.prompts_per_iteration = 20;
  RunInputs inputs;
  inputs.seed_records = testutil::seed_records(kSeedComp, 50, 41);
  inputs.iteration_instructions.push_back(
      testutil::instruction_set(kSeedComp, 20, 1, 42));

  testutil::TempDir dir("run-partial-resume");
  {
    MockStack stack;
    auto backends = stack.backends();
    run(config, inputs, backends, dir.path / "run");
  }
  fs::remove(dir.path / "run" / "iter-1" / "dataset.jsonl");
  MockStack fresh;
  auto backends = fresh.backends();
  const RunResult result = run(config, inputs, backends, dir.path / "run");
  CHECK(result.stages_run == std::vector<std::string>{"iter-1-dataset"});
  // Only generation and judging re-ran; annotation and synthesis did not.
  CHECK(fresh.chat.extraction_calls() == 0);
  CHECK(fresh.chat.synthesis_calls() == 0);
  CHECK(fresh.chat.generation_calls() == 40);
}

TEST_CASE("two identical runs produce bit-identical run directories") {
  PipelineConfig config = small_config();
  config.iterations = 1;
  config.seed_size = 50;
  config.prompts_per_iteration = 25;
  RunInputs inputs;
  inputs.seed_records = testutil::seed_records(kSeedComp, 50, 51);
  inputs.iteration_instructions.push_back(
      testutil::instruction_set(kSeedComp, 25, 1, 52));

  testutil::TempDir dir("run-bitwise");
  {
    MockStack stack;
    auto backends = stack.backends();
    run(config, inputs, backends, dir.path / "a");
  }
  {
    MockStack stack;
    auto backends = stack.backends();
    run(config, inputs, backends, dir.path / "b");
  }
  CHECK(tree_digest(dir.path / "a") == tree_digest(dir.path / "b"));
}
