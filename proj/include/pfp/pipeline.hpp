#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pfp/annotate.hpp"
#include "pfp/chat.hpp"
#include "pfp/classifier.hpp"
#include "pfp/relabel.hpp"
#include "pfp/reward.hpp"
#include "pfp/taxonomy.hpp"

namespace pfp {

struct TemperatureSchedule {
  enum class Mode { Scheduled, Constant };
  Mode mode = Mode::Scheduled;
  double start = 1.25;
  double step = -0.25;
  double floor = 0.1;
};

// Synthesis temperature for iteration t >= 1: max(start + step*(t-1), floor)
// in scheduled mode, 1.0 in constant mode.
double schedule_temperature(int t, const TemperatureSchedule& schedule);

struct PipelineConfig {
  int iterations = 4;                      // T
  std::size_t prompts_per_iteration = 5000;
  std::size_t seed_size = 10000;
  double beta = 0.1;
  double length_penalty_alpha = 0.0;       // 0 disables the length penalty
  double response_temperature = 0.7;
  TemperatureSchedule schedule;
  std::uint64_t rng_seed = 0;
  bool relabeling_enabled = true;
  bool synthesize_seed_prompts = true;
  double seed_prompt_temperature = 1.0;
  SolverSettings solver;
  ClassifierHyper classifier;
  RetryPolicy extraction;
  int max_in_flight = 8;
  int generation_max_tokens = 1024;
};

struct InstructionRecord {
  std::string id;
  std::string instruction;
};

struct PromptedInstruction {
  std::string id;
  std::string instruction;
  FeatureVector features;  // both prompts come from this vector
  std::string system1;
  std::string system2;
  int iteration = 0;
};

struct LabeledPreferenceRecord {
  std::string id;
  int iteration = 0;
  std::string system;  // the judging prompt, drawn from {system1, system2}
  std::string instruction;
  std::string chosen;
  std::string rejected;
  FeatureVector features;
  double judge_probability = 0.0;  // p(chosen beats rejected)
};

// Stage clients. The per-iteration accessors are the external-training
// hook: hand back an updated policy backend per iteration, or the same one
// to proceed in simulation mode.
struct PipelineBackends {
  ChatClient* annotator = nullptr;
  ChatClient* synthesizer = nullptr;
  std::function<ChatClient*(int)> generator_for;        // t = 1..T
  std::function<LogProbProvider*(int)> provider_for;    // t = 1..T
  const FeatureClassifier* classifier_override = nullptr;
  std::function<void(int, const std::filesystem::path&)> on_dataset_exported;
};

// predict -> marginal adjustment -> feature sampling -> two system prompts
// per instruction at the scheduled temperature.
std::vector<PromptedInstruction> build_prompted_set(
    std::span<const InstructionRecord> instructions,
    const FeatureClassifier& classifier,
    const FeatureDistribution& seed_distribution, ChatClient& synthesizer,
    int iteration, const PipelineConfig& config);

struct CollectStats {
  std::size_t degenerate_dropped = 0;
  std::size_t generation_failures = 0;
};

// Samples one response per system prompt, judges with the implicit reward
// under a seeded coin-choice of judging prompt, and drops degenerate
// identical pairs. Generation failures are counted, not fatal.
std::vector<LabeledPreferenceRecord> collect_and_judge(
    std::span<const PromptedInstruction> prompted, ChatClient& generator,
    LogProbProvider& provider, const PipelineConfig& config,
    std::uint64_t judge_seed, CollectStats* stats = nullptr);

// Line-delimited export with stable field order:
// {id, iteration, system, prompt, chosen, rejected, features{...},
//  judge_probability}.
void export_dataset(std::span<const LabeledPreferenceRecord> records,
                    const std::filesystem::path& path);
std::vector<LabeledPreferenceRecord> read_dataset(
    const std::filesystem::path& path);

struct RunInputs {
  std::vector<RawPreferenceRecord> seed_records;
  // X_1..X_T; ids must be pairwise disjoint across iterations.
  std::vector<std::vector<InstructionRecord>> iteration_instructions;
};

struct IterationArtifacts {
  int iteration = 0;
  std::size_t record_count = 0;
  CollectStats stats;
  std::array<double, kDomainCount> marginal_l1{};  // export vs seed dist
};

struct RunResult {
  std::filesystem::path run_dir;
  FeatureDistribution seed_distribution{};
  std::size_t seed_labeled = 0;
  std::size_t seed_unlabeled = 0;
  std::vector<IterationArtifacts> iterations;
  std::vector<std::string> stages_run;
  std::vector<std::string> stages_skipped;  // resumed from checkpoint
};

// Full Algorithm-1 style run: annotate seed, train the classifier, then per
// iteration build the prompted set, collect and judge, and export. Every
// stage checkpoints into run_dir and is skipped on re-entry when its
// artifacts already exist.
RunResult run(const PipelineConfig& config, const RunInputs& inputs,
              const PipelineBackends& backends,
              const std::filesystem::path& run_dir);

}  // namespace pfp
