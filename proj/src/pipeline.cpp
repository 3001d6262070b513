#include "pfp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <optional>
#include <unordered_set>

#include "pfp/diagnostics.hpp"
#include "pfp/error.hpp"
#include "pfp/jsonl.hpp"
#include "pfp/rng.hpp"

namespace pfp {

namespace {

namespace fs = std::filesystem;

// Stream constants separating the run's derived RNG streams.
constexpr std::uint64_t kAssignStream = 1000;
constexpr std::uint64_t kSynthStream = 2000;
constexpr std::uint64_t kJudgeStream = 3000;
constexpr std::uint64_t kGenStream = 4000;
constexpr std::uint64_t kSeedPromptStream = 5000;

struct Checkpoint {
  fs::path file;
  std::vector<std::string> completed;

  static Checkpoint load(const fs::path& file) {
    Checkpoint ck;
    ck.file = file;
    if (fs::exists(file)) {
      const Json j = read_json_file(file);
      ck.completed = j.at("completed").get<std::vector<std::string>>();
    }
    return ck;
  }

  bool has(const std::string& stage) const {
    return std::find(completed.begin(), completed.end(), stage) !=
           completed.end();
  }

  void mark(const std::string& stage) {
    if (!has(stage)) completed.push_back(stage);
    Json j;
    j["completed"] = completed;
    write_json_file(file, j);
  }
};

Json dfe_record_json(const AnnotatedPreferenceRecord& rec) {
  Json j;
  j["id"] = rec.id;
  j["instruction"] = rec.instruction;
  j["chosen"] = rec.chosen;
  j["rejected"] = rec.rejected;
  j["features"] = features_to_json(rec.features);
  return j;
}

AnnotatedPreferenceRecord dfe_record_from(const Json& j) {
  return {j.at("id").get<std::string>(),
          j.at("instruction").get<std::string>(),
          j.at("chosen").get<std::string>(),
          j.at("rejected").get<std::string>(),
          features_from_json(j.at("features"))};
}

Json prompted_json(const PromptedInstruction& p) {
  Json j;
  j["id"] = p.id;
  j["iteration"] = p.iteration;
  j["instruction"] = p.instruction;
  j["features"] = features_to_json(p.features);
  j["system1"] = p.system1;
  j["system2"] = p.system2;
  return j;
}

PromptedInstruction prompted_from(const Json& j) {
  PromptedInstruction p;
  p.id = j.at("id").get<std::string>();
  p.iteration = j.at("iteration").get<int>();
  p.instruction = j.at("instruction").get<std::string>();
  p.features = features_from_json(j.at("features"));
  p.system1 = j.at("system1").get<std::string>();
  p.system2 = j.at("system2").get<std::string>();
  return p;
}

std::array<AdjustedAssignment, kDomainCount> pass_through(
    std::array<PredictionMatrix, kDomainCount> predictions) {
  std::array<AdjustedAssignment, kDomainCount> out;
  for (int d = 0; d < kDomainCount; ++d) {
    out[d].adjusted = std::move(predictions[d]);
    out[d].converged = true;
  }
  return out;
}

std::array<double, kDomainCount> export_marginal_l1(
    std::span<const LabeledPreferenceRecord> records,
    const FeatureDistribution& seed) {
  std::array<double, kDomainCount> l1{};
  if (records.empty()) return l1;
  std::vector<FeatureVector> fvs;
  fvs.reserve(records.size());
  for (const auto& rec : records) fvs.push_back(rec.features);
  const FeatureDistribution marginal = empirical_distribution(fvs);
  for (int d = 0; d < kDomainCount; ++d) {
    double acc = 0.0;
    for (int j = 0; j < kSubFeatureCount; ++j)
      acc += std::abs(marginal.probs[d][j] - seed.probs[d][j]);
    l1[d] = acc;
  }
  return l1;
}

}  // namespace

double schedule_temperature(int t, const TemperatureSchedule& schedule) {
  if (t < 1) throw Error("schedule_temperature: iteration index must be >= 1");
  if (schedule.mode == TemperatureSchedule::Mode::Constant) return 1.0;
  return std::max(schedule.start + schedule.step * (t - 1), schedule.floor);
}

std::vector<PromptedInstruction> build_prompted_set(
    std::span<const InstructionRecord> instructions,
    const FeatureClassifier& classifier,
    const FeatureDistribution& seed_distribution, ChatClient& synthesizer,
    int iteration, const PipelineConfig& config) {
  if (instructions.empty()) return {};
  const std::size_t n = instructions.size();

  std::array<PredictionMatrix, kDomainCount> predictions;
  for (int d = 0; d < kDomainCount; ++d)
    predictions[d] = PredictionMatrix::zeros(n, kSubFeatureCount);
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureDistribution q = classifier.predict(instructions[i].instruction);
    for (int d = 0; d < kDomainCount; ++d)
      std::copy(q.probs[d].begin(), q.probs[d].end(), predictions[d].row(i));
  }

  std::array<AdjustedAssignment, kDomainCount> adjusted;
  try {
    adjusted = config.relabeling_enabled
                   ? adjust_all_domains(predictions, seed_distribution,
                                        config.solver)
                   : pass_through(std::move(predictions));
  } catch (const Error& e) {
    throw Error("build_prompted_set[adjust]: " + std::string(e.what()));
  }

  const std::vector<FeatureVector> features = sample_assignments(
      adjusted, Rng::derive(config.rng_seed, kAssignStream + iteration));

  const double temperature = schedule_temperature(iteration, config.schedule);
  const std::uint64_t synth_base =
      Rng::derive(config.rng_seed, kSynthStream + iteration);

  std::vector<PromptedInstruction> out(n);
  std::vector<std::exception_ptr> failures(n);
  parallel_for_indexed(n, config.max_in_flight, [&](std::size_t i) {
    try {
      PromptedInstruction p;
      p.id = instructions[i].id;
      p.instruction = instructions[i].instruction;
      p.features = features[i];
      p.iteration = iteration;
      p.system1 = synthesize_system_prompt(features[i], synthesizer,
                                           temperature,
                                           Rng::derive(synth_base, 2 * i));
      p.system2 = synthesize_system_prompt(features[i], synthesizer,
                                           temperature,
                                           Rng::derive(synth_base, 2 * i + 1));
      out[i] = std::move(p);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i]) {
      try {
        std::rethrow_exception(failures[i]);
      } catch (const std::exception& e) {
        throw Error("build_prompted_set[synthesize] instruction " +
                    instructions[i].id + ": " + e.what());
      }
    }
  }
  return out;
}

std::vector<LabeledPreferenceRecord> collect_and_judge(
    std::span<const PromptedInstruction> prompted, ChatClient& generator,
    LogProbProvider& provider, const PipelineConfig& config,
    std::uint64_t judge_seed, CollectStats* stats) {
  const std::size_t n = prompted.size();
  std::vector<std::optional<LabeledPreferenceRecord>> slots(n);
  std::atomic<std::size_t> degenerate{0};
  std::atomic<std::size_t> failures{0};
  const RewardConfig reward_cfg{config.beta, config.length_penalty_alpha};
  const std::uint64_t gen_base = Rng::derive(judge_seed, kGenStream);

  parallel_for_indexed(n, config.max_in_flight, [&](std::size_t i) {
    const PromptedInstruction& p = prompted[i];
    std::string y1, y2;
    try {
      ChatRequest req;
      req.user = p.instruction;
      req.temperature = config.response_temperature;
      req.max_tokens = config.generation_max_tokens;
      req.system = p.system1;
      req.seed = Rng::derive(gen_base, 2 * i);
      y1 = generator.complete(req);
      req.system = p.system2;
      req.seed = Rng::derive(gen_base, 2 * i + 1);
      y2 = generator.complete(req);
    } catch (const std::exception&) {
      failures.fetch_add(1);
      return;
    }
    if (y1 == y2) {
      degenerate.fetch_add(1);
      return;
    }

    const bool use_second = (Rng::derive(judge_seed, i) & 1u) != 0;
    const std::string& s = use_second ? p.system2 : p.system1;

    LogProbQuad quad;
    try {
      quad.policy_y1 = provider.logprob(s, p.instruction, y1, PolicyRef::Policy);
      quad.ref_y1 = provider.logprob(s, p.instruction, y1, PolicyRef::Reference);
      quad.policy_y2 = provider.logprob(s, p.instruction, y2, PolicyRef::Policy);
      quad.ref_y2 = provider.logprob(s, p.instruction, y2, PolicyRef::Reference);
    } catch (const std::exception&) {
      failures.fetch_add(1);
      return;
    }

    const PreferenceLabel label =
        config.length_penalty_alpha > 0.0
            ? judge_length_penalized(quad, y1.size(), y2.size(), reward_cfg)
            : judge(quad, reward_cfg);

    LabeledPreferenceRecord rec;
    rec.id = p.id;
    rec.iteration = p.iteration;
    rec.system = s;
    rec.instruction = p.instruction;
    rec.chosen = label.winner == 1 ? y1 : y2;
    rec.rejected = label.winner == 1 ? y2 : y1;
    rec.features = p.features;
    rec.judge_probability =
        label.winner == 1 ? label.probability : 1.0 - label.probability;
    slots[i] = std::move(rec);
  });

  std::vector<LabeledPreferenceRecord> records;
  records.reserve(n);
  for (auto& slot : slots)
    if (slot) records.push_back(std::move(*slot));
  if (stats) {
    stats->degenerate_dropped = degenerate.load();
    stats->generation_failures = failures.load();
  }
  return records;
}

void export_dataset(std::span<const LabeledPreferenceRecord> records,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const LabeledPreferenceRecord& rec : records) {
    Json j;
    j["id"] = rec.id;
    j["iteration"] = rec.iteration;
    j["system"] = rec.system;
    j["prompt"] = rec.instruction;
    j["chosen"] = rec.chosen;
    j["rejected"] = rec.rejected;
    j["features"] = features_to_json(rec.features);
    j["judge_probability"] = rec.judge_probability;
    out << j.dump() << '\n';
  }
}

std::vector<LabeledPreferenceRecord> read_dataset(
    const std::filesystem::path& path) {
  std::vector<LabeledPreferenceRecord> records;
  for (const Json& j : read_jsonl(path)) {
    LabeledPreferenceRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.iteration = j.at("iteration").get<int>();
    rec.system = j.at("system").get<std::string>();
    rec.instruction = j.at("prompt").get<std::string>();
    rec.chosen = j.at("chosen").get<std::string>();
    rec.rejected = j.at("rejected").get<std::string>();
    rec.features = features_from_json(j.at("features"));
    rec.judge_probability = j.at("judge_probability").get<double>();
    records.push_back(std::move(rec));
  }
  return records;
}

RunResult run(const PipelineConfig& config, const RunInputs& inputs,
              const PipelineBackends& backends,
              const std::filesystem::path& run_dir) {
  if (config.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (static_cast<int>(inputs.iteration_instructions.size()) <
      config.iterations)
    throw ConfigError("need instruction sets for " +
                      std::to_string(config.iterations) + " iterations, got " +
                      std::to_string(inputs.iteration_instructions.size()));
  if (!backends.annotator || !backends.synthesizer)
    throw ConfigError("annotator and synthesizer backends are required");
  if (config.iterations > 0 &&
      (!backends.generator_for || !backends.provider_for))
    throw ConfigError("generator and provider backends are required");

  // Working slices.
  std::span<const RawPreferenceRecord> seed(
      inputs.seed_records.data(),
      std::min(inputs.seed_records.size(), config.seed_size));
  std::vector<std::span<const InstructionRecord>> xt;
  for (int t = 0; t < config.iterations; ++t) {
    const auto& full = inputs.iteration_instructions[t];
    xt.emplace_back(full.data(),
                    std::min(full.size(), config.prompts_per_iteration));
  }

  // Instruction sets must be pairwise disjoint across iterations.
  std::unordered_set<std::string> seen;
  for (int t = 0; t < config.iterations; ++t) {
    for (const InstructionRecord& rec : xt[t]) {
      if (!seen.insert(rec.id).second)
        throw ConfigError("instruction id '" + rec.id +
                          "' appears in more than one iteration");
    }
  }

  fs::create_directories(run_dir / "seed");
  for (int t = 1; t <= config.iterations; ++t)
    fs::create_directories(run_dir / ("iter-" + std::to_string(t)));

  Checkpoint ck = Checkpoint::load(run_dir / "checkpoint.json");
  RunResult result;
  result.run_dir = run_dir;

  auto stage = [&](const std::string& name,
                   const std::vector<fs::path>& artifacts, auto&& resume,
                   auto&& execute) {
    bool resumable = ck.has(name);
    for (const fs::path& p : artifacts)
      if (!fs::exists(p)) resumable = false;
    if (resumable) {
      resume();
      result.stages_skipped.push_back(name);
    } else {
      execute();
      ck.mark(name);
      result.stages_run.push_back(name);
    }
  };

  // --- seed-annotate ---------------------------------------------------
  std::vector<AnnotatedPreferenceRecord> dfe;
  const fs::path dfe_path = run_dir / "seed" / "d_fe.jsonl";
  const fs::path dist_path = run_dir / "seed" / "seed_distribution.json";
  const fs::path summary_path = run_dir / "seed" / "annotation_summary.json";
  stage(
      "seed-annotate", {dfe_path, dist_path, summary_path},
      [&] {
        for (const Json& j : read_jsonl(dfe_path))
          dfe.push_back(dfe_record_from(j));
        result.seed_distribution =
            distribution_from_json(read_json_file(dist_path));
        const Json summary = read_json_file(summary_path);
        result.seed_labeled = summary.at("labeled").get<std::size_t>();
        result.seed_unlabeled = summary.at("unlabeled").get<std::size_t>();
      },
      [&] {
        AnnotationResult ann = annotate_records(
            seed, *backends.annotator, config.extraction, config.max_in_flight);
        if (ann.labeled.empty())
          throw Error("seed annotation produced no labeled records");
        dfe = std::move(ann.labeled);
        std::vector<FeatureVector> fvs;
        fvs.reserve(dfe.size());
        for (const auto& rec : dfe) fvs.push_back(rec.features);
        result.seed_distribution = empirical_distribution(fvs);
        result.seed_labeled = dfe.size();
        result.seed_unlabeled = ann.unlabeled_ids.size();

        std::vector<Json> lines;
        lines.reserve(dfe.size());
        for (const auto& rec : dfe) lines.push_back(dfe_record_json(rec));
        write_jsonl(dfe_path, lines);
        write_json_file(dist_path,
                        distribution_to_json(result.seed_distribution));
        Json summary;
        summary["labeled"] = result.seed_labeled;
        summary["unlabeled"] = result.seed_unlabeled;
        summary["unlabeled_ids"] = ann.unlabeled_ids;
        write_json_file(summary_path, summary);
      });

  // --- train-classifier -------------------------------------------------
  std::optional<ReferenceClassifier> trained;
  const fs::path model_dir = run_dir / "seed" / "classifier";
  if (!backends.classifier_override) {
    stage(
        "train-classifier", {model_dir / "meta.json"},
        [&] { trained = ReferenceClassifier::load(model_dir); },
        [&] {
          std::vector<LabeledInstruction> corpus;
          corpus.reserve(dfe.size());
          for (const auto& rec : dfe)
            corpus.push_back({rec.instruction, rec.features});
          trained = ReferenceClassifier::train(corpus, config.classifier);
          trained->save(model_dir);
        });
  }
  const FeatureClassifier& classifier = backends.classifier_override
                                            ? *backends.classifier_override
                                            : *trained;

  // --- seed-dataset (trainer-ready export of D_FE) ----------------------
  if (config.synthesize_seed_prompts) {
    const fs::path seed_dataset_path = run_dir / "seed" / "dataset.jsonl";
    stage(
        "seed-dataset", {seed_dataset_path}, [&] {},
        [&] {
          const std::uint64_t base =
              Rng::derive(config.rng_seed, kSeedPromptStream);
          std::vector<LabeledPreferenceRecord> records(dfe.size());
          std::vector<std::exception_ptr> failures(dfe.size());
          parallel_for_indexed(
              dfe.size(), config.max_in_flight, [&](std::size_t i) {
                try {
                  LabeledPreferenceRecord rec;
                  rec.id = dfe[i].id;
                  rec.iteration = 0;
                  rec.system = synthesize_system_prompt(
                      dfe[i].features, *backends.synthesizer,
                      config.seed_prompt_temperature, Rng::derive(base, i));
                  rec.instruction = dfe[i].instruction;
                  rec.chosen = dfe[i].chosen;
                  rec.rejected = dfe[i].rejected;
                  rec.features = dfe[i].features;
                  rec.judge_probability = 1.0;  // human label
                  records[i] = std::move(rec);
                } catch (...) {
                  failures[i] = std::current_exception();
                }
              });
          for (std::size_t i = 0; i < failures.size(); ++i) {
            if (failures[i]) {
              try {
                std::rethrow_exception(failures[i]);
              } catch (const std::exception& e) {
                throw Error("seed-dataset record " + dfe[i].id + ": " +
                            e.what());
              }
            }
          }
          export_dataset(records, seed_dataset_path);
        });
  }

  // --- iterations --------------------------------------------------------
  for (int t = 1; t <= config.iterations; ++t) {
    const fs::path iter_dir = run_dir / ("iter-" + std::to_string(t));
    const fs::path prompted_path = iter_dir / "prompted.jsonl";
    const fs::path dataset_path = iter_dir / "dataset.jsonl";
    const fs::path stats_path = iter_dir / "collect_stats.json";
    const fs::path diag_path = iter_dir / "diagnostics.json";
    const std::string tag = "iter-" + std::to_string(t);

    std::vector<PromptedInstruction> prompted;
    stage(
        tag + "-prompted", {prompted_path},
        [&] {
          for (const Json& j : read_jsonl(prompted_path))
            prompted.push_back(prompted_from(j));
        },
        [&] {
          prompted = build_prompted_set(xt[t - 1], classifier,
                                        result.seed_distribution,
                                        *backends.synthesizer, t, config);
          std::vector<Json> lines;
          lines.reserve(prompted.size());
          for (const auto& p : prompted) lines.push_back(prompted_json(p));
          write_jsonl(prompted_path, lines);
        });

    std::vector<LabeledPreferenceRecord> records;
    CollectStats stats;
    stage(
        tag + "-dataset", {dataset_path, stats_path},
        [&] {
          records = read_dataset(dataset_path);
          const Json j = read_json_file(stats_path);
          stats.degenerate_dropped =
              j.at("degenerate_dropped").get<std::size_t>();
          stats.generation_failures =
              j.at("generation_failures").get<std::size_t>();
        },
        [&] {
          ChatClient* generator = backends.generator_for(t);
          LogProbProvider* provider = backends.provider_for(t);
          if (!generator || !provider)
            throw ConfigError("no policy backend for iteration " +
                              std::to_string(t));
          records = collect_and_judge(
              prompted, *generator, *provider, config,
              Rng::derive(config.rng_seed, kJudgeStream + t), &stats);
          export_dataset(records, dataset_path);
          Json j;
          j["degenerate_dropped"] = stats.degenerate_dropped;
          j["generation_failures"] = stats.generation_failures;
          write_json_file(stats_path, j);
          if (backends.on_dataset_exported)
            backends.on_dataset_exported(t, dataset_path);
        });

    IterationArtifacts art;
    art.iteration = t;
    art.record_count = records.size();
    art.stats = stats;
    art.marginal_l1 = export_marginal_l1(records, result.seed_distribution);
    stage(
        tag + "-diagnostics", {diag_path}, [&] {},
        [&] {
          Json j;
          j["iteration"] = t;
          j["temperature"] = schedule_temperature(t, config.schedule);
          j["records"] = records.size();
          j["degenerate_dropped"] = stats.degenerate_dropped;
          j["generation_failures"] = stats.generation_failures;
          Json l1 = Json::object();
          for (Domain d : kAllDomains)
            l1[std::string(domain_key(d))] =
                art.marginal_l1[static_cast<int>(d)];
          j["export_marginal_l1"] = std::move(l1);
          if (!records.empty()) {
            std::vector<FeatureVector> fvs;
            fvs.reserve(records.size());
            for (const auto& rec : records) fvs.push_back(rec.features);
            j["export_marginal"] =
                distribution_to_json(empirical_distribution(fvs));
          }
          write_json_file(diag_path, j);
        });
    result.iterations.push_back(std::move(art));
  }

  return result;
}

}  // namespace pfp
