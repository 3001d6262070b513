// pfp: preference-feature pipeline CLI.

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfp/annotate.hpp"
#include "pfp/chat.hpp"
#include "pfp/classifier.hpp"
#include "pfp/diagnostics.hpp"
#include "pfp/error.hpp"
#include "pfp/http_provider.hpp"
#include "pfp/jsonl.hpp"
#include "pfp/mock.hpp"
#include "pfp/pipeline.hpp"
#include "pfp/relabel.hpp"
#include "pfp/reward.hpp"
#include "pfp/simulator.hpp"
#include "pfp/taxonomy.hpp"

namespace fs = std::filesystem;
using pfp::Json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

int cmd_taxonomy(const std::string& format) {
  if (format == "table") {
    std::cout << pfp::taxonomy_table();
  } else if (format == "lines") {
    std::cout << pfp::taxonomy_lines();
  } else {
    std::cerr << "unknown format '" << format << "' (use table|lines)\n";
    return 1;
  }
  return 0;
}

int cmd_relabel(const std::string& predictions_path,
                const std::string& seed_dist_path, double lambda,
                int max_iter, double tol, const std::string& out_path,
                bool do_sample, std::uint64_t sample_seed,
                const std::string& sampled_out) {
  const pfp::PredictionFile input =
      pfp::read_prediction_records(predictions_path);
  const pfp::FeatureDistribution seed_dist =
      pfp::distribution_from_json(pfp::read_json_file(seed_dist_path));
  const pfp::SolverSettings settings{lambda, max_iter, tol};

  const auto adjusted =
      pfp::adjust_all_domains(input.matrices, seed_dist, settings);

  pfp::PredictionFile output;
  output.instruction_ids = input.instruction_ids;
  for (int d = 0; d < pfp::kDomainCount; ++d) {
    output.matrices[d] = adjusted[d].adjusted;
    std::cout << pfp::domain_key(static_cast<pfp::Domain>(d)) << ": "
              << (adjusted[d].converged ? "converged" : "not converged")
              << " in " << adjusted[d].iterations_used << " iterations, "
              << "final marginal error "
              << (adjusted[d].error_trace.empty()
                      ? 0.0
                      : adjusted[d].error_trace.back())
              << "\n";
  }
  pfp::write_prediction_records(out_path, output);

  if (do_sample) {
    const auto features = pfp::sample_assignments(adjusted, sample_seed);
    std::vector<Json> lines;
    for (std::size_t i = 0; i < features.size(); ++i) {
      Json j;
      j["instruction_id"] = input.instruction_ids[i];
      j["features"] = pfp::features_to_json(features[i]);
      lines.push_back(std::move(j));
    }
    pfp::write_jsonl(sampled_out, lines);
  }
  return 0;
}

int cmd_judge(const std::string& pairs_path, double beta, double alpha,
              const std::string& provider_kind,
              const std::string& provider_file, const std::string& base_url,
              const std::string& out_path) {
  std::unique_ptr<pfp::LogProbProvider> provider;
  if (provider_kind == "mock") {
    provider = std::make_unique<pfp::TableLogProbProvider>(
        pfp::TableLogProbProvider::from_file(provider_file));
  } else if (provider_kind == "http") {
    pfp::HttpProviderConfig cfg;
    cfg.base_url = base_url;
    provider = std::make_unique<pfp::HttpLogProbProvider>(cfg);
  } else {
    std::cerr << "unknown provider '" << provider_kind << "' (use mock|http)\n";
    return 1;
  }

  const pfp::RewardConfig cfg{beta, alpha};
  std::vector<Json> out;
  for (const Json& rec : pfp::read_jsonl(pairs_path)) {
    const std::string system = rec.at("system").get<std::string>();
    const std::string instruction = rec.at("instruction").get<std::string>();
    const std::string y1 = rec.at("response1").get<std::string>();
    const std::string y2 = rec.at("response2").get<std::string>();

    pfp::LogProbQuad quad;
    quad.policy_y1 =
        provider->logprob(system, instruction, y1, pfp::PolicyRef::Policy);
    quad.ref_y1 =
        provider->logprob(system, instruction, y1, pfp::PolicyRef::Reference);
    quad.policy_y2 =
        provider->logprob(system, instruction, y2, pfp::PolicyRef::Policy);
    quad.ref_y2 =
        provider->logprob(system, instruction, y2, pfp::PolicyRef::Reference);

    const pfp::PreferenceLabel label =
        alpha > 0.0
            ? pfp::judge_length_penalized(quad, y1.size(), y2.size(), cfg)
            : pfp::judge(quad, cfg);
    Json j;
    j["id"] = rec.at("id");
    j["winner"] = label.winner;
    j["probability"] = label.probability;
    out.push_back(std::move(j));
  }
  pfp::write_jsonl(out_path, out);
  return 0;
}

std::vector<pfp::LabeledInstruction> read_labeled_corpus(
    const std::string& path) {
  std::vector<pfp::LabeledInstruction> corpus;
  for (const Json& rec : pfp::read_jsonl(path)) {
    corpus.push_back({rec.at("instruction").get<std::string>(),
                      pfp::features_from_json(rec.at("features"))});
  }
  return corpus;
}

int cmd_train_classifier(const std::string& corpus_path,
                         const std::string& out_dir,
                         const pfp::ClassifierHyper& hyper) {
  const auto corpus = read_labeled_corpus(corpus_path);
  const auto model = pfp::ReferenceClassifier::train(corpus, hyper);
  model.save(out_dir);
  const auto metrics = pfp::evaluate(model, corpus);
  for (pfp::Domain d : pfp::kAllDomains) {
    const int i = static_cast<int>(d);
    std::cout << pfp::domain_key(d) << ": train accuracy "
              << metrics.accuracy[i] << ", macro-F1 " << metrics.macro_f1[i]
              << "\n";
  }
  return 0;
}

int cmd_classify(const std::string& model_dir,
                 const std::string& instructions_path,
                 const std::string& out_path) {
  const auto model = pfp::ReferenceClassifier::load(model_dir);
  pfp::PredictionFile out;
  std::vector<pfp::FeatureDistribution> predictions;
  for (const Json& rec : pfp::read_jsonl(instructions_path)) {
    out.instruction_ids.push_back(rec.at("id").get<std::string>());
    predictions.push_back(
        model.predict(rec.at("instruction").get<std::string>()));
  }
  for (int d = 0; d < pfp::kDomainCount; ++d) {
    out.matrices[d] = pfp::PredictionMatrix::zeros(predictions.size(),
                                                   pfp::kSubFeatureCount);
    for (std::size_t i = 0; i < predictions.size(); ++i)
      std::copy(predictions[i].probs[d].begin(),
                predictions[i].probs[d].end(), out.matrices[d].row(i));
  }
  pfp::write_prediction_records(out_path, out);
  return 0;
}

int cmd_report(const std::string& initial_path,
               const std::string& responses_path, const std::string& out_dir,
               const std::string& backend, std::uint64_t mock_seed,
               const std::string& script_path, const std::string& base_url,
               const std::string& model_name) {
  const pfp::FeatureDistribution initial =
      pfp::distribution_from_json(pfp::read_json_file(initial_path));
  std::vector<pfp::ResponseRecord> responses;
  for (const Json& rec : pfp::read_jsonl(responses_path))
    responses.push_back({rec.at("instruction").get<std::string>(),
                         rec.at("response").get<std::string>()});

  std::unique_ptr<pfp::ChatClient> client;
  if (backend == "mock") {
    client = std::make_unique<pfp::DeterministicMockClient>(mock_seed);
  } else if (backend == "script") {
    client = std::make_unique<pfp::ScriptedChatClient>(
        pfp::ScriptedChatClient::from_file(script_path));
  } else if (backend == "http") {
    pfp::HttpChatConfig cfg;
    cfg.base_url = base_url;
    cfg.model = model_name;
    client = std::make_unique<pfp::HttpChatClient>(cfg);
  } else {
    std::cerr << "unknown backend '" << backend << "' (use mock|script|http)\n";
    return 1;
  }

  const pfp::DriftReport report = pfp::drift_report(
      initial, std::span<const pfp::ResponseRecord>(responses), *client);
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "report.json");
    out << pfp::render_report(report, "json");
  }
  {
    std::ofstream out(fs::path(out_dir) / "series.tsv");
    out << pfp::render_report(report, "series");
  }
  std::cout << "summed KL " << report.summed_kl() << " nats over "
            << report.sample_count << " responses\n";
  return 0;
}

int cmd_simulate(const std::string& mode, int iterations,
                 std::size_t instructions, double alpha, double eta,
                 std::uint64_t seed, const std::string& out_dir) {
  pfp::ExperimentConfig config;
  if (mode == "baseline") {
    config.mode = pfp::ExperimentConfig::Mode::Baseline;
  } else if (mode == "pfp") {
    config.mode = pfp::ExperimentConfig::Mode::Pfp;
  } else {
    std::cerr << "unknown mode '" << mode << "' (use baseline|pfp)\n";
    return 1;
  }
  config.iterations = iterations;
  config.instructions_per_iteration = instructions;
  config.update_step = alpha;
  config.fidelity = eta;
  config.seed = seed;
  // A mildly long-tailed starting distribution in every domain.
  for (int d = 0; d < pfp::kDomainCount; ++d)
    config.initial_distribution.probs[d] = {0.40, 0.25, 0.15, 0.12, 0.08};

  const auto annotator =
      pfp::SyntheticAnnotator::dominant({0, 0, 0, 0, 0});
  const auto result = pfp::run_experiment(config, annotator);

  fs::create_directories(out_dir);
  std::vector<Json> lines;
  for (std::size_t t = 0; t < result.trajectory.size(); ++t) {
    const pfp::DriftReport& report = result.trajectory[t];
    {
      std::ofstream out(fs::path(out_dir) /
                        ("report-" + std::to_string(t) + ".json"));
      out << pfp::render_report(report, "json");
    }
    Json j;
    j["iteration"] = t;
    j["summed_kl"] = report.summed_kl();
    Json kl = Json::object();
    for (pfp::Domain d : pfp::kAllDomains)
      kl[std::string(pfp::domain_key(d))] =
          report.kl_nats[static_cast<int>(d)];
    j["kl_nats"] = std::move(kl);
    j["sample_count"] = report.sample_count;
    lines.push_back(std::move(j));
    std::cout << "iteration " << t << ": summed KL " << report.summed_kl()
              << " nats\n";
  }
  pfp::write_jsonl(fs::path(out_dir) / "trajectory.jsonl", lines);
  return 0;
}

int cmd_run(const std::string& config_path) {
  const fs::path base = fs::path(config_path).parent_path();
  const Json cfg_json = pfp::read_json_file(config_path);

  pfp::PipelineConfig config;
  config.iterations = cfg_json.value("iterations", config.iterations);
  config.prompts_per_iteration =
      cfg_json.value("prompts_per_iteration", config.prompts_per_iteration);
  config.seed_size = cfg_json.value("seed_size", config.seed_size);
  config.beta = cfg_json.value("beta", config.beta);
  config.length_penalty_alpha =
      cfg_json.value("length_penalty_alpha", config.length_penalty_alpha);
  config.response_temperature =
      cfg_json.value("response_temperature", config.response_temperature);
  config.rng_seed = cfg_json.value("rng_seed", config.rng_seed);
  config.relabeling_enabled =
      cfg_json.value("relabeling_enabled", config.relabeling_enabled);
  config.synthesize_seed_prompts =
      cfg_json.value("synthesize_seed_prompts", config.synthesize_seed_prompts);
  config.seed_prompt_temperature = cfg_json.value(
      "seed_prompt_temperature", config.seed_prompt_temperature);
  config.max_in_flight = cfg_json.value("max_in_flight", config.max_in_flight);
  config.generation_max_tokens =
      cfg_json.value("generation_max_tokens", config.generation_max_tokens);
  if (cfg_json.contains("schedule")) {
    const Json& s = cfg_json.at("schedule");
    const std::string mode = s.value("mode", "scheduled");
    config.schedule.mode = mode == "constant"
                               ? pfp::TemperatureSchedule::Mode::Constant
                               : pfp::TemperatureSchedule::Mode::Scheduled;
    config.schedule.start = s.value("start", config.schedule.start);
    config.schedule.step = s.value("step", config.schedule.step);
    config.schedule.floor = s.value("floor", config.schedule.floor);
  }
  if (cfg_json.contains("solver")) {
    const Json& s = cfg_json.at("solver");
    config.solver.lambda = s.value("lambda", config.solver.lambda);
    config.solver.max_iterations =
        s.value("max_iterations", config.solver.max_iterations);
    config.solver.tolerance = s.value("tolerance", config.solver.tolerance);
  }
  if (cfg_json.contains("classifier")) {
    const Json& c = cfg_json.at("classifier");
    config.classifier.buckets = c.value("buckets", config.classifier.buckets);
    config.classifier.learning_rate =
        c.value("learning_rate", config.classifier.learning_rate);
    config.classifier.batch_size =
        c.value("batch_size", config.classifier.batch_size);
    config.classifier.epochs = c.value("epochs", config.classifier.epochs);
    config.classifier.shuffle_seed =
        c.value("shuffle_seed", config.classifier.shuffle_seed);
  }
  if (cfg_json.contains("extraction")) {
    const Json& e = cfg_json.at("extraction");
    config.extraction.retries = e.value("retries", config.extraction.retries);
    config.extraction.max_tokens =
        e.value("max_tokens", config.extraction.max_tokens);
  }

  pfp::RunInputs inputs;
  inputs.seed_records = pfp::read_preference_records(
      resolve(base, cfg_json.at("seed_dataset").get<std::string>()));
  for (const auto& path :
       cfg_json.at("iteration_instructions").get<std::vector<std::string>>()) {
    std::vector<pfp::InstructionRecord> xs;
    for (const Json& rec : pfp::read_jsonl(resolve(base, path)))
      xs.push_back({rec.at("id").get<std::string>(),
                    rec.at("instruction").get<std::string>()});
    inputs.iteration_instructions.push_back(std::move(xs));
  }

  const Json& backend = cfg_json.at("backend");
  const std::string kind = backend.value("kind", "mock");
  std::unique_ptr<pfp::ChatClient> chat;
  std::unique_ptr<pfp::LogProbProvider> provider;
  if (kind == "mock") {
    const std::uint64_t seed = backend.value("seed", std::uint64_t{0});
    chat = std::make_unique<pfp::DeterministicMockClient>(seed);
    provider = std::make_unique<pfp::HashLogProbProvider>(seed);
  } else if (kind == "http") {
    pfp::HttpChatConfig chat_cfg;
    chat_cfg.base_url = backend.at("base_url").get<std::string>();
    chat_cfg.model = backend.value("model", chat_cfg.model);
    chat_cfg.token_env = backend.value("token_env", chat_cfg.token_env);
    chat = std::make_unique<pfp::HttpChatClient>(chat_cfg);
    pfp::HttpProviderConfig prov_cfg;
    prov_cfg.base_url = backend.value("logprob_url", chat_cfg.base_url);
    prov_cfg.token_env = chat_cfg.token_env;
    provider = std::make_unique<pfp::HttpLogProbProvider>(prov_cfg);
  } else {
    std::cerr << "unknown backend kind '" << kind << "' (use mock|http)\n";
    return 1;
  }

  pfp::PipelineBackends backends;
  backends.annotator = chat.get();
  backends.synthesizer = chat.get();
  backends.generator_for = [&](int) { return chat.get(); };
  backends.provider_for = [&](int) { return provider.get(); };

  const fs::path run_dir =
      resolve(base, cfg_json.at("run_dir").get<std::string>());
  const pfp::RunResult result =
      pfp::run(config, inputs, backends, run_dir);

  std::cout << "run dir: " << result.run_dir.string() << "\n";
  std::cout << "seed: " << result.seed_labeled << " labeled, "
            << result.seed_unlabeled << " unlabeled\n";
  for (const auto& it : result.iterations) {
    double worst = 0.0;
    for (double v : it.marginal_l1) worst = std::max(worst, v);
    std::cout << "iteration " << it.iteration << ": " << it.record_count
              << " records, " << it.stats.degenerate_dropped
              << " degenerate dropped, worst marginal L1 " << worst << "\n";
  }
  for (const auto& name : result.stages_skipped)
    std::cout << "resumed: " << name << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-feature preservation pipeline"};
  app.require_subcommand(1);

  // taxonomy
  std::string tax_format = "table";
  auto* tax = app.add_subcommand("taxonomy", "Print the feature taxonomy");
  tax->add_option("--format", tax_format, "table|lines");

  // relabel
  std::string rl_pred, rl_dist, rl_out, rl_sampled_out;
  double rl_lambda = 10.0, rl_tol = 1e-6;
  int rl_max_iter = 100;
  std::uint64_t rl_seed = 0;
  bool rl_sample = false;
  auto* rl = app.add_subcommand(
      "relabel", "Marginal-preserving adjustment of classifier predictions");
  rl->add_option("--predictions", rl_pred)->required();
  rl->add_option("--seed-dist", rl_dist)->required();
  rl->add_option("--lambda", rl_lambda);
  rl->add_option("--max-iter", rl_max_iter);
  rl->add_option("--tol", rl_tol);
  rl->add_option("--out", rl_out)->required();
  rl->add_flag("--sample", rl_sample, "also sample feature assignments");
  rl->add_option("--sample-seed", rl_seed);
  rl->add_option("--sampled-out", rl_sampled_out);

  // judge
  std::string jd_pairs, jd_provider = "mock", jd_provider_file, jd_base_url,
              jd_out;
  double jd_beta = 0.1, jd_alpha = 0.0;
  auto* jd = app.add_subcommand("judge",
                                "Label response pairs with the implicit reward");
  jd->add_option("--pairs", jd_pairs)->required();
  jd->add_option("--beta", jd_beta);
  jd->add_option("--alpha", jd_alpha, "length penalty weight");
  jd->add_option("--provider", jd_provider, "mock|http");
  jd->add_option("--provider-file", jd_provider_file);
  jd->add_option("--base-url", jd_base_url);
  jd->add_option("--out", jd_out)->required();

  // train-classifier
  std::string tc_corpus, tc_out;
  pfp::ClassifierHyper tc_hyper;
  auto* tc = app.add_subcommand("train-classifier",
                                "Train the reference feature classifier");
  tc->add_option("--corpus", tc_corpus)->required();
  tc->add_option("--out", tc_out)->required();
  tc->add_option("--buckets", tc_hyper.buckets);
  tc->add_option("--lr", tc_hyper.learning_rate);
  tc->add_option("--batch", tc_hyper.batch_size);
  tc->add_option("--epochs", tc_hyper.epochs);
  tc->add_option("--seed", tc_hyper.shuffle_seed);

  // classify
  std::string cl_model, cl_instructions, cl_out;
  auto* cl = app.add_subcommand("classify",
                                "Predict feature probabilities per instruction");
  cl->add_option("--model", cl_model)->required();
  cl->add_option("--instructions", cl_instructions)->required();
  cl->add_option("--out", cl_out)->required();

  // run
  std::string run_config;
  auto* rn = app.add_subcommand("run", "Run the online pipeline");
  rn->add_option("--config", run_config)->required();

  // report
  std::string rp_initial, rp_responses, rp_out, rp_backend = "mock",
              rp_script, rp_base_url, rp_model = "default";
  std::uint64_t rp_mock_seed = 0;
  auto* rp = app.add_subcommand("report", "Feature-drift report");
  rp->add_option("--initial", rp_initial)->required();
  rp->add_option("--responses", rp_responses)->required();
  rp->add_option("--out", rp_out)->required();
  rp->add_option("--backend", rp_backend, "mock|script|http");
  rp->add_option("--mock-seed", rp_mock_seed);
  rp->add_option("--script", rp_script);
  rp->add_option("--base-url", rp_base_url);
  rp->add_option("--model", rp_model);

  // simulate
  std::string sm_mode = "baseline", sm_out;
  int sm_iterations = 4;
  std::size_t sm_instructions = 2000;
  double sm_alpha = 0.002, sm_eta = 0.9;
  std::uint64_t sm_seed = 0;
  auto* sm = app.add_subcommand("simulate",
                                "Synthetic drift experiment (baseline vs pfp)");
  sm->add_option("--mode", sm_mode, "baseline|pfp");
  sm->add_option("--iterations", sm_iterations);
  sm->add_option("--instructions", sm_instructions);
  sm->add_option("--alpha", sm_alpha, "policy update step");
  sm->add_option("--eta", sm_eta, "conditioning fidelity (pfp mode)");
  sm->add_option("--seed", sm_seed);
  sm->add_option("--out", sm_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (tax->parsed()) return cmd_taxonomy(tax_format);
    if (rl->parsed())
      return cmd_relabel(rl_pred, rl_dist, rl_lambda, rl_max_iter, rl_tol,
                         rl_out, rl_sample, rl_seed, rl_sampled_out);
    if (jd->parsed())
      return cmd_judge(jd_pairs, jd_beta, jd_alpha, jd_provider,
                       jd_provider_file, jd_base_url, jd_out);
    if (tc->parsed()) return cmd_train_classifier(tc_corpus, tc_out, tc_hyper);
    if (cl->parsed()) return cmd_classify(cl_model, cl_instructions, cl_out);
    if (rn->parsed()) return cmd_run(run_config);
    if (rp->parsed())
      return cmd_report(rp_initial, rp_responses, rp_out, rp_backend,
                        rp_mock_seed, rp_script, rp_base_url, rp_model);
    if (sm->parsed())
      return cmd_simulate(sm_mode, sm_iterations, sm_instructions, sm_alpha,
                          sm_eta, sm_seed, sm_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
