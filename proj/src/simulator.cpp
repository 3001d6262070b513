#include "pfp/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "pfp/error.hpp"

namespace pfp {

namespace {

FeatureDistribution empirical_of(const std::vector<FeatureVector>& responses) {
  return empirical_distribution(
      std::span<const FeatureVector>(responses.data(), responses.size()));
}

// Targets for one pfp iteration: the current policy distribution, replicated
// per instruction, adjusted back onto the initial distribution and sampled.
std::vector<FeatureVector> draw_targets(const SyntheticPolicy& policy,
                                        const ExperimentConfig& config,
                                        std::uint64_t seed) {
  const std::size_t n = config.instructions_per_iteration;
  std::array<PredictionMatrix, kDomainCount> predictions;
  for (int d = 0; d < kDomainCount; ++d) {
    predictions[d] = PredictionMatrix::zeros(n, kSubFeatureCount);
    const auto row = policy.domain_probs(d);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(row.begin(), row.end(), predictions[d].row(i));
  }
  const auto adjusted = adjust_all_domains(
      predictions, config.initial_distribution, config.solver);
  return sample_assignments(adjusted, seed);
}

}  // namespace

std::array<double, kSubFeatureCount> SyntheticPolicy::domain_probs(
    int d) const {
  std::array<double, kSubFeatureCount> out{};
  double m = logits[d][0];
  for (double v : logits[d]) m = std::max(m, v);
  double sum = 0.0;
  for (int j = 0; j < kSubFeatureCount; ++j) {
    out[j] = std::exp((logits[d][j] - m) / temperature);
    sum += out[j];
  }
  for (double& v : out) v /= sum;
  return out;
}

FeatureDistribution SyntheticPolicy::response_distribution() const {
  FeatureDistribution dist;
  for (int d = 0; d < kDomainCount; ++d) dist.probs[d] = domain_probs(d);
  return dist;
}

SyntheticAnnotator SyntheticAnnotator::dominant(
    const std::array<int, kDomainCount>& dominant_features) {
  SyntheticAnnotator annotator;
  for (int d = 0; d < kDomainCount; ++d)
    annotator.utilities[d][dominant_features[d]] = 1.0;
  return annotator;
}

FeatureVector generate_response(const SyntheticPolicy& policy,
                                const FeatureVector* target, Rng& rng) {
  FeatureVector fv;
  for (int d = 0; d < kDomainCount; ++d) {
    if (target && rng.uniform01() < policy.fidelity) {
      fv.entries[d] = target->entries[d];
      continue;
    }
    const auto probs = policy.domain_probs(d);
    fv.entries[d] =
        rng.categorical(std::span<const double>(probs.data(), probs.size()));
  }
  return fv;
}

int annotate_pair(const FeatureVector& a, const FeatureVector& b,
                  const SyntheticAnnotator& annotator, Rng& tie_rng) {
  double ua = 0.0, ub = 0.0;
  for (int d = 0; d < kDomainCount; ++d) {
    ua += annotator.utilities[d][a.entries[d]];
    ub += annotator.utilities[d][b.entries[d]];
  }
  if (ua > ub) return 1;
  if (ub > ua) return 2;
  return tie_rng.coin() ? 1 : 2;
}

IterationStats step_iteration(SyntheticPolicy& policy,
                              const ExperimentConfig& config,
                              const SyntheticAnnotator& annotator, Rng& rng) {
  const bool pfp = config.mode == ExperimentConfig::Mode::Pfp;
  std::vector<FeatureVector> targets;
  if (pfp) {
    policy.fidelity = config.fidelity;
    targets = draw_targets(policy, config, rng.next_u64());
  }

  std::vector<FeatureVector> responses;
  responses.reserve(config.instructions_per_iteration * 2);
  for (std::size_t i = 0; i < config.instructions_per_iteration; ++i) {
    const FeatureVector* target = pfp ? &targets[i] : nullptr;
    const FeatureVector y1 = generate_response(policy, target, rng);
    const FeatureVector y2 = generate_response(policy, target, rng);
    responses.push_back(y1);
    responses.push_back(y2);

    const int winner = annotate_pair(y1, y2, annotator, rng);
    const FeatureVector& w = winner == 1 ? y1 : y2;
    const FeatureVector& l = winner == 1 ? y2 : y1;
    for (int d = 0; d < kDomainCount; ++d) {
      policy.logits[d][w.entries[d]] += config.update_step;
      policy.logits[d][l.entries[d]] -= config.update_step;
    }
  }

  IterationStats stats;
  stats.response_distribution = empirical_of(responses);
  stats.responses = responses.size();
  return stats;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const SyntheticAnnotator& annotator) {
  if (config.iterations < 1)
    throw Error("run_experiment: iterations must be >= 1");
  if (!config.initial_distribution.valid())
    throw Error("run_experiment: invalid initial distribution");

  SyntheticPolicy policy;
  policy.temperature = config.temperature;
  for (int d = 0; d < kDomainCount; ++d)
    for (int j = 0; j < kSubFeatureCount; ++j)
      policy.logits[d][j] = config.temperature *
          std::log(std::max(config.initial_distribution.probs[d][j], 1e-12));

  ExperimentResult result;

  // Iteration-0 measurement: unconditioned draws on a dedicated stream so
  // both modes consume identical randomness before any mode-specific step.
  {
    Rng rng(Rng::derive(config.seed, 0));
    std::vector<FeatureVector> responses;
    responses.reserve(config.instructions_per_iteration * 2);
    for (std::size_t i = 0; i < config.instructions_per_iteration * 2; ++i)
      responses.push_back(generate_response(policy, nullptr, rng));
    result.trajectory.push_back(drift_report_from_distribution(
        config.initial_distribution, empirical_of(responses),
        responses.size(), config.smoothing_epsilon));
  }

  for (int t = 1; t <= config.iterations; ++t) {
    Rng rng(Rng::derive(config.seed, static_cast<std::uint64_t>(t)));
    const IterationStats stats =
        step_iteration(policy, config, annotator, rng);
    result.trajectory.push_back(drift_report_from_distribution(
        config.initial_distribution, stats.response_distribution,
        stats.responses, config.smoothing_epsilon));
  }
  result.final_policy = policy;
  return result;
}

}  // namespace pfp
