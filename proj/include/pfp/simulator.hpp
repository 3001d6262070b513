#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pfp/diagnostics.hpp"
#include "pfp/relabel.hpp"
#include "pfp/rng.hpp"
#include "pfp/taxonomy.hpp"

namespace pfp {

// Stand-in policy: responses are feature vectors drawn per domain from
// softmax(logits / temperature); when conditioned on a target, each domain
// realizes the target sub-feature with probability `fidelity`.
struct SyntheticPolicy {
  std::array<std::array<double, kSubFeatureCount>, kDomainCount> logits{};
  double temperature = 1.0;
  double fidelity = 1.0;  // eta

  std::array<double, kSubFeatureCount> domain_probs(int d) const;
  FeatureDistribution response_distribution() const;
};

// Stand-in judge with fixed per-sub-feature utilities; ties break on a
// seeded coin.
struct SyntheticAnnotator {
  std::array<std::array<double, kSubFeatureCount>, kDomainCount> utilities{};

  // Utility 1 on one dominant sub-feature per domain, 0 elsewhere.
  static SyntheticAnnotator dominant(
      const std::array<int, kDomainCount>& dominant_features);
};

struct ExperimentConfig {
  enum class Mode { Baseline, Pfp };
  Mode mode = Mode::Baseline;
  int iterations = 4;
  std::size_t instructions_per_iteration = 2000;
  double update_step = 0.002;  // alpha added to winner logits
  FeatureDistribution initial_distribution;
  std::uint64_t seed = 0;
  double fidelity = 0.9;    // eta used in pfp mode
  double temperature = 1.0;
  SolverSettings solver;    // pfp-mode relabeling settings
  double smoothing_epsilon = 1e-6;
};

// Unconditioned draw when target is null, conditioned otherwise.
FeatureVector generate_response(const SyntheticPolicy& policy,
                                const FeatureVector* target, Rng& rng);

// 1 if a wins, 2 if b wins; equal utilities fall to a seeded coin.
int annotate_pair(const FeatureVector& a, const FeatureVector& b,
                  const SyntheticAnnotator& annotator, Rng& tie_rng);

struct IterationStats {
  FeatureDistribution response_distribution;  // empirical over the iteration
  std::size_t responses = 0;
};

// One online iteration: sample two responses per instruction (conditioned
// in pfp mode on targets drawn through the relabeling path against the
// initial distribution), judge, and nudge the winner's realized
// sub-feature logits up and the loser's down.
IterationStats step_iteration(SyntheticPolicy& policy,
                              const ExperimentConfig& config,
                              const SyntheticAnnotator& annotator, Rng& rng);

struct ExperimentResult {
  // trajectory[0] measures the initial policy before any update;
  // trajectory[t] measures iteration t.
  std::vector<DriftReport> trajectory;
  SyntheticPolicy final_policy;
};

// Seeded end-to-end run; iteration 0 consumes an identical RNG stream in
// both modes, so paired-seed runs share their starting measurement.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const SyntheticAnnotator& annotator);

}  // namespace pfp
