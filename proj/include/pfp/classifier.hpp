#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfp/taxonomy.hpp"

namespace pfp {

// Per-instruction feature predictor: five per-domain probability vectors,
// each a valid point of the 5-simplex.
class FeatureClassifier {
 public:
  virtual ~FeatureClassifier() = default;
  virtual FeatureDistribution predict(std::string_view instruction) const = 0;
};

struct LabeledInstruction {
  std::string instruction;
  FeatureVector features;
};

struct ClassifierHyper {
  std::size_t buckets = std::size_t{1} << 18;  // power of two
  double learning_rate = 1e-5;
  int batch_size = 32;
  int epochs = 5;
  std::uint64_t shuffle_seed = 0;
};

// Hashed unigram+bigram indices for an instruction; deterministic.
std::vector<std::uint32_t> featurize(std::string_view instruction,
                                     std::size_t buckets);

// Five independent multinomial logistic regressions over a hashed
// bag-of-words feature space, trained with mini-batch gradient descent on
// the cross-entropy loss.
class ReferenceClassifier : public FeatureClassifier {
 public:
  static ReferenceClassifier train(std::span<const LabeledInstruction> corpus,
                                   const ClassifierHyper& hyper);

  FeatureDistribution predict(std::string_view instruction) const override;

  // Mean training cross-entropy per epoch, per domain.
  const std::array<std::vector<double>, kDomainCount>& loss_curves() const {
    return loss_curves_;
  }
  const ClassifierHyper& hyper() const { return hyper_; }

  // Versioned line-delimited sparse-weight files, one per domain, plus a
  // metadata header.
  void save(const std::filesystem::path& dir) const;
  static ReferenceClassifier load(const std::filesystem::path& dir);

  bool operator==(const ReferenceClassifier& other) const;

 private:
  ReferenceClassifier() = default;

  ClassifierHyper hyper_;
  // weights_[d][c * buckets + bucket]; biases_[d][c]
  std::array<std::vector<double>, kDomainCount> weights_;
  std::array<std::array<double, kSubFeatureCount>, kDomainCount> biases_{};
  std::array<std::vector<double>, kDomainCount> loss_curves_;
};

struct EvalMetrics {
  std::array<double, kDomainCount> accuracy{};
  std::array<double, kDomainCount> macro_f1{};
};

// Argmax accuracy and macro-F1 over the five classes, per domain.
EvalMetrics evaluate(const FeatureClassifier& model,
                     std::span<const LabeledInstruction> corpus);

}  // namespace pfp
