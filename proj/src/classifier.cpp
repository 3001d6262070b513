#include "pfp/classifier.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pfp/error.hpp"
#include "pfp/rng.hpp"

namespace pfp {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> tokenize_lower(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

void softmax5(const double* scores, double* out) {
  double m = scores[0];
  for (int c = 1; c < kSubFeatureCount; ++c) m = std::max(m, scores[c]);
  double sum = 0.0;
  for (int c = 0; c < kSubFeatureCount; ++c) {
    out[c] = std::exp(scores[c] - m);
    sum += out[c];
  }
  for (int c = 0; c < kSubFeatureCount; ++c) out[c] /= sum;
}

}  // namespace

std::vector<std::uint32_t> featurize(std::string_view instruction,
                                     std::size_t buckets) {
  const std::vector<std::string> tokens = tokenize_lower(instruction);
  std::vector<std::uint32_t> indices;
  indices.reserve(tokens.size() * 2);
  const std::uint64_t mask = buckets - 1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    indices.push_back(static_cast<std::uint32_t>(fnv1a(tokens[i]) & mask));
    if (i + 1 < tokens.size()) {
      const std::string bigram = tokens[i] + '\x1f' + tokens[i + 1];
      indices.push_back(static_cast<std::uint32_t>(fnv1a(bigram) & mask));
    }
  }
  return indices;
}

ReferenceClassifier ReferenceClassifier::train(
    std::span<const LabeledInstruction> corpus, const ClassifierHyper& hyper) {
  if (corpus.empty()) throw EmptyCorpus("train: corpus is empty");
  if (hyper.buckets == 0 || (hyper.buckets & (hyper.buckets - 1)) != 0)
    throw Error("train: bucket count must be a power of two");
  if (hyper.batch_size <= 0 || hyper.epochs <= 0 || hyper.learning_rate <= 0.0)
    throw Error("train: invalid hyperparameters");

  ReferenceClassifier model;
  model.hyper_ = hyper;

  // Featurization is shared by the five per-domain heads.
  std::vector<std::vector<std::uint32_t>> features(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    features[i] = featurize(corpus[i].instruction, hyper.buckets);

  for (int d = 0; d < kDomainCount; ++d) {
    auto& weights = model.weights_[d];
    auto& biases = model.biases_[d];
    weights.assign(hyper.buckets * kSubFeatureCount, 0.0);

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
      Rng rng(Rng::derive(hyper.shuffle_seed,
                          static_cast<std::uint64_t>(d) * 1000 + epoch));
      rng.shuffle(order);

      double epoch_loss = 0.0;
      const std::size_t batch = static_cast<std::size_t>(hyper.batch_size);
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(start + batch, order.size());
        const double inv = 1.0 / static_cast<double>(end - start);

        // Forward pass and loss for the batch, then one sparse update.
        std::vector<std::array<double, kSubFeatureCount>> probs(end - start);
        for (std::size_t b = start; b < end; ++b) {
          const std::size_t i = order[b];
          double scores[kSubFeatureCount];
          for (int c = 0; c < kSubFeatureCount; ++c) scores[c] = biases[c];
          for (std::uint32_t idx : features[i])
            for (int c = 0; c < kSubFeatureCount; ++c)
              scores[c] += weights[static_cast<std::size_t>(c) * hyper.buckets + idx];
          softmax5(scores, probs[b - start].data());
          epoch_loss += -std::log(
              std::max(probs[b - start][corpus[i].features.entries[d]], 1e-300));
        }
        for (std::size_t b = start; b < end; ++b) {
          const std::size_t i = order[b];
          const int label = corpus[i].features.entries[d];
          for (int c = 0; c < kSubFeatureCount; ++c) {
            const double g =
                (probs[b - start][c] - (c == label ? 1.0 : 0.0)) * inv;
            const double step = hyper.learning_rate * g;
            biases[c] -= step;
            for (std::uint32_t idx : features[i])
              weights[static_cast<std::size_t>(c) * hyper.buckets + idx] -= step;
          }
        }
      }
      model.loss_curves_[d].push_back(epoch_loss /
                                      static_cast<double>(corpus.size()));
    }
  }
  return model;
}

FeatureDistribution ReferenceClassifier::predict(
    std::string_view instruction) const {
  const std::vector<std::uint32_t> indices =
      featurize(instruction, hyper_.buckets);
  FeatureDistribution out;
  for (int d = 0; d < kDomainCount; ++d) {
    double scores[kSubFeatureCount];
    for (int c = 0; c < kSubFeatureCount; ++c) scores[c] = biases_[d][c];
    for (std::uint32_t idx : indices)
      for (int c = 0; c < kSubFeatureCount; ++c)
        scores[c] +=
            weights_[d][static_cast<std::size_t>(c) * hyper_.buckets + idx];
    softmax5(scores, out.probs[d].data());
  }
  return out;
}

void ReferenceClassifier::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["format_version"] = 1;
  meta["buckets"] = hyper_.buckets;
  meta["learning_rate"] = hyper_.learning_rate;
  meta["batch_size"] = hyper_.batch_size;
  meta["epochs"] = hyper_.epochs;
  meta["shuffle_seed"] = hyper_.shuffle_seed;
  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  for (int d = 0; d < kDomainCount; ++d) {
    const std::filesystem::path path =
        dir / ("weights-" + std::string(domain_key(static_cast<Domain>(d))) +
               ".jsonl");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    nlohmann::ordered_json bias;
    bias["bias"] = biases_[d];
    out << bias.dump() << '\n';
    nlohmann::ordered_json losses;
    losses["loss_curve"] = loss_curves_[d];
    out << losses.dump() << '\n';
    for (int c = 0; c < kSubFeatureCount; ++c) {
      for (std::size_t idx = 0; idx < hyper_.buckets; ++idx) {
        const double w =
            weights_[d][static_cast<std::size_t>(c) * hyper_.buckets + idx];
        if (w == 0.0) continue;
        nlohmann::ordered_json rec;
        rec["c"] = c;
        rec["i"] = idx;
        rec["w"] = w;
        out << rec.dump() << '\n';
      }
    }
  }
}

ReferenceClassifier ReferenceClassifier::load(
    const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw IoError("cannot open " + (dir / "meta.json").string());
  nlohmann::json meta;
  meta_in >> meta;
  if (meta.at("format_version").get<int>() != 1)
    throw IoError("unsupported classifier format version");

  ReferenceClassifier model;
  model.hyper_.buckets = meta.at("buckets").get<std::size_t>();
  model.hyper_.learning_rate = meta.at("learning_rate").get<double>();
  model.hyper_.batch_size = meta.at("batch_size").get<int>();
  model.hyper_.epochs = meta.at("epochs").get<int>();
  model.hyper_.shuffle_seed = meta.at("shuffle_seed").get<std::uint64_t>();

  for (int d = 0; d < kDomainCount; ++d) {
    const std::filesystem::path path =
        dir / ("weights-" + std::string(domain_key(static_cast<Domain>(d))) +
               ".jsonl");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    model.weights_[d].assign(model.hyper_.buckets * kSubFeatureCount, 0.0);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        if (j.contains("bias")) {
          const auto b = j.at("bias").get<std::vector<double>>();
          std::copy(b.begin(), b.end(), model.biases_[d].begin());
        } else if (j.contains("loss_curve")) {
          model.loss_curves_[d] = j.at("loss_curve").get<std::vector<double>>();
        } else {
          const int c = j.at("c").get<int>();
          const std::size_t idx = j.at("i").get<std::size_t>();
          model.weights_[d][static_cast<std::size_t>(c) * model.hyper_.buckets +
                            idx] = j.at("w").get<double>();
        }
      } catch (const nlohmann::json::exception& e) {
        throw IoError("bad weight record at " + path.string() + ":" +
                      std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  return model;
}

bool ReferenceClassifier::operator==(const ReferenceClassifier& other) const {
  return weights_ == other.weights_ && biases_ == other.biases_ &&
         hyper_.buckets == other.hyper_.buckets;
}

EvalMetrics evaluate(const FeatureClassifier& model,
                     std::span<const LabeledInstruction> corpus) {
  if (corpus.empty()) throw EmptyCorpus("evaluate: corpus is empty");
  EvalMetrics metrics;
  std::array<std::array<std::array<std::size_t, kSubFeatureCount>,
                        kSubFeatureCount>,
             kDomainCount>
      confusion{};  // [domain][truth][predicted]

  for (const LabeledInstruction& item : corpus) {
    const FeatureDistribution pred = model.predict(item.instruction);
    for (int d = 0; d < kDomainCount; ++d) {
      const auto& p = pred.probs[d];
      const int arg = static_cast<int>(
          std::max_element(p.begin(), p.end()) - p.begin());
      ++confusion[d][item.features.entries[d]][arg];
    }
  }

  for (int d = 0; d < kDomainCount; ++d) {
    std::size_t correct = 0;
    double f1_sum = 0.0;
    for (int c = 0; c < kSubFeatureCount; ++c) {
      correct += confusion[d][c][c];
      std::size_t tp = confusion[d][c][c];
      std::size_t fp = 0, fn = 0;
      for (int o = 0; o < kSubFeatureCount; ++o) {
        if (o == c) continue;
        fp += confusion[d][o][c];
        fn += confusion[d][c][o];
      }
      const double denom = static_cast<double>(2 * tp + fp + fn);
      f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    metrics.accuracy[d] =
        static_cast<double>(correct) / static_cast<double>(corpus.size());
    metrics.macro_f1[d] = f1_sum / kSubFeatureCount;
  }
  return metrics;
}

}  // namespace pfp
