#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "ltqa/model.hpp"

namespace ltqa {

enum class Optimizer { sgd, adam_like };

std::string_view to_string(Optimizer optimizer);
Optimizer parse_optimizer(std::string_view text);

struct Hyperparams {
  int batch_size = 16;
  double learning_rate = 1e-3;
  int epochs = 10;
  std::uint64_t seed = 0;
  Head head = Head::mc;
  Optimizer optimizer = Optimizer::adam_like;
  // Stop after the first epoch whose validation accuracy reaches this value.
  std::optional<double> stop_at_accuracy;

  // learning_rate == 0 is accepted as the no-update limit.
  void validate() const;
  nlohmann::json to_json() const;
  static Hyperparams from_json(const nlohmann::json& doc);
  bool operator==(const Hyperparams&) const = default;
};

struct TrainReport {
  Hyperparams hyperparams;
  std::vector<double> train_loss;    // mean per-instance loss of each epoch
  std::vector<double> val_accuracy;  // after each epoch
  double init_val_accuracy = 0.0;
  int best_epoch = 0;                // 1-based; earliest maximum
  Parameters<float> best_params;
  double wall_seconds = 0.0;

  double best_val_accuracy() const;
  // Everything except parameters and timing.
  nlohmann::json to_json() const;
};

// Fraction of instances whose argmax prediction equals gold.
double accuracy(const Parameters<float>& params, const EncoderConfig& config,
                std::span<const EncodedInstance> instances, Head head);

// Mini-batch training with a seeded shuffle per epoch. Throws Error naming
// the step when the loss becomes non-finite.
TrainReport train(const EncoderConfig& config, const Parameters<float>& init,
                  std::span<const EncodedInstance> train_set, std::span<const EncodedInstance> val_set,
                  const Hyperparams& hp);

struct SearchSpace {
  std::vector<int> batch_sizes{4, 16, 32};
  std::vector<double> learning_rates{5e-5, 1e-4, 2e-4};
};

struct SearchResult {
  Hyperparams best;
  std::size_t best_trial = 0;
  std::vector<Hyperparams> sampled;
  std::vector<TrainReport> reports;
};

using TrialRunner = std::function<TrainReport(const Hyperparams&)>;

// Samples `trials` (batch size, learning rate) pairs uniformly with
// replacement from the cross product; trial i uses seed base_seed + i.
std::vector<Hyperparams> sample_trials(const SearchSpace& space, int trials, std::uint64_t base_seed,
                                       const Hyperparams& fixed);

// Runs every sampled trial through `runner` (up to `jobs` at a time) and picks
// the highest best-epoch validation accuracy, earliest trial on ties.
SearchResult random_search(const SearchSpace& space, int trials, std::uint64_t base_seed, const Hyperparams& fixed,
                           const TrialRunner& runner, int jobs = 1);

SearchResult random_search(const SearchSpace& space, int trials, std::uint64_t base_seed, const Hyperparams& fixed,
                           const EncoderConfig& config, const Parameters<float>& init,
                           std::span<const EncodedInstance> train_set, std::span<const EncodedInstance> val_set,
                           int jobs = 1);

}  // namespace ltqa
