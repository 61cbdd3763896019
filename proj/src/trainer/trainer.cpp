#include <atomic>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "ltqa/trainer.hpp"

namespace ltqa {

namespace {

constexpr float kBeta1 = 0.9f;
constexpr float kBeta2 = 0.999f;
constexpr float kAdamEps = 1e-8f;

class Updater {
 public:
  Updater(const Hyperparams& hp, const EncoderConfig& config) : hp_(hp) {
    if (hp.optimizer == Optimizer::adam_like) {
      first_ = Parameters<float>::zeros(config);
      second_ = Parameters<float>::zeros(config);
    }
  }

  void step(Parameters<float>& params, const Parameters<float>& grads) {
    auto p = params.named_tensors();
    auto g = grads.named_tensors();
    const auto lr = static_cast<float>(hp_.learning_rate);
    if (hp_.optimizer == Optimizer::sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) *p[i].second -= lr * *g[i].second;
      return;
    }
    ++t_;
    const float c1 = 1.0f - std::pow(kBeta1, static_cast<float>(t_));
    const float c2 = 1.0f - std::pow(kBeta2, static_cast<float>(t_));
    auto m = first_.named_tensors();
    auto v = second_.named_tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto& mi = *m[i].second;
      auto& vi = *v[i].second;
      const auto& gi = *g[i].second;
      mi = kBeta1 * mi + (1.0f - kBeta1) * gi;
      vi = kBeta2 * vi + (1.0f - kBeta2) * gi.cwiseProduct(gi);
      auto& pi = *p[i].second;
      for (Eigen::Index k = 0; k < pi.size(); ++k) {
        const float m_hat = mi.data()[k] / c1;
        const float v_hat = vi.data()[k] / c2;
        pi.data()[k] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
      }
    }
  }

 private:
  Hyperparams hp_;
  Parameters<float> first_;
  Parameters<float> second_;
  long t_ = 0;
};

}  // namespace

std::string_view to_string(Optimizer optimizer) { return optimizer == Optimizer::sgd ? "sgd" : "adam_like"; }

Optimizer parse_optimizer(std::string_view text) {
  if (text == "sgd") return Optimizer::sgd;
  if (text == "adam_like" || text == "adam") return Optimizer::adam_like;
  throw ValidationError("unknown optimizer '" + std::string(text) + "'");
}

void Hyperparams::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be a finite non-negative number");
  }
  if (stop_at_accuracy && (*stop_at_accuracy < 0.0 || *stop_at_accuracy > 1.0)) {
    throw ValidationError("stop_at_accuracy must lie in [0, 1]");
  }
}

nlohmann::json Hyperparams::to_json() const {
  nlohmann::json doc{{"batch_size", batch_size}, {"learning_rate", learning_rate}, {"epochs", epochs},
                     {"seed", seed},             {"head", to_string(head)},       {"optimizer", to_string(optimizer)}};
  doc["stop_at_accuracy"] = stop_at_accuracy ? nlohmann::json(*stop_at_accuracy) : nlohmann::json(nullptr);
  return doc;
}

Hyperparams Hyperparams::from_json(const nlohmann::json& doc) {
  Hyperparams hp;
  try {
    hp.batch_size = doc.at("batch_size").get<int>();
    hp.learning_rate = doc.at("learning_rate").get<double>();
    hp.epochs = doc.at("epochs").get<int>();
    hp.seed = doc.at("seed").get<std::uint64_t>();
    hp.head = parse_head(doc.at("head").get<std::string>());
    hp.optimizer = parse_optimizer(doc.at("optimizer").get<std::string>());
    if (doc.contains("stop_at_accuracy") && !doc["stop_at_accuracy"].is_null()) {
      hp.stop_at_accuracy = doc["stop_at_accuracy"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad hyperparameter record: ") + e.what());
  }
  hp.validate();
  return hp;
}

double TrainReport::best_val_accuracy() const {
  if (best_epoch < 1) return init_val_accuracy;
  return val_accuracy[static_cast<std::size_t>(best_epoch - 1)];
}

nlohmann::json TrainReport::to_json() const {
  return nlohmann::json{{"hyperparams", hyperparams.to_json()},
                        {"train_loss", train_loss},
                        {"val_accuracy", val_accuracy},
                        {"init_val_accuracy", init_val_accuracy},
                        {"best_epoch", best_epoch},
                        {"best_val_accuracy", best_val_accuracy()}};
}

double accuracy(const Parameters<float>& params, const EncoderConfig& config,
                std::span<const EncodedInstance> instances, Head head) {
  if (instances.empty()) throw ValidationError("accuracy over an empty set");
  std::size_t correct = 0;
  for (const auto& instance : instances) {
    if (predict(params, config, instance, head) == instance.gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

TrainReport train(const EncoderConfig& config, const Parameters<float>& init,
                  std::span<const EncodedInstance> train_set, std::span<const EncodedInstance> val_set,
                  const Hyperparams& hp) {
  hp.validate();
  config.validate();
  if (train_set.empty() || val_set.empty()) throw ValidationError("training needs non-empty train and val sets");
  for (auto set : {train_set, val_set}) {
    for (const auto& instance : set) {
      if (hp.head == Head::mc && instance.num_choices < 2) {
        throw ValidationError("instance '" + instance.id + "' has fewer than 2 choices");
      }
      if (hp.head == Head::sc && instance.num_choices != kScClasses) {
        throw ValidationError("instance '" + instance.id + "' does not have exactly 4 choices");
      }
    }
  }

  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.hyperparams = hp;
  Parameters<float> params = init;
  report.best_params = init;
  report.init_val_accuracy = accuracy(params, config, val_set, hp.head);

  Updater updater(hp, config);
  Rng rng(hp.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EncodedInstance> batch;
  double best_acc = -1.0;
  long step = 0;

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(hp.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
      ++step;
      auto grad = backward(params, config, std::span<const EncodedInstance>(batch), hp.head);
      if (!std::isfinite(grad.loss)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      loss_sum += static_cast<double>(grad.loss) * static_cast<double>(batch.size());
      updater.step(params, grad.grads);
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(train_set.size()));
    const double acc = accuracy(params, config, val_set, hp.head);
    report.val_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      report.best_epoch = epoch;
      report.best_params = params;
    }
    if (hp.stop_at_accuracy && acc >= *hp.stop_at_accuracy) break;
  }

  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::vector<Hyperparams> sample_trials(const SearchSpace& space, int trials, std::uint64_t base_seed,
                                       const Hyperparams& fixed) {
  if (space.batch_sizes.empty() || space.learning_rates.empty()) throw ValidationError("search space is empty");
  if (trials < 1) throw ValidationError("random search needs at least one trial");
  Rng rng(base_seed);
  const std::uint64_t cells = space.batch_sizes.size() * space.learning_rates.size();
  std::vector<Hyperparams> out;
  for (int i = 0; i < trials; ++i) {
    const auto cell = rng.below(cells);
    Hyperparams hp = fixed;
    hp.batch_size = space.batch_sizes[cell / space.learning_rates.size()];
    hp.learning_rate = space.learning_rates[cell % space.learning_rates.size()];
    hp.seed = base_seed + static_cast<std::uint64_t>(i);
    hp.validate();
    out.push_back(hp);
  }
  return out;
}

SearchResult random_search(const SearchSpace& space, int trials, std::uint64_t base_seed, const Hyperparams& fixed,
                           const TrialRunner& runner, int jobs) {
  SearchResult result;
  result.sampled = sample_trials(space, trials, base_seed, fixed);
  result.reports.resize(result.sampled.size());

  // Workers claim trial indices; reports land in their own slot, so the
  // merged order is the trial order regardless of completion order.
  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, trials));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(result.sampled.size());
  auto work = [&] {
    for (std::size_t i = next++; i < result.sampled.size(); i = next++) {
      try {
        result.reports[i] = runner(result.sampled[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t i = 1; i < result.reports.size(); ++i) {
    if (result.reports[i].best_val_accuracy() > result.reports[result.best_trial].best_val_accuracy()) {
      result.best_trial = i;
    }
  }
  result.best = result.sampled[result.best_trial];
  return result;
}

SearchResult random_search(const SearchSpace& space, int trials, std::uint64_t base_seed, const Hyperparams& fixed,
                           const EncoderConfig& config, const Parameters<float>& init,
                           std::span<const EncodedInstance> train_set, std::span<const EncodedInstance> val_set,
                           int jobs) {
  return random_search(
      space, trials, base_seed, fixed,
      [&](const Hyperparams& hp) { return train(config, init, train_set, val_set, hp); }, jobs);
}

}  // namespace ltqa
