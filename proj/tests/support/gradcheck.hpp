#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ltqa/model.hpp"

namespace ltqa::testing {

// Random token sequences over ids [3, vocab); lengths in [min_len, max_len].
inline TokenSeq random_seq(Rng& rng, int vocab, std::size_t min_len, std::size_t max_len) {
  TokenSeq seq;
  const auto len = min_len + rng.below(max_len - min_len + 1);
  seq.ids.push_back(MergeTable::kStart);
  for (std::size_t i = 1; i < len; ++i) {
    seq.ids.push_back(static_cast<TokenId>(3 + rng.below(static_cast<std::uint64_t>(vocab - 3))));
  }
  return seq;
}

inline std::vector<EncodedInstance> random_batch(Rng& rng, const EncoderConfig& config, Head head, std::size_t size) {
  std::vector<EncodedInstance> batch;
  for (std::size_t b = 0; b < size; ++b) {
    EncodedInstance inst;
    inst.id = "b" + std::to_string(b);
    inst.num_choices = 4;
    inst.gold = static_cast<int>(rng.below(4));
    const std::size_t sequences = head == Head::mc ? 4 : 1;
    for (std::size_t k = 0; k < sequences; ++k) {
      inst.sequences.push_back(random_seq(rng, config.vocab_size, 3, static_cast<std::size_t>(config.max_positions)));
    }
    batch.push_back(std::move(inst));
  }
  return batch;
}

struct GradCheckResult {
  long double max_rel_error = 0;
  std::string worst_entry;
  std::size_t entries = 0;
};

// Compares every analytic gradient entry with the central difference
// (f(x+h) - f(x-h)) / 2h. Relative error is |analytic - numeric| / (|numeric| + 1e-8).
inline GradCheckResult grad_check(const EncoderConfig& config, Parameters<long double> params,
                                  const std::vector<EncodedInstance>& batch, Head head, long double h = 1e-4L) {
  const std::span<const EncodedInstance> view(batch);
  const auto analytic = backward(params, config, view, head);
  const auto grads = analytic.grads.named_tensors();
  auto tensors = params.named_tensors();
  GradCheckResult result;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& tensor = *tensors[t].second;
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const long double saved = tensor.data()[i];
      auto at = [&](long double offset) {
        tensor.data()[i] = saved + offset;
        return batch_loss(params, config, view, head);
      };
      const long double numeric = (at(h) - at(-h)) / (2 * h);
      tensor.data()[i] = saved;
      const long double exact = grads[t].second->data()[i];
      const long double rel = std::fabs(exact - numeric) / (std::fabs(numeric) + 1e-8L);
      ++result.entries;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_entry = tensors[t].first + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace ltqa::testing
