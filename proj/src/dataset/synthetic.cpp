#include <algorithm>
#include <numeric>

#include "ltqa/dataset.hpp"

namespace ltqa {

std::vector<QAInstance> make_copy_marker_task(std::size_t count, std::uint64_t seed,
                                              const CopyMarkerOptions& options, std::string_view id_prefix) {
  const std::size_t needed = options.question_tokens + options.num_choices - 1;
  if (options.num_choices < 2) throw ValidationError("copy-marker task needs at least 2 choices");
  if (options.question_tokens < 1 || options.alphabet.size() < needed) {
    throw ValidationError("copy-marker alphabet too small for the requested shape");
  }

  Rng rng(seed);
  std::vector<QAInstance> out;
  out.reserve(count);
  std::vector<char> letters(options.alphabet.begin(), options.alphabet.end());
  for (std::size_t n = 0; n < count; ++n) {
    rng.shuffle(std::span<char>(letters));
    QAInstance inst;
    inst.id = std::string(id_prefix) + "-" + std::to_string(n);
    for (std::size_t i = 0; i < options.question_tokens; ++i) {
      if (i > 0) inst.question += ' ';
      inst.question += letters[i];
    }
    // Gold repeats one question letter; distractors come from the unused tail.
    const char marker = letters[rng.below(options.question_tokens)];
    inst.gold_index = static_cast<int>(rng.below(options.num_choices));
    std::size_t next_distractor = options.question_tokens;
    for (std::size_t c = 0; c < options.num_choices; ++c) {
      if (static_cast<int>(c) == inst.gold_index) {
        inst.choices.emplace_back(1, marker);
      } else {
        inst.choices.emplace_back(1, letters[next_distractor++]);
      }
    }
    inst.group.value = inst.id;
    inst.variant = Variant::ungrouped;
    inst.subtask = Subtask::external;
    inst.source = Source::synthetic;
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace ltqa
