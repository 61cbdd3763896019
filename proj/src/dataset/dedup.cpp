#include <cctype>
#include <unordered_set>

#include "ltqa/dataset.hpp"

namespace ltqa {

std::string normalize_text(std::string_view text, Normalization normalization) {
  if (normalization == Normalization::exact) return std::string(text);

  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  // Terminal punctuation, possibly interleaved with spaces ("why ?!").
  while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) || out.back() == ' ')) {
    out.pop_back();
  }
  return out;
}

std::string dedup_key(const QAInstance& instance, const DedupPolicy& policy) {
  std::string key = normalize_text(instance.question, policy.normalization);
  if (policy.scope == DedupScope::question_plus_choices) {
    for (const auto& choice : instance.choices) {
      key += '\x1f';
      key += normalize_text(choice, policy.normalization);
    }
  }
  return key;
}

DedupResult dedup(std::span<const QAInstance> instances, const DedupPolicy& policy) {
  DedupResult result;
  std::unordered_set<std::string> seen;
  for (const auto& instance : instances) {
    if (seen.insert(dedup_key(instance, policy)).second) {
      result.kept.push_back(instance);
    } else {
      result.dropped.push_back(instance);
    }
  }
  return result;
}

}  // namespace ltqa
