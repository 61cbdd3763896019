#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ltqa/dataset.hpp"
#include "ltqa/evaluator.hpp"

namespace ltqa::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("ltqa-test-" + tag + "-" + std::to_string(std::rand()) + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Provided-format records: `groups` originals with _SR and _CR siblings,
// plus `singles` originals without reconstructions.
inline nlohmann::json brainteaser_records(std::size_t groups, std::size_t singles, const std::string& prefix) {
  nlohmann::json doc = nlohmann::json::array();
  auto add = [&](const std::string& id, std::size_t n, int gold) {
    doc.push_back({{"id", id},
                   {"question", "puzzle " + id + " number " + std::to_string(n)},
                   {"choice_list", {"first " + id, "second " + id, "third " + id, "None of above."}},
                   {"label", gold}});
  };
  for (std::size_t g = 0; g < groups; ++g) {
    const std::string id = prefix + "-" + std::to_string(g);
    add(id, g, static_cast<int>(g % 4));
    add(id + "_SR", g, static_cast<int>((g + 1) % 4));
    add(id + "_CR", g, static_cast<int>((g + 2) % 4));
  }
  for (std::size_t s = 0; s < singles; ++s) add(prefix + "-single-" + std::to_string(s), s, 0);
  return doc;
}

inline nlohmann::json humor_records(std::size_t count) {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const std::string n = std::to_string(i);
    doc.push_back({{"joke", "Why did joke " + n + " cross the road?"},
                   {"options", {"A. Reason one " + n, "B. Reason two " + n, "C. Reason three " + n, "D. Reason four " + n}},
                   {"answer", std::string(1, static_cast<char>('A' + i % 4))}});
  }
  return doc;
}

inline RawRiddle random_riddle(Rng& rng, std::size_t index) {
  RawRiddle raw;
  raw.id = "rr-" + std::to_string(index);
  raw.question = "riddle " + std::to_string(index);
  for (char label = 'A'; label <= 'E'; ++label) {
    raw.labeled_choices.push_back({label, "text " + std::to_string(rng.below(1000000)) + label});
  }
  raw.answer_key = static_cast<char>('A' + rng.below(5));
  return raw;
}

inline QAInstance grouped_instance(const std::string& group, Variant variant, Subtask subtask, int gold,
                                   std::size_t num_choices = 4) {
  QAInstance inst;
  inst.group.value = group;
  inst.variant = variant;
  inst.id = group + (variant == Variant::semantic ? "_SR" : variant == Variant::context ? "_CR" : "");
  inst.question = "question " + inst.id;
  for (std::size_t c = 0; c < num_choices; ++c) inst.choices.push_back("choice " + std::to_string(c));
  inst.gold_index = gold;
  inst.subtask = subtask;
  inst.source = Source::provided;
  return inst;
}

// Random valid UTF-8: code points drawn from ASCII, Latin, CJK and astral
// ranges, surrogates excluded.
inline std::string random_utf8(Rng& rng) {
  std::string out;
  const auto len = rng.below(24);
  for (std::uint64_t i = 0; i < len; ++i) {
    std::uint32_t cp = 0;
    switch (rng.below(4)) {
      case 0: cp = static_cast<std::uint32_t>(rng.below(0x80)); break;
      case 1: cp = 0x80 + static_cast<std::uint32_t>(rng.below(0x800 - 0x80)); break;
      case 2: cp = 0x800 + static_cast<std::uint32_t>(rng.below(0xD800 - 0x800)); break;
      default: cp = 0x10000 + static_cast<std::uint32_t>(rng.below(0x110000 - 0x10000)); break;
    }
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return out;
}

// Random gold set: groups of 1-5 members (an original plus reconstructions,
// a variant may repeat), optional ungrouped extras, and predictions correct
// with probability `p_correct`. With `complete` every group holds exactly one
// member of each variant.
struct MetricFixture {
  std::vector<QAInstance> gold;
  std::vector<Prediction> preds;
};

inline MetricFixture random_metric_fixture(Rng& rng, bool complete, double p_correct = 0.7) {
  MetricFixture f;
  const std::size_t groups = 1 + rng.below(8);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::string key = "G" + std::to_string(g);
    std::vector<Variant> variants{Variant::original};
    if (complete) {
      variants.push_back(Variant::semantic);
      variants.push_back(Variant::context);
    }
    const std::size_t size = complete ? 3 : 1 + rng.below(5);
    while (variants.size() < size) variants.push_back(rng.below(2) ? Variant::semantic : Variant::context);
    for (std::size_t m = 0; m < variants.size(); ++m) {
      const auto k = 2 + rng.below(4);
      auto inst = grouped_instance(key, variants[m], Subtask::sentence, static_cast<int>(rng.below(k)), k);
      inst.id += "#" + std::to_string(m);
      f.gold.push_back(std::move(inst));
    }
  }
  if (!complete) {
    const std::size_t extras = rng.below(3);
    for (std::size_t e = 0; e < extras; ++e) {
      auto inst = grouped_instance("U" + std::to_string(e), Variant::ungrouped, Subtask::sentence, 0);
      inst.id = "U" + std::to_string(e);
      f.gold.push_back(inst);
    }
  }
  for (const auto& inst : f.gold) {
    const auto k = static_cast<int>(inst.choices.size());
    int chosen = inst.gold_index;
    if (rng.uniform() >= p_correct) chosen = static_cast<int>((inst.gold_index + 1 + rng.below(static_cast<std::uint64_t>(k - 1))) % k);
    f.preds.push_back({inst.id, chosen});
  }
  rng.shuffle(std::span<Prediction>(f.preds));
  return f;
}

// Brute-force group enumerator: walk the gold list once per distinct group key.
inline Ratio brute_group_accuracy(const std::vector<Prediction>& preds, const std::vector<QAInstance>& gold,
                                  const std::set<Variant>& members) {
  std::vector<std::string> keys;
  for (const auto& inst : gold) {
    if (inst.variant == Variant::ungrouped) continue;
    bool seen = false;
    for (const auto& k : keys) seen = seen || k == inst.group.value;
    if (!seen) keys.push_back(inst.group.value);
  }
  std::int64_t scoring = 0;
  for (const auto& key : keys) {
    bool ok = true;
    for (const auto& inst : gold) {
      if (inst.group.value != key || inst.variant == Variant::ungrouped || !members.contains(inst.variant)) continue;
      for (const auto& p : preds) {
        if (p.instance_id == inst.id) ok = ok && p.chosen_index == inst.gold_index;
      }
    }
    if (ok) ++scoring;
  }
  return Ratio(scoring, static_cast<std::int64_t>(keys.size()));
}

// Naive counter over predictions; empty when the filter matches nothing.
inline std::optional<Ratio> brute_instance_accuracy(const std::vector<Prediction>& preds, const std::vector<QAInstance>& gold,
                                     std::optional<Variant> filter) {
  std::int64_t correct = 0, total = 0;
  for (const auto& p : preds) {
    for (const auto& inst : gold) {
      if (inst.id != p.instance_id) continue;
      if (filter && inst.variant != *filter) continue;
      ++total;
      if (p.chosen_index == inst.gold_index) ++correct;
    }
  }
  if (total == 0) return std::nullopt;
  return Ratio(correct, total);
}

}  // namespace ltqa::testing
