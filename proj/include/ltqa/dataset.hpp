#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ltqa/common.hpp"

namespace ltqa {

enum class Variant { original, semantic, context, ungrouped };
enum class Subtask { sentence, word, external };
enum class Source { provided, humor, riddlesense, synthetic };

std::string_view to_string(Variant v);
std::string_view to_string(Subtask s);
std::string_view to_string(Source s);
Variant parse_variant(std::string_view text);
Subtask parse_subtask(std::string_view text);
Source parse_source(std::string_view text);

// Links an original question to its semantic and context reconstructions.
struct GroupKey {
  std::string value;
  auto operator<=>(const GroupKey&) const = default;
};

struct QAInstance {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  int gold_index = 0;
  GroupKey group;
  Variant variant = Variant::ungrouped;
  Subtask subtask = Subtask::external;
  Source source = Source::provided;

  bool operator==(const QAInstance&) const = default;
};

// Checks the per-instance invariants: at least two choices, gold in range,
// choices pairwise distinct after whitespace normalization.
void validate_instance(const QAInstance& instance);

// Per-instance checks plus: every semantic/context member shares its group
// with an original in the same collection.
void validate_collection(std::span<const QAInstance> instances);

nlohmann::json to_json(const QAInstance& instance);
nlohmann::json to_json(std::span<const QAInstance> instances);
// Canonical-record parse. `index` is only used in error messages.
QAInstance instance_from_json(const nlohmann::json& record, std::size_t index);

// Canonical instance file: JSON array; subtask/source come from the records.
std::vector<QAInstance> read_instances(const std::filesystem::path& path);
void write_instances(const std::filesystem::path& path, std::span<const QAInstance> instances);

// Provided task data. Accepts the canonical schema; records without explicit
// "group"/"variant" fields get them from "_SR"/"_CR" id suffixes, and the
// task's native "choice_list"/"label" keys are accepted as aliases.
std::vector<QAInstance> parse_brainteaser(const nlohmann::json& doc, Subtask subtask);
std::vector<QAInstance> load_brainteaser(const std::filesystem::path& path, Subtask subtask);

// ---------------------------------------------------------------------------
// RiddleSense

struct LabeledChoice {
  char label = 'A';
  std::string text;
};

struct RawRiddle {
  std::string id;
  std::string question;
  std::vector<LabeledChoice> labeled_choices;
  char answer_key = 'A';
};

// One JSON Lines record: {"question", "choices": [{"label","text"}x5], "answerKey"}.
RawRiddle riddle_from_json(const nlohmann::json& record, std::size_t index);
std::vector<RawRiddle> load_riddlesense(const std::filesystem::path& path);

// Five-choice to four-choice conversion. An E answer overwrites slot D with
// the E text; otherwise E is discarded. With `shuffle_seed` the four kept
// choices are permuted (seeded) after the remap.
QAInstance remap_five_to_four(const RawRiddle& raw,
                              std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// ---------------------------------------------------------------------------
// Generated humor data

struct HumorRecord {
  std::string joke;
  std::vector<std::string> options;
  std::string answer;
};

HumorRecord humor_record_from_json(const nlohmann::json& record, std::size_t index);
nlohmann::json to_json(const HumorRecord& record);
QAInstance humor_to_instance(const HumorRecord& record, std::string id, std::size_t index);
std::vector<QAInstance> parse_humor(const nlohmann::json& doc, std::string_view id_prefix = "humor",
                                    std::size_t first_index = 0);
std::vector<QAInstance> load_humor(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Deduplication

enum class Normalization { exact, casefold_strip_punct };
enum class DedupScope { question_only, question_plus_choices };

struct DedupPolicy {
  Normalization normalization = Normalization::casefold_strip_punct;
  DedupScope scope = DedupScope::question_only;
};

struct DedupResult {
  std::vector<QAInstance> kept;
  std::vector<QAInstance> dropped;
};

std::string normalize_text(std::string_view text, Normalization normalization);
std::string dedup_key(const QAInstance& instance, const DedupPolicy& policy);

// First occurrence of each key is kept, later ones dropped.
DedupResult dedup(std::span<const QAInstance> instances, const DedupPolicy& policy = {});

// ---------------------------------------------------------------------------
// Mixing and splitting

struct WeightedSource {
  std::vector<QAInstance> instances;
  Ratio weight{1, 1};
};

// Each source is resized to round(weight * n) (whole copies plus a seeded
// sample without replacement), then everything is concatenated and shuffled.
std::vector<QAInstance> mix(std::span<const WeightedSource> sources, std::uint64_t seed);

struct TrainValSplit {
  std::vector<QAInstance> train;
  std::vector<QAInstance> val;
};

// Group-atomic split: instances sharing a GroupKey land on the same side.
TrainValSplit split_train_val(std::span<const QAInstance> instances, const Ratio& val_fraction,
                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Counts per (source, subtask, split).

class DatasetStats {
 public:
  void add(std::span<const QAInstance> instances, std::string_view split);
  std::size_t count(Source source, Subtask subtask, std::string_view split) const;
  std::size_t total() const;
  std::string render() const;
  nlohmann::json to_json() const;

 private:
  std::map<std::tuple<Source, Subtask, std::string>, std::size_t> counts_;
};

// ---------------------------------------------------------------------------
// Synthetic copy-marker task: the question is a sequence of distinct letters
// and the gold choice is the one letter that also occurs in the question.

struct CopyMarkerOptions {
  std::size_t question_tokens = 6;
  std::size_t num_choices = 4;
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
};

std::vector<QAInstance> make_copy_marker_task(std::size_t count, std::uint64_t seed,
                                              const CopyMarkerOptions& options = {},
                                              std::string_view id_prefix = "cm");

}  // namespace ltqa
