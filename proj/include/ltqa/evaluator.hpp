#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltqa/common.hpp"
#include "ltqa/dataset.hpp"

namespace ltqa {

struct Prediction {
  std::string instance_id;
  int chosen_index = 0;

  bool operator==(const Prediction&) const = default;
};

// Prediction file: JSON Lines of {"id": str, "chosen_index": int}.
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
std::string predictions_to_jsonl(std::span<const Prediction> predictions);

// Correct / total over the predictions whose gold instance passes the
// variant filter. Every prediction must resolve to exactly one gold id.
Ratio instance_accuracy(std::span<const Prediction> preds, std::span<const QAInstance> gold,
                        std::optional<Variant> variant_filter = std::nullopt);

struct GroupAccuracy {
  Ratio value;
  std::vector<std::string> warnings;
};

// A group scores when every member whose variant is in `members` is predicted
// correctly. Ungrouped instances are ignored; every remaining group must hold
// an original. Groups missing a requested variant are scored on what they
// have and reported in `warnings`.
GroupAccuracy group_accuracy(std::span<const Prediction> preds, std::span<const QAInstance> gold,
                             const std::set<Variant>& members);

// One row of the results table. Cells without any instance of the required
// variant stay empty.
struct SubtaskMetrics {
  Subtask subtask = Subtask::sentence;
  std::optional<Ratio> original, semantic, context;
  std::optional<Ratio> orig_sem, orig_sem_con;
  Ratio overall;
  std::vector<std::string> warnings;
};

struct MetricsTable {
  std::vector<SubtaskMetrics> rows;
};

inline constexpr std::array<const char*, 6> kResultColumns{"Original", "Semantic", "Context",
                                                           "Orig.+Sem.", "Orig.+Sem.+Con.", "Overall"};

SubtaskMetrics subtask_metrics(std::span<const Prediction> preds, std::span<const QAInstance> gold, Subtask subtask);

// Predictions must cover every gold instance of each subtask.
MetricsTable build_results_table(const std::map<Subtask, std::vector<Prediction>>& preds,
                                 const std::map<Subtask, std::vector<QAInstance>>& gold);

// {"subtask": ..., "cells": {name: {"num": int, "den": int}}, "warnings": [...]}
nlohmann::json to_json(const SubtaskMetrics& metrics);
SubtaskMetrics subtask_metrics_from_json(const nlohmann::json& doc);

// Published rows reproduced verbatim for context only; never computed here.
struct ReferenceRow {
  const char* label;
  std::array<const char*, 6> sentence;
  std::array<const char*, 6> word;
};

std::span<const ReferenceRow> reference_rows();

struct RenderOptions {
  std::string system_label = "this run";
  bool include_reference_rows = true;
  bool percent = false;
};

std::string render_results_table(const MetricsTable& table, const RenderOptions& options = {});

struct AblationRow {
  std::string label;
  Ratio accuracy;
  std::optional<Ratio> delta;  // empty for the baseline row
};

std::vector<AblationRow> ablation_deltas(std::span<const std::pair<std::string, Ratio>> rows);
std::string render_ablation(std::span<const AblationRow> rows, int places = 1);

}  // namespace ltqa
