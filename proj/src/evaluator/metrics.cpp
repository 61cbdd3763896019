#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "ltqa/evaluator.hpp"

namespace ltqa {

namespace {

// id -> gold instance; rejects duplicate ids.
std::unordered_map<std::string, const QAInstance*> index_gold(std::span<const QAInstance> gold) {
  std::unordered_map<std::string, const QAInstance*> by_id;
  for (const auto& instance : gold) {
    if (!by_id.emplace(instance.id, &instance).second) {
      throw ValidationError("gold data contains instance id '" + instance.id + "' more than once");
    }
  }
  return by_id;
}

// id -> chosen index, validated against the gold instances.
std::unordered_map<std::string, int> index_predictions(std::span<const Prediction> preds,
                                                       const std::unordered_map<std::string, const QAInstance*>& gold) {
  std::unordered_map<std::string, int> chosen;
  for (const auto& pred : preds) {
    auto it = gold.find(pred.instance_id);
    if (it == gold.end()) throw ValidationError("prediction for unknown instance id '" + pred.instance_id + "'");
    const auto k = static_cast<int>(it->second->choices.size());
    if (pred.chosen_index < 0 || pred.chosen_index >= k) {
      throw ValidationError("prediction for '" + pred.instance_id + "' chooses index " +
                            std::to_string(pred.chosen_index) + " of " + std::to_string(k) + " choices");
    }
    if (!chosen.emplace(pred.instance_id, pred.chosen_index).second) {
      throw ValidationError("more than one prediction for instance id '" + pred.instance_id + "'");
    }
  }
  return chosen;
}

std::string cell_text(const std::optional<Ratio>& cell, bool percent) {
  if (!cell) return "-";
  return percent ? (*cell * Ratio(100, 1)).fixed(1) : cell->fixed(3);
}

std::string subtask_title(Subtask subtask) {
  switch (subtask) {
    case Subtask::sentence:
      return "Sentence Puzzle";
    case Subtask::word:
      return "Word Puzzle";
    case Subtask::external:
      return "External";
  }
  return "?";
}

// Published rows. Human/ChatGPT/RoBERTa-L are the task organizers' baselines;
// the rest are the reported fine-tuned systems.
constexpr ReferenceRow kReferenceRows[] = {
    {"Human", {".907", ".907", ".944", ".907", ".889", ".920"}, {".917", ".917", ".917", ".917", ".900", ".917"}},
    {"ChatGPT", {".608", ".593", ".679", ".507", ".397", ".627"}, {".561", ".524", ".518", ".439", ".292", ".535"}},
    {"RoBERTa-L", {".435", ".402", ".464", ".330", ".201", ".434"}, {".195", ".195", ".232", ".146", ".061", ".207"}},
    {"BERT-base + AMSC + wp+sp", {".475", ".55", ".5", ".35", ".25", ".508"},
     {".281", ".312", ".375", ".031", "0", ".323"}},
    {"BERT-base + AMMC + wp+sp", {".650", ".625", ".625", ".600", ".500", ".600"},
     {".438", ".375", ".406", ".344", ".375", ".406"}},
    {"DeBERTaV3 + AMMC + wp+sp", {".900", ".900", ".850", ".900", ".825", ".883"},
     {".75", ".75", ".625", ".719", ".500", ".708"}},
    {"DeBERTaV3 + AMMC + wp+sp + Humor + RS", {".925", ".950", ".900", ".925", ".875", ".925"},
     {"-", "-", "-", "-", "-", "-"}},
    {"DeBERTaV3 + AMMC + wp + Humor", {"-", "-", "-", "-", "-", "-"},
     {".844", ".812", ".750", ".781", ".594", ".802"}},
};

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto doc = nlohmann::json::parse(line);
      out.push_back({doc.at("id").get<std::string>(), doc.at("chosen_index").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what(), line);
    }
  }
  return out;
}

std::string predictions_to_jsonl(std::span<const Prediction> predictions) {
  std::string out;
  for (const auto& p : predictions) {
    out += nlohmann::json{{"id", p.instance_id}, {"chosen_index", p.chosen_index}}.dump();
    out += '\n';
  }
  return out;
}

Ratio instance_accuracy(std::span<const Prediction> preds, std::span<const QAInstance> gold,
                        std::optional<Variant> variant_filter) {
  const auto by_id = index_gold(gold);
  const auto chosen = index_predictions(preds, by_id);
  std::int64_t correct = 0;
  std::int64_t total = 0;
  for (const auto& pred : preds) {
    const QAInstance& instance = *by_id.at(pred.instance_id);
    if (variant_filter && instance.variant != *variant_filter) continue;
    ++total;
    if (pred.chosen_index == instance.gold_index) ++correct;
  }
  if (total == 0) {
    throw ValidationError(variant_filter ? "no predictions for variant '" + std::string(to_string(*variant_filter)) + "'"
                                         : std::string("no predictions to score"));
  }
  return Ratio(correct, total);
}

GroupAccuracy group_accuracy(std::span<const Prediction> preds, std::span<const QAInstance> gold,
                             const std::set<Variant>& members) {
  const auto by_id = index_gold(gold);
  const auto chosen = index_predictions(preds, by_id);

  // Groups in first-appearance order for stable warnings.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const QAInstance*>> groups;
  for (const auto& instance : gold) {
    if (instance.variant == Variant::ungrouped) continue;
    auto [it, inserted] = groups.try_emplace(instance.group.value);
    if (inserted) order.push_back(instance.group.value);
    it->second.push_back(&instance);
  }
  if (order.empty()) throw ValidationError("no grouped instances to score");

  GroupAccuracy result;
  std::int64_t scoring = 0;
  for (const auto& key : order) {
    const auto& group = groups.at(key);
    if (std::none_of(group.begin(), group.end(), [](const QAInstance* i) { return i->variant == Variant::original; })) {
      throw ValidationError("group '" + key + "' has no original member");
    }
    bool all_correct = true;
    std::set<Variant> present;
    for (const QAInstance* instance : group) {
      if (!members.contains(instance->variant)) continue;
      present.insert(instance->variant);
      auto it = chosen.find(instance->id);
      if (it == chosen.end()) throw ValidationError("no prediction for grouped instance '" + instance->id + "'");
      all_correct = all_correct && it->second == instance->gold_index;
    }
    for (Variant v : members) {
      if (v != Variant::ungrouped && !present.contains(v)) {
        result.warnings.push_back("group '" + key + "' has no " + std::string(to_string(v)) + " member");
      }
    }
    if (all_correct) ++scoring;
  }
  result.value = Ratio(scoring, static_cast<std::int64_t>(order.size()));
  return result;
}

SubtaskMetrics subtask_metrics(std::span<const Prediction> preds, std::span<const QAInstance> gold, Subtask subtask) {
  std::vector<QAInstance> rows;
  for (const auto& instance : gold) {
    if (instance.subtask == subtask) rows.push_back(instance);
  }
  if (rows.empty()) throw ValidationError("no gold instances for subtask '" + std::string(to_string(subtask)) + "'");

  const auto by_id = index_gold(rows);
  const auto chosen = index_predictions(preds, by_id);
  std::vector<std::string> missing;
  for (const auto& instance : rows) {
    if (!chosen.contains(instance.id)) missing.push_back(instance.id);
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " gold instance(s) without prediction:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }

  SubtaskMetrics m;
  m.subtask = subtask;
  auto has_variant = [&](Variant v) {
    return std::any_of(rows.begin(), rows.end(), [v](const QAInstance& i) { return i.variant == v; });
  };
  if (has_variant(Variant::original)) m.original = instance_accuracy(preds, rows, Variant::original);
  if (has_variant(Variant::semantic)) m.semantic = instance_accuracy(preds, rows, Variant::semantic);
  if (has_variant(Variant::context)) m.context = instance_accuracy(preds, rows, Variant::context);
  if (has_variant(Variant::original)) {
    auto os = group_accuracy(preds, rows, {Variant::original, Variant::semantic});
    auto osc = group_accuracy(preds, rows, {Variant::original, Variant::semantic, Variant::context});
    m.orig_sem = os.value;
    m.orig_sem_con = osc.value;
    // The wider member set repeats every semantic warning; keep each once.
    std::set<std::string> seen;
    for (auto* list : {&os.warnings, &osc.warnings}) {
      for (auto& w : *list) {
        if (seen.insert(w).second) m.warnings.push_back(w);
      }
    }
  }
  m.overall = instance_accuracy(preds, rows);
  return m;
}

MetricsTable build_results_table(const std::map<Subtask, std::vector<Prediction>>& preds,
                                 const std::map<Subtask, std::vector<QAInstance>>& gold) {
  MetricsTable table;
  for (const auto& [subtask, instances] : gold) {
    auto it = preds.find(subtask);
    if (it == preds.end()) {
      throw ValidationError("no predictions supplied for subtask '" + std::string(to_string(subtask)) + "'");
    }
    table.rows.push_back(subtask_metrics(it->second, instances, subtask));
  }
  return table;
}

nlohmann::json to_json(const SubtaskMetrics& metrics) {
  nlohmann::json cells = nlohmann::json::object();
  auto put = [&](const char* name, const std::optional<Ratio>& r) {
    if (r) cells[name] = {{"num", r->num}, {"den", r->den}};
  };
  put("original", metrics.original);
  put("semantic", metrics.semantic);
  put("context", metrics.context);
  put("orig_sem", metrics.orig_sem);
  put("orig_sem_con", metrics.orig_sem_con);
  put("overall", metrics.overall);
  return nlohmann::json{{"subtask", to_string(metrics.subtask)}, {"cells", cells}, {"warnings", metrics.warnings}};
}

SubtaskMetrics subtask_metrics_from_json(const nlohmann::json& doc) {
  SubtaskMetrics m;
  try {
    m.subtask = parse_subtask(doc.at("subtask").get<std::string>());
    const auto& cells = doc.at("cells");
    auto get = [&](const char* name) -> std::optional<Ratio> {
      if (!cells.contains(name)) return std::nullopt;
      return Ratio(cells[name].at("num").get<std::int64_t>(), cells[name].at("den").get<std::int64_t>());
    };
    m.original = get("original");
    m.semantic = get("semantic");
    m.context = get("context");
    m.orig_sem = get("orig_sem");
    m.orig_sem_con = get("orig_sem_con");
    auto overall = get("overall");
    if (!overall) throw FormatError("results record lacks the overall cell");
    m.overall = *overall;
    if (doc.contains("warnings")) m.warnings = doc["warnings"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad results record: ") + e.what());
  }
  return m;
}

std::span<const ReferenceRow> reference_rows() { return kReferenceRows; }

std::string render_results_table(const MetricsTable& table, const RenderOptions& options) {
  constexpr std::size_t kLabelWidth = 40;
  constexpr std::size_t kCellWidth = 16;
  std::ostringstream out;
  for (const auto& row : table.rows) {
    out << subtask_title(row.subtask) << (options.percent ? " (accuracy, %)" : " (accuracy)") << "\n";
    out << pad_right("Approach", kLabelWidth);
    for (const char* column : kResultColumns) out << pad_left(column, kCellWidth);
    out << "\n" << std::string(kLabelWidth + kCellWidth * kResultColumns.size(), '-') << "\n";

    if (options.include_reference_rows && row.subtask != Subtask::external) {
      for (const auto& ref : kReferenceRows) {
        const auto& cells = row.subtask == Subtask::sentence ? ref.sentence : ref.word;
        out << pad_right(std::string(ref.label) + " *", kLabelWidth);
        for (const char* cell : cells) out << pad_left(cell, kCellWidth);
        out << "\n";
      }
    }

    out << pad_right(options.system_label, kLabelWidth);
    for (const auto& cell : {row.original, row.semantic, row.context, row.orig_sem, row.orig_sem_con,
                             std::optional<Ratio>(row.overall)}) {
      out << pad_left(cell_text(cell, options.percent), kCellWidth);
    }
    out << "\n\n";
    for (const auto& w : row.warnings) out << "warning: " << w << "\n";
  }
  if (options.include_reference_rows) {
    out << "* reported reference values, shown verbatim for comparison; not reproduced by this run.\n";
  }
  out << "Overall = correct predictions / all instances of the subtask, across every variant.\n";
  return out.str();
}

std::vector<AblationRow> ablation_deltas(std::span<const std::pair<std::string, Ratio>> rows) {
  std::vector<AblationRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    AblationRow row{rows[i].first, rows[i].second, std::nullopt};
    if (i > 0) row.delta = rows[i].second - rows[i - 1].second;
    out.push_back(std::move(row));
  }
  return out;
}

std::string render_ablation(std::span<const AblationRow> rows, int places) {
  std::size_t width = 13;
  for (const auto& row : rows) width = std::max(width, row.label.size() + 2);
  std::ostringstream out;
  out << pad_right("Configuration", width) << pad_left("Acc.", 8) << pad_left("Delta", 9) << "\n";
  for (const auto& row : rows) {
    out << pad_right(row.label, width) << pad_left(row.accuracy.fixed(places), 8)
        << pad_left(row.delta ? row.delta->signed_fixed(places) : "---", 9) << "\n";
  }
  return out.str();
}

}  // namespace ltqa
