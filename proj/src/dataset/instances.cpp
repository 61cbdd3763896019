#include <array>
#include <cctype>
#include <set>
#include <unordered_set>

#include "ltqa/dataset.hpp"

namespace ltqa {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::array<std::pair<std::string_view, Enum>, N>& table,
                std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == text) return value;
  }
  throw ValidationError("unknown " + std::string(what) + " '" + std::string(text) + "'");
}

constexpr std::array<std::pair<std::string_view, Variant>, 4> kVariants{{
    {"original", Variant::original},
    {"semantic", Variant::semantic},
    {"context", Variant::context},
    {"ungrouped", Variant::ungrouped},
}};

constexpr std::array<std::pair<std::string_view, Subtask>, 3> kSubtasks{{
    {"sentence", Subtask::sentence},
    {"word", Subtask::word},
    {"external", Subtask::external},
}};

constexpr std::array<std::pair<std::string_view, Source>, 4> kSources{{
    {"provided", Source::provided},
    {"humor", Source::humor},
    {"riddlesense", Source::riddlesense},
    {"synthetic", Source::synthetic},
}};

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(c);
  }
  return out;
}

const nlohmann::json& field(const nlohmann::json& record, std::string_view name, std::size_t index) {
  auto it = record.find(name);
  if (it == record.end()) {
    throw FormatError("record " + std::to_string(index) + ": missing field '" + std::string(name) + "'");
  }
  return *it;
}

std::string string_field(const nlohmann::json& record, std::string_view name, std::size_t index) {
  const auto& value = field(record, name, index);
  if (!value.is_string()) {
    throw FormatError("record " + std::to_string(index) + ": field '" + std::string(name) +
                      "' is not a string");
  }
  return value.get<std::string>();
}

std::vector<std::string> string_list(const nlohmann::json& value, std::string_view name, std::size_t index) {
  if (!value.is_array()) {
    throw FormatError("record " + std::to_string(index) + ": field '" + std::string(name) +
                      "' is not an array");
  }
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw FormatError("record " + std::to_string(index) + ": field '" + std::string(name) +
                        "' holds a non-string entry");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

int int_field(const nlohmann::json& value, std::string_view name, std::size_t index) {
  if (!value.is_number_integer()) {
    throw FormatError("record " + std::to_string(index) + ": field '" + std::string(name) +
                      "' is not an integer");
  }
  return value.get<int>();
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& [name, value] : kVariants) {
    if (value == v) return name;
  }
  return "?";
}

std::string_view to_string(Subtask s) {
  for (const auto& [name, value] : kSubtasks) {
    if (value == s) return name;
  }
  return "?";
}

std::string_view to_string(Source s) {
  for (const auto& [name, value] : kSources) {
    if (value == s) return name;
  }
  return "?";
}

Variant parse_variant(std::string_view text) { return parse_enum(text, kVariants, "variant"); }
Subtask parse_subtask(std::string_view text) { return parse_enum(text, kSubtasks, "subtask"); }
Source parse_source(std::string_view text) { return parse_enum(text, kSources, "source"); }

void validate_instance(const QAInstance& instance) {
  const auto where = [&] { return "instance '" + instance.id + "': "; };
  if (instance.choices.size() < 2) {
    throw ValidationError(where() + "needs at least 2 choices, has " +
                          std::to_string(instance.choices.size()));
  }
  if (instance.gold_index < 0 || static_cast<std::size_t>(instance.gold_index) >= instance.choices.size()) {
    throw ValidationError(where() + "gold_index " + std::to_string(instance.gold_index) +
                          " out of range for " + std::to_string(instance.choices.size()) + " choices");
  }
  std::set<std::string> seen;
  for (const auto& choice : instance.choices) {
    if (!seen.insert(collapse_whitespace(choice)).second) {
      throw ValidationError(where() + "duplicate choice '" + choice + "'");
    }
  }
}

void validate_collection(std::span<const QAInstance> instances) {
  std::set<std::string> original_groups;
  for (const auto& instance : instances) {
    validate_instance(instance);
    if (instance.variant == Variant::original) original_groups.insert(instance.group.value);
  }
  for (const auto& instance : instances) {
    if ((instance.variant == Variant::semantic || instance.variant == Variant::context) &&
        !original_groups.contains(instance.group.value)) {
      throw ValidationError("instance '" + instance.id + "': group '" + instance.group.value +
                            "' has no original member");
    }
  }
}

nlohmann::json to_json(const QAInstance& instance) {
  return nlohmann::json{
      {"id", instance.id},
      {"question", instance.question},
      {"choices", instance.choices},
      {"gold_index", instance.gold_index},
      {"group", instance.group.value},
      {"variant", to_string(instance.variant)},
      {"subtask", to_string(instance.subtask)},
      {"source", to_string(instance.source)},
  };
}

nlohmann::json to_json(std::span<const QAInstance> instances) {
  auto out = nlohmann::json::array();
  for (const auto& instance : instances) out.push_back(to_json(instance));
  return out;
}

QAInstance instance_from_json(const nlohmann::json& record, std::size_t index) {
  if (!record.is_object()) throw FormatError("record " + std::to_string(index) + ": not an object");
  QAInstance out;
  out.id = string_field(record, "id", index);
  out.question = string_field(record, "question", index);
  out.choices = string_list(field(record, "choices", index), "choices", index);
  out.gold_index = int_field(field(record, "gold_index", index), "gold_index", index);
  out.group.value = string_field(record, "group", index);
  try {
    out.variant = parse_variant(string_field(record, "variant", index));
    out.subtask = parse_subtask(string_field(record, "subtask", index));
    out.source = parse_source(string_field(record, "source", index));
  } catch (const ValidationError& e) {
    throw FormatError("record " + std::to_string(index) + ": " + e.what());
  }
  return out;
}

namespace {

nlohmann::json parse_json_text(const std::string& text, const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": JSON parse error at byte " + std::to_string(e.byte), text);
  }
}

}  // namespace

std::vector<QAInstance> read_instances(const std::filesystem::path& path) {
  auto doc = parse_json_text(read_file(path), path);
  if (!doc.is_array()) throw FormatError(path.string() + ": expected a JSON array of instances");
  std::vector<QAInstance> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(instance_from_json(doc[i], i));
  validate_collection(out);
  return out;
}

void write_instances(const std::filesystem::path& path, std::span<const QAInstance> instances) {
  write_file(path, to_json(instances).dump(2) + "\n");
}

std::vector<QAInstance> parse_brainteaser(const nlohmann::json& doc, Subtask subtask) {
  if (!doc.is_array()) throw FormatError("expected a JSON array of records");
  std::vector<QAInstance> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& record = doc[i];
    if (!record.is_object()) throw FormatError("record " + std::to_string(i) + ": not an object");
    QAInstance inst;
    inst.id = string_field(record, "id", i);
    inst.question = string_field(record, "question", i);
    if (record.contains("choices")) {
      inst.choices = string_list(record["choices"], "choices", i);
    } else {
      inst.choices = string_list(field(record, "choice_list", i), "choice_list", i);
    }
    if (record.contains("gold_index")) {
      inst.gold_index = int_field(record["gold_index"], "gold_index", i);
    } else {
      inst.gold_index = int_field(field(record, "label", i), "label", i);
    }

    if (record.contains("variant")) {
      try {
        inst.variant = parse_variant(string_field(record, "variant", i));
      } catch (const ValidationError& e) {
        throw FormatError("record " + std::to_string(i) + ": " + e.what());
      }
      inst.group.value = record.contains("group") ? string_field(record, "group", i) : inst.id;
    } else if (ends_with(inst.id, "_SR")) {
      inst.variant = Variant::semantic;
      inst.group.value = inst.id.substr(0, inst.id.size() - 3);
    } else if (ends_with(inst.id, "_CR")) {
      inst.variant = Variant::context;
      inst.group.value = inst.id.substr(0, inst.id.size() - 3);
    } else {
      inst.variant = Variant::original;
      inst.group.value = record.contains("group") ? string_field(record, "group", i) : inst.id;
    }

    inst.subtask = subtask;
    inst.source = Source::provided;
    if (record.contains("source")) {
      try {
        inst.source = parse_source(string_field(record, "source", i));
      } catch (const ValidationError& e) {
        throw FormatError("record " + std::to_string(i) + ": " + e.what());
      }
    }
    validate_instance(inst);
    out.push_back(std::move(inst));
  }
  validate_collection(out);
  return out;
}

std::vector<QAInstance> load_brainteaser(const std::filesystem::path& path, Subtask subtask) {
  auto doc = parse_json_text(read_file(path), path);
  try {
    return parse_brainteaser(doc, subtask);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.raw());
  }
}

}  // namespace ltqa
