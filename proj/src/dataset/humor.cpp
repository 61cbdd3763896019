#include <array>

#include "ltqa/dataset.hpp"

namespace ltqa {

namespace {

constexpr std::array<std::string_view, 4> kPrefixes{"A. ", "B. ", "C. ", "D. "};

std::string where(std::size_t index) { return "humor record " + std::to_string(index) + ": "; }

}  // namespace

HumorRecord humor_record_from_json(const nlohmann::json& record, std::size_t index) {
  if (!record.is_object()) throw FormatError(where(index) + "not an object");
  HumorRecord out;
  auto joke = record.find("joke");
  auto options = record.find("options");
  auto answer = record.find("answer");
  if (joke == record.end() || !joke->is_string()) throw FormatError(where(index) + "missing string 'joke'");
  if (options == record.end() || !options->is_array()) {
    throw FormatError(where(index) + "missing 'options' array");
  }
  if (answer == record.end() || !answer->is_string()) {
    throw FormatError(where(index) + "missing string 'answer'");
  }
  out.joke = joke->get<std::string>();
  for (const auto& option : *options) {
    if (!option.is_string()) throw FormatError(where(index) + "non-string option");
    out.options.push_back(option.get<std::string>());
  }
  out.answer = answer->get<std::string>();
  return out;
}

nlohmann::json to_json(const HumorRecord& record) {
  return nlohmann::json{{"joke", record.joke}, {"options", record.options}, {"answer", record.answer}};
}

QAInstance humor_to_instance(const HumorRecord& record, std::string id, std::size_t index) {
  if (record.options.size() != kPrefixes.size()) {
    throw ValidationError(where(index) + "expected 4 options, got " + std::to_string(record.options.size()));
  }
  QAInstance out;
  for (std::size_t i = 0; i < kPrefixes.size(); ++i) {
    const auto& option = record.options[i];
    if (!option.starts_with(kPrefixes[i])) {
      throw ValidationError(where(index) + "option " + std::to_string(i) + " lacks prefix '" +
                            std::string(kPrefixes[i]) + "'");
    }
    out.choices.push_back(option.substr(kPrefixes[i].size()));
  }
  if (record.answer.size() != 1 || record.answer[0] < 'A' || record.answer[0] > 'D') {
    throw ValidationError(where(index) + "answer '" + record.answer + "' is not one of A-D");
  }
  out.id = std::move(id);
  out.question = record.joke;
  out.gold_index = record.answer[0] - 'A';
  out.group.value = out.id;
  out.variant = Variant::ungrouped;
  out.subtask = Subtask::external;
  out.source = Source::humor;
  try {
    validate_instance(out);
  } catch (const ValidationError& e) {
    throw ValidationError(where(index) + e.what());
  }
  return out;
}

std::vector<QAInstance> parse_humor(const nlohmann::json& doc, std::string_view id_prefix,
                                    std::size_t first_index) {
  if (!doc.is_array()) throw FormatError("expected a JSON array of humor records");
  std::vector<QAInstance> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    auto record = humor_record_from_json(doc[i], i);
    out.push_back(humor_to_instance(record, std::string(id_prefix) + "-" + std::to_string(first_index + i), i));
  }
  return out;
}

std::vector<QAInstance> load_humor(const std::filesystem::path& path) {
  auto text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": JSON parse error at byte " + std::to_string(e.byte), text);
  }
  return parse_humor(doc);
}

}  // namespace ltqa
