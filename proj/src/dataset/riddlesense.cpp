#include <sstream>

#include "ltqa/dataset.hpp"

namespace ltqa {

namespace {

std::string where(std::size_t index) { return "riddle " + std::to_string(index) + ": "; }

void check_riddle(const RawRiddle& raw) {
  const auto prefix = "riddle '" + raw.id + "': ";
  if (raw.labeled_choices.size() != 5) {
    throw ValidationError(prefix + "expected 5 labeled choices, got " +
                          std::to_string(raw.labeled_choices.size()));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    char expected = static_cast<char>('A' + i);
    if (raw.labeled_choices[i].label != expected) {
      throw ValidationError(prefix + "choice " + std::to_string(i) + " has label '" +
                            std::string(1, raw.labeled_choices[i].label) + "', expected '" +
                            std::string(1, expected) + "'");
    }
  }
  if (raw.answer_key < 'A' || raw.answer_key > 'E') {
    throw ValidationError(prefix + "answer key '" + std::string(1, raw.answer_key) + "' is not one of A-E");
  }
}

}  // namespace

RawRiddle riddle_from_json(const nlohmann::json& record, std::size_t index) {
  if (!record.is_object()) throw FormatError(where(index) + "not an object");
  RawRiddle raw;
  raw.id = record.contains("id") && record["id"].is_string() ? record["id"].get<std::string>()
                                                              : "RS-" + std::to_string(index);

  // The upstream release nests {"stem", "choices"} under "question"; the flat
  // form keeps them at top level.
  const nlohmann::json* body = &record;
  auto q = record.find("question");
  if (q == record.end()) throw FormatError(where(index) + "missing field 'question'");
  if (q->is_object()) {
    body = &*q;
    auto stem = q->find("stem");
    if (stem == q->end() || !stem->is_string()) throw FormatError(where(index) + "missing question stem");
    raw.question = stem->get<std::string>();
  } else if (q->is_string()) {
    raw.question = q->get<std::string>();
  } else {
    throw FormatError(where(index) + "field 'question' is neither a string nor an object");
  }

  auto choices = body->find("choices");
  if (choices == body->end() || !choices->is_array()) {
    throw FormatError(where(index) + "missing 'choices' array");
  }
  for (const auto& c : *choices) {
    if (!c.is_object() || !c.contains("label") || !c.contains("text") || !c["label"].is_string() ||
        !c["text"].is_string()) {
      throw FormatError(where(index) + "choice entries need string 'label' and 'text'");
    }
    auto label = c["label"].get<std::string>();
    if (label.size() != 1) throw ValidationError(where(index) + "bad choice label '" + label + "'");
    raw.labeled_choices.push_back({label[0], c["text"].get<std::string>()});
  }

  auto key = record.find("answerKey");
  if (key == record.end() || !key->is_string() || key->get<std::string>().size() != 1) {
    throw FormatError(where(index) + "missing or malformed 'answerKey'");
  }
  raw.answer_key = key->get<std::string>()[0];
  check_riddle(raw);
  return raw;
}

std::vector<RawRiddle> load_riddlesense(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<RawRiddle> out;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ": " + where(index) + "JSON parse error at byte " +
                            std::to_string(e.byte),
                        line);
    }
    out.push_back(riddle_from_json(record, index));
    ++index;
  }
  return out;
}

QAInstance remap_five_to_four(const RawRiddle& raw, std::optional<std::uint64_t> shuffle_seed) {
  check_riddle(raw);
  QAInstance out;
  out.id = raw.id;
  out.question = raw.question;
  for (std::size_t i = 0; i < 4; ++i) out.choices.push_back(raw.labeled_choices[i].text);
  if (raw.answer_key == 'E') {
    out.choices[3] = raw.labeled_choices[4].text;
    out.gold_index = 3;
  } else {
    out.gold_index = raw.answer_key - 'A';
  }

  if (shuffle_seed) {
    std::vector<int> order{0, 1, 2, 3};
    Rng rng(*shuffle_seed);
    rng.shuffle(std::span<int>(order));
    std::vector<std::string> permuted;
    int gold = 0;
    for (std::size_t slot = 0; slot < 4; ++slot) {
      permuted.push_back(out.choices[static_cast<std::size_t>(order[slot])]);
      if (order[slot] == out.gold_index) gold = static_cast<int>(slot);
    }
    out.choices = std::move(permuted);
    out.gold_index = gold;
  }

  out.group.value = out.id;
  out.variant = Variant::ungrouped;
  out.subtask = Subtask::external;
  out.source = Source::riddlesense;
  validate_instance(out);
  return out;
}

}  // namespace ltqa
