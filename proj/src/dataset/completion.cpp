#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <optional>
#include <unordered_set>

#include "ltqa/completion.hpp"

namespace ltqa {

namespace {

constexpr std::string_view kPrompt1 =
    "Could you create a dataset for me that includes humor-styled questions, each with multiple "
    "choices and an answer? The dataset should be in JSON format.";
constexpr std::string_view kPrompt2 =
    "Could you create a dataset of 40 jokes for me in JSON format? Each joke should include four "
    "options and the correct answer.";
constexpr std::string_view kPrompt3 =
    "Could you generate an additional 20 jokes with multiple choices and an answer? Please ensure "
    "there are no duplicates and that none of them are the same as those previously generated.";

bool looks_like_humor_array(const nlohmann::json& value) {
  return value.is_array() && (value.empty() || (value.front().is_object() && value.front().contains("joke")));
}

const nlohmann::json* find_humor_array(const nlohmann::json& doc, int depth) {
  if (looks_like_humor_array(doc)) return &doc;
  if (depth > 3 || !doc.is_object()) return nullptr;
  for (const auto& [key, value] : doc.items()) {
    if (const auto* found = find_humor_array(value, depth + 1)) return found;
  }
  return nullptr;
}

// Model output often wraps JSON in prose or code fences; take the outermost
// bracketed span.
std::optional<nlohmann::json> parse_embedded(std::string_view text) {
  auto begin = text.find('[');
  auto end = text.rfind(']');
  if (begin == std::string_view::npos || end == std::string_view::npos || end < begin) return std::nullopt;
  try {
    return nlohmann::json::parse(text.substr(begin, end - begin + 1));
  } catch (const nlohmann::json::parse_error&) {
    return std::nullopt;
  }
}

}  // namespace

std::string_view prompt_text(HumorPrompt prompt) {
  switch (prompt) {
    case HumorPrompt::p1:
      return kPrompt1;
    case HumorPrompt::p2:
      return kPrompt2;
    case HumorPrompt::p3:
      return kPrompt3;
  }
  return kPrompt3;
}

HumorPrompt parse_prompt_id(std::string_view text) {
  if (text == "p1") return HumorPrompt::p1;
  if (text == "p2") return HumorPrompt::p2;
  if (text == "p3") return HumorPrompt::p3;
  throw ValidationError("unknown prompt id '" + std::string(text) + "' (expected p1, p2 or p3)");
}

HttpCompletionClient::HttpCompletionClient(std::string endpoint, std::string credential)
    : endpoint_(std::move(endpoint)), credential_(std::move(credential)) {
  if (endpoint_.empty()) throw TransportError("completion endpoint is empty");
}

HttpCompletionClient HttpCompletionClient::from_env() {
  const char* endpoint = std::getenv(kEndpointEnv);
  if (endpoint == nullptr || *endpoint == '\0') {
    throw TransportError(std::string(kEndpointEnv) + " is not set");
  }
  const char* credential = std::getenv(kCredentialEnv);
  return HttpCompletionClient(endpoint, credential ? credential : "");
}

std::string HttpCompletionClient::complete(std::string_view prompt) {
  std::lock_guard lock(mutex_);
  auto scheme_end = endpoint_.find("://");
  if (scheme_end == std::string::npos) throw TransportError("endpoint '" + endpoint_ + "' has no scheme");
  auto path_begin = endpoint_.find('/', scheme_end + 3);
  std::string origin = endpoint_.substr(0, path_begin);
  std::string path = path_begin == std::string::npos ? "/" : endpoint_.substr(path_begin);

  httplib::Client client(origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(300);
  httplib::Headers headers;
  if (!credential_.empty()) headers.emplace("Authorization", "Bearer " + credential_);
  const std::string payload = nlohmann::json{{"prompt", prompt}}.dump();

  auto result = client.Post(path, headers, payload, "application/json");
  if (!result) {
    throw TransportError("request to " + endpoint_ + " failed: " + httplib::to_string(result.error()));
  }
  if (result->status == 401 || result->status == 403) {
    throw TransportError("completion service rejected the credential (HTTP " + std::to_string(result->status) + ")");
  }
  if (result->status < 200 || result->status >= 300) {
    throw TransportError("completion service returned HTTP " + std::to_string(result->status));
  }
  return result->body;
}

FileCompletionClient::FileCompletionClient(std::filesystem::path response_path)
    : response_path_(std::move(response_path)) {}

std::string FileCompletionClient::complete(std::string_view prompt) {
  prompts_.emplace_back(prompt);
  try {
    return read_file(response_path_);
  } catch (const IoError& e) {
    throw TransportError(std::string("mock transport: ") + e.what());
  }
}

std::vector<HumorRecord> extract_humor_records(std::string_view body) {
  std::optional<nlohmann::json> doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    doc = parse_embedded(body);
  }
  if (!doc) throw FormatError("completion response is not JSON", std::string(body));

  const nlohmann::json* array = find_humor_array(*doc, 0);
  if (array == nullptr && doc->is_object()) {
    for (const char* key : {"completion", "text", "content"}) {
      auto it = doc->find(key);
      if (it == doc->end() || !it->is_string()) continue;
      if (auto inner = parse_embedded(it->get<std::string>()); inner && looks_like_humor_array(*inner)) {
        *doc = std::move(*inner);
        array = &*doc;
        break;
      }
    }
  }
  if (array == nullptr) throw FormatError("completion response holds no humor record array", std::string(body));

  std::vector<HumorRecord> records;
  try {
    for (std::size_t i = 0; i < array->size(); ++i) records.push_back(humor_record_from_json((*array)[i], i));
  } catch (const FormatError& e) {
    throw FormatError(e.what(), std::string(body));
  }
  return records;
}

std::vector<QAInstance> generate_humor_batch(CompletionClient& client, HumorPrompt prompt,
                                             std::span<const QAInstance> accumulated) {
  const std::string body = client.complete(prompt_text(prompt));
  const auto records = extract_humor_records(body);

  const DedupPolicy policy;
  std::unordered_set<std::string> seen;
  for (const auto& instance : accumulated) seen.insert(dedup_key(instance, policy));

  std::vector<QAInstance> fresh;
  std::size_t next_id = accumulated.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    QAInstance instance;
    try {
      instance = humor_to_instance(records[i], "humor-" + std::to_string(next_id), i);
    } catch (const ValidationError& e) {
      throw FormatError(e.what(), body);
    }
    if (!seen.insert(dedup_key(instance, policy)).second) continue;
    ++next_id;
    fresh.push_back(std::move(instance));
  }
  return fresh;
}

}  // namespace ltqa
