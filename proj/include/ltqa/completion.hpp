#pragma once

#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltqa/dataset.hpp"

namespace ltqa {

// The three generation prompts, verbatim.
enum class HumorPrompt { p1, p2, p3 };

std::string_view prompt_text(HumorPrompt prompt);
HumorPrompt parse_prompt_id(std::string_view text);

// A text-completion service. Implementations need not be reentrant; callers
// must not share one client across threads without external locking.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  // Returns the raw response body. Throws TransportError on network or
  // credential failure.
  virtual std::string complete(std::string_view prompt) = 0;
};

// POSTs {"prompt": ...} to an http(s) endpoint with a bearer credential.
class HttpCompletionClient final : public CompletionClient {
 public:
  static constexpr const char* kEndpointEnv = "LTQA_COMPLETION_ENDPOINT";
  static constexpr const char* kCredentialEnv = "LTQA_COMPLETION_API_KEY";

  HttpCompletionClient(std::string endpoint, std::string credential);
  // Reads both settings from the environment; throws TransportError when the
  // endpoint is unset.
  static HttpCompletionClient from_env();

  std::string complete(std::string_view prompt) override;

 private:
  std::string endpoint_;
  std::string credential_;
  std::mutex mutex_;
};

// Test transport: every call returns the contents of `response_path` and
// records the prompt that was sent.
class FileCompletionClient final : public CompletionClient {
 public:
  explicit FileCompletionClient(std::filesystem::path response_path);

  std::string complete(std::string_view prompt) override;
  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  std::filesystem::path response_path_;
  std::vector<std::string> prompts_;
};

// Finds the humor record array in a response body. Accepts a bare array, an
// object holding such an array under any key, or an object whose
// "completion"/"text"/"content" string itself contains the JSON.
std::vector<HumorRecord> extract_humor_records(std::string_view body);

// Sends one prompt and returns the instances that are new relative to
// `accumulated` (and to each other) under the default dedup policy.
std::vector<QAInstance> generate_humor_batch(CompletionClient& client, HumorPrompt prompt,
                                             std::span<const QAInstance> accumulated);

}  // namespace ltqa
