#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ltqa {

using TokenId = std::uint32_t;

// Byte-level BPE merge table.
//
// Id layout: 0 = pad, 1 = sequence start, 2 = separator, 3..258 = the 256
// single bytes, then one id per merge rule in rule order. Every id maps to a
// distinct byte sequence (specials map to nothing).
class MergeTable {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kStart = 1;
  static constexpr TokenId kSep = 2;
  static constexpr TokenId kNumSpecials = 3;
  static constexpr TokenId kByteBase = kNumSpecials;
  static constexpr std::size_t kBaseVocab = kNumSpecials + 256;

  MergeTable();

  // Appends a rule; both sides must already be tokens and the merged byte
  // sequence must be new. Returns the new token id.
  TokenId add_merge(TokenId left, TokenId right);

  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t num_merges() const { return merges_.size(); }
  std::span<const std::pair<TokenId, TokenId>> merges() const { return merges_; }

  // Byte sequence of a non-special id. Throws ValidationError for unknown ids.
  const std::string& bytes_of(TokenId id) const;
  bool has_token(std::string_view bytes) const { return by_bytes_.contains(std::string(bytes)); }
  bool is_special(TokenId id) const { return id < kNumSpecials; }
  static TokenId byte_token(unsigned char b) { return kByteBase + b; }

  // Rank of the rule merging (left, right), or -1.
  std::ptrdiff_t rank_of(TokenId left, TokenId right) const;

  // The first `n` rules only.
  MergeTable prefix(std::size_t n) const;

  nlohmann::json to_json() const;
  static MergeTable from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static MergeTable load(const std::filesystem::path& path);

  bool operator==(const MergeTable& other) const { return merges_ == other.merges_; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> by_bytes_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::map<std::pair<TokenId, TokenId>, std::size_t> rank_;
};

struct TokenSeq {
  std::vector<TokenId> ids;
  bool truncated = false;

  bool operator==(const TokenSeq&) const = default;
};

// Greedy most-frequent-pair training. Ties go to the pair whose merged byte
// sequence is lexicographically smallest (then by left part). Stops at
// `target_vocab` ids (specials included) or when no pair occurs twice.
// Training is deterministic; `seed` is accepted for interface symmetry and
// does not influence the result.
MergeTable train_bpe(std::span<const std::string> corpus, std::size_t target_vocab, std::uint64_t seed = 0);

// Untruncated token ids for `text`.
std::vector<TokenId> encode_ids(const MergeTable& table, std::string_view text);

TokenSeq encode(const MergeTable& table, std::string_view text, std::size_t max_len);
std::string decode(const MergeTable& table, const TokenSeq& seq);

// [start] question [sep] choice, cut from the end to `max_len`.
TokenSeq encode_pair(const MergeTable& table, std::string_view question, std::string_view choice,
                     std::size_t max_len);

// [start] question [sep] c0 [sep] c1 ... , cut from the end to `max_len`.
TokenSeq encode_packed(const MergeTable& table, std::string_view question, std::span<const std::string> choices,
                       std::size_t max_len);

}  // namespace ltqa
