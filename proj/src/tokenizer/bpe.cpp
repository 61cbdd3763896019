#include <algorithm>
#include <unordered_map>

#include "ltqa/common.hpp"
#include "ltqa/tokenizer.hpp"

namespace ltqa {

namespace {

std::string to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out += kHex[b >> 4];
    out += kHex[b & 0xF];
  }
  return out;
}

std::string from_hex(std::string_view hex) {
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw FormatError("bad hex digit in merge table: '" + std::string(hex) + "'");
  };
  if (hex.size() % 2 != 0) throw FormatError("odd-length hex string in merge table");
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out += static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1]));
  }
  return out;
}

constexpr std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

// Replaces every left-to-right occurrence of (left, right) by `merged`.
void apply_merge(std::vector<TokenId>& ids, TokenId left, TokenId right, TokenId merged) {
  std::size_t write = 0;
  for (std::size_t read = 0; read < ids.size();) {
    if (read + 1 < ids.size() && ids[read] == left && ids[read + 1] == right) {
      ids[write++] = merged;
      read += 2;
    } else {
      ids[write++] = ids[read++];
    }
  }
  ids.resize(write);
}

}  // namespace

MergeTable::MergeTable() {
  vocab_.assign(kNumSpecials, std::string());
  for (int b = 0; b < 256; ++b) {
    vocab_.emplace_back(1, static_cast<char>(b));
    by_bytes_.emplace(vocab_.back(), static_cast<TokenId>(vocab_.size() - 1));
  }
}

TokenId MergeTable::add_merge(TokenId left, TokenId right) {
  if (left < kNumSpecials || right < kNumSpecials || left >= vocab_.size() || right >= vocab_.size()) {
    throw ValidationError("merge rule references an unknown or special token");
  }
  std::string merged = vocab_[left] + vocab_[right];
  if (by_bytes_.contains(merged)) {
    throw ValidationError("merge rule produces an existing token (" + to_hex(merged) + ")");
  }
  auto id = static_cast<TokenId>(vocab_.size());
  vocab_.push_back(merged);
  by_bytes_.emplace(std::move(merged), id);
  rank_.emplace(std::pair{left, right}, merges_.size());
  merges_.emplace_back(left, right);
  return id;
}

const std::string& MergeTable::bytes_of(TokenId id) const {
  if (id >= vocab_.size()) throw ValidationError("unknown token id " + std::to_string(id));
  return vocab_[id];
}

std::ptrdiff_t MergeTable::rank_of(TokenId left, TokenId right) const {
  auto it = rank_.find({left, right});
  return it == rank_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

MergeTable MergeTable::prefix(std::size_t n) const {
  MergeTable out;
  for (std::size_t i = 0; i < std::min(n, merges_.size()); ++i) out.add_merge(merges_[i].first, merges_[i].second);
  return out;
}

nlohmann::json MergeTable::to_json() const {
  auto merges = nlohmann::json::array();
  for (const auto& [left, right] : merges_) merges.push_back({to_hex(vocab_[left]), to_hex(vocab_[right])});
  return nlohmann::json{
      {"merges", std::move(merges)},
      {"specials", {{"pad", kPad}, {"start", kStart}, {"sep", kSep}}},
  };
}

MergeTable MergeTable::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("merges") || !doc["merges"].is_array()) {
    throw FormatError("merge table needs a 'merges' array");
  }
  if (doc.contains("specials")) {
    const auto& s = doc["specials"];
    if (s.value("pad", -1) != static_cast<int>(kPad) || s.value("start", -1) != static_cast<int>(kStart) ||
        s.value("sep", -1) != static_cast<int>(kSep)) {
      throw FormatError("merge table declares unsupported special ids");
    }
  }
  MergeTable table;
  std::size_t index = 0;
  for (const auto& rule : doc["merges"]) {
    if (!rule.is_array() || rule.size() != 2 || !rule[0].is_string() || !rule[1].is_string()) {
      throw FormatError("merge rule " + std::to_string(index) + " is not a pair of hex strings");
    }
    auto left = table.by_bytes_.find(from_hex(rule[0].get<std::string>()));
    auto right = table.by_bytes_.find(from_hex(rule[1].get<std::string>()));
    if (left == table.by_bytes_.end() || right == table.by_bytes_.end()) {
      throw ValidationError("merge rule " + std::to_string(index) + " references a token not yet defined");
    }
    table.add_merge(left->second, right->second);
    ++index;
  }
  return table;
}

void MergeTable::save(const std::filesystem::path& path) const { write_file(path, to_json().dump() + "\n"); }

MergeTable MergeTable::load(const std::filesystem::path& path) {
  auto text = read_file(path);
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": JSON parse error at byte " + std::to_string(e.byte), text);
  }
}

MergeTable train_bpe(std::span<const std::string> corpus, std::size_t target_vocab, std::uint64_t /*seed*/) {
  if (corpus.empty()) throw ValidationError("BPE training corpus is empty");
  if (target_vocab < MergeTable::kBaseVocab) {
    throw ValidationError("target vocabulary " + std::to_string(target_vocab) + " is below the base size " +
                          std::to_string(MergeTable::kBaseVocab));
  }

  // Identical texts are merged identically, so work on unique texts with
  // multiplicities. std::map gives a fixed iteration order.
  std::map<std::string, std::int64_t> unique;
  for (const auto& text : corpus) ++unique[text];
  std::vector<std::vector<TokenId>> words;
  std::vector<std::int64_t> weights;
  for (const auto& [text, n] : unique) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char b : text) ids.push_back(MergeTable::byte_token(b));
    words.push_back(std::move(ids));
    weights.push_back(n);
  }

  MergeTable table;
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  while (table.vocab_size() < target_vocab) {
    counts.clear();
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& ids = words[w];
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) counts[pair_key(ids[i], ids[i + 1])] += weights[w];
    }

    std::int64_t best_count = 0;
    TokenId best_left = 0;
    TokenId best_right = 0;
    std::string best_merged;
    for (const auto& [key, count] : counts) {
      if (count < 2 || count < best_count) continue;
      auto left = static_cast<TokenId>(key >> 32);
      auto right = static_cast<TokenId>(key & 0xFFFFFFFFu);
      std::string merged = table.bytes_of(left) + table.bytes_of(right);
      if (count == best_count) {
        if (merged > best_merged) continue;
        if (merged == best_merged && table.bytes_of(left) >= table.bytes_of(best_left)) continue;
      }
      // Pairs spelling an existing token cannot become new vocabulary entries.
      if (table.has_token(merged)) continue;
      best_count = count;
      best_left = left;
      best_right = right;
      best_merged = std::move(merged);
    }
    if (best_merged.empty()) break;

    TokenId merged_id = table.add_merge(best_left, best_right);
    for (auto& ids : words) apply_merge(ids, best_left, best_right, merged_id);
  }
  return table;
}

std::vector<TokenId> encode_ids(const MergeTable& table, std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char b : text) ids.push_back(MergeTable::byte_token(b));
  if (table.num_merges() == 0) return ids;

  // Lowest-rank pair first. A rule can only combine tokens created by earlier
  // rules, so this matches applying every rule in order.
  while (ids.size() > 1) {
    std::ptrdiff_t best_rank = -1;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto rank = table.rank_of(ids[i], ids[i + 1]);
      if (rank >= 0 && (best_rank < 0 || rank < best_rank)) best_rank = rank;
    }
    if (best_rank < 0) break;
    auto [left, right] = table.merges()[static_cast<std::size_t>(best_rank)];
    apply_merge(ids, left, right, static_cast<TokenId>(MergeTable::kBaseVocab + best_rank));
  }
  return ids;
}

TokenSeq encode(const MergeTable& table, std::string_view text, std::size_t max_len) {
  if (max_len < 1) throw ValidationError("max_len must be at least 1");
  TokenSeq seq;
  seq.ids = encode_ids(table, text);
  if (seq.ids.size() > max_len) {
    seq.ids.resize(max_len);
    seq.truncated = true;
  }
  return seq;
}

std::string decode(const MergeTable& table, const TokenSeq& seq) {
  std::string out;
  for (TokenId id : seq.ids) {
    if (table.is_special(id)) continue;
    out += table.bytes_of(id);
  }
  return out;
}

TokenSeq encode_pair(const MergeTable& table, std::string_view question, std::string_view choice,
                     std::size_t max_len) {
  std::string c(choice);
  return encode_packed(table, question, std::span<const std::string>(&c, 1), max_len);
}

TokenSeq encode_packed(const MergeTable& table, std::string_view question, std::span<const std::string> choices,
                       std::size_t max_len) {
  if (max_len < 1) throw ValidationError("max_len must be at least 1");
  TokenSeq seq;
  seq.ids.push_back(MergeTable::kStart);
  auto q = encode_ids(table, question);
  seq.ids.insert(seq.ids.end(), q.begin(), q.end());
  for (const auto& choice : choices) {
    seq.ids.push_back(MergeTable::kSep);
    auto c = encode_ids(table, choice);
    seq.ids.insert(seq.ids.end(), c.begin(), c.end());
  }
  if (seq.ids.size() > max_len) {
    seq.ids.resize(max_len);
    seq.truncated = true;
  }
  return seq;
}

}  // namespace ltqa
