#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adgs2s/error.hpp"

namespace adgs2s {

using TokenId = std::int32_t;

/// Token <-> id bijection with fixed reserved ids and frequency counts.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;

  static constexpr std::string_view kPadToken = "<PAD>";
  static constexpr std::string_view kBosToken = "<BOS>";
  static constexpr std::string_view kEosToken = "<EOS>";
  static constexpr std::string_view kUnkToken = "<UNK>";

  Vocabulary() {
    for (auto t : {kPadToken, kBosToken, kEosToken, kUnkToken}) insert(std::string(t), 0);
  }

  /// Ids are assigned in first-seen order after the reserved block.
  static Vocabulary build(std::span<const std::vector<std::string>> sequences) {
    Vocabulary v;
    for (const auto& seq : sequences)
      for (const auto& tok : seq) v.add(tok);
    return v;
  }

  TokenId add(const std::string& token, std::size_t count = 1) {
    auto it = ids_.find(token);
    if (it != ids_.end()) {
      counts_[static_cast<std::size_t>(it->second)] += count;
      return it->second;
    }
    return insert(token, count);
  }

  TokenId id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw InvalidInput("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t count(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (TokenId i : ids) out.push_back(token(i));
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
  }

 private:
  TokenId insert(std::string token, std::size_t count) {
    const auto id = static_cast<TokenId>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(std::move(token));
    counts_.push_back(count);
    return id;
  }

  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace adgs2s
