#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sgst/scene_graph.hpp"

namespace sgst {

// Lowercased whitespace tokenization.
std::vector<std::string> tokenize(std::string_view text);

// Token <-> id bijection. Ids 0..3 are reserved for PAD, BOS, EOS and UNK.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();
  // Rebuilds from a full token list whose first four entries are the reserved tokens.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int add(std::string_view token);
  // Unknown tokens map to kUnk.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  // Joins tokens with spaces, skipping reserved ids.
  std::string decode(std::span<const int> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Vocabulary over target paragraphs plus every graph label, in first-seen order.
Vocabulary build_vocabulary(const std::vector<Example>& examples);

// Lowercased vertex label as stored in the vocabulary.
std::string normalize_label(std::string_view label);

}  // namespace sgst
