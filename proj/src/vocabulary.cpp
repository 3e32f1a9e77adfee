#include "sgst/vocabulary.hpp"

#include <cctype>

#include "sgst/errors.hpp"

namespace sgst {

namespace {
const std::vector<std::string> kReserved = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string normalize_label(std::string_view label) {
  std::string out(label);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

Vocabulary::Vocabulary() {
  for (const auto& t : kReserved) add(t);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  if (tokens.size() < kReserved.size() || !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
    throw FormatError("vocabulary must start with the reserved tokens <pad> <bos> <eos> <unk>");
  }
  for (const auto& t : tokens) {
    if (index_.count(t)) throw FormatError("duplicate vocabulary token \"" + t + "\"");
    add(t);
  }
}

int Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw ContractError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < static_cast<int>(kReserved.size())) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<Example>& examples) {
  Vocabulary vocab;
  vocab.add(kGlobalLabel);
  for (const auto& ex : examples) {
    for (const auto& t : tokenize(ex.paragraph)) vocab.add(t);
  }
  for (const auto& ex : examples) {
    for (const auto& o : ex.graph.objects) {
      vocab.add(normalize_label(o.label));
      for (const auto& a : o.attributes) vocab.add(normalize_label(a));
    }
    for (const auto& r : ex.graph.relations) vocab.add(normalize_label(r.predicate));
  }
  return vocab;
}

}  // namespace sgst
