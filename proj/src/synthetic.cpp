#include "sgst/synthetic.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "sgst/errors.hpp"

namespace sgst {

SyntheticTaskSpec SyntheticTaskSpec::defaults(std::uint64_t seed) {
  SyntheticTaskSpec s;
  s.objects = {"man", "woman", "dog", "cat", "racket", "ball", "tree", "car", "table", "chair", "shirt", "hat"};
  s.attributes = {"tall", "red", "small", "young", "wooden", "green", "white", "old"};
  s.relations = {"holding", "near", "on", "wearing", "behind", "under", "beside", "riding"};
  s.seed = seed;
  return s;
}

SyntheticTaskSpec SyntheticTaskSpec::from_pool_json(std::string_view text, std::uint64_t seed) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(std::string("pool file: malformed JSON: ") + e.what());
  }
  SyntheticTaskSpec s = defaults(seed);
  auto read = [&](const char* key, std::vector<std::string>& out) {
    if (!doc.is_object() || !doc.contains(key) || !doc[key].is_array()) {
      throw IngestionError(std::string("pool file: \"") + key + "\" must be an array of strings");
    }
    out.clear();
    for (const auto& v : doc[key]) {
      if (!v.is_string()) throw IngestionError(std::string("pool file: \"") + key + "\" must contain strings");
      out.push_back(v.get<std::string>());
    }
  };
  read("objects", s.objects);
  read("attributes", s.attributes);
  read("relations", s.relations);
  try {
    s.validate();
  } catch (const ContractError& e) {
    throw IngestionError(std::string("pool file: ") + e.what());
  }
  return s;
}

void SyntheticTaskSpec::validate() const {
  auto check_pool = [](const std::vector<std::string>& pool, const char* name, std::size_t need) {
    if (pool.size() < need) {
      throw ContractError(std::string(name) + " pool needs at least " + std::to_string(need) + " labels");
    }
    for (const auto& label : pool) {
      if (label.empty() || label.find_first_of(" \t\r\n") != std::string::npos) {
        throw ContractError(std::string(name) + " labels must be single non-empty words");
      }
    }
    std::vector<std::string> sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ContractError(std::string(name) + " pool has duplicate labels");
    }
  };
  if (min_objects < 2 || min_objects > max_objects) throw ContractError("object range must satisfy 2 <= min <= max");
  if (min_relations < 1 || min_relations > max_relations) throw ContractError("relation range must satisfy 1 <= min <= max");
  check_pool(objects, "objects", max_objects);
  check_pool(attributes, "attributes", max_attributes);
  check_pool(relations, "relations", 1);
}

std::string template_paragraph(const RawSceneGraph& graph) {
  std::unordered_map<std::string, const RawObject*> by_id;
  for (const auto& o : graph.objects) by_id.emplace(o.id, &o);
  std::string out;
  auto append = [&](const std::string& word) {
    if (!out.empty()) out.push_back(' ');
    out += word;
  };
  auto noun_phrase = [&](const RawObject& o) {
    append("the");
    for (const auto& a : o.attributes) append(a);
    append(o.label);
  };
  for (const auto& r : graph.relations) {
    noun_phrase(*by_id.at(r.subject));
    append(r.predicate);
    noun_phrase(*by_id.at(r.object));
    append(".");
  }
  return out;
}

namespace {

// Portable draws: std distributions are implementation-defined, raw engine output is not.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::size_t draw_between(std::mt19937_64& rng, std::size_t lo, std::size_t hi) { return lo + draw(rng, hi - lo + 1); }

template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k && i + 1 < items.size(); ++i) {
    std::swap(items[i], items[i + draw(rng, items.size() - i)]);
  }
}

}  // namespace

Example generate_example(const SyntheticTaskSpec& spec, std::uint64_t index) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);

  const std::size_t n_objects = draw_between(rng, spec.min_objects, spec.max_objects);
  std::vector<std::string> labels = spec.objects;
  partial_shuffle(labels, n_objects, rng);

  RawSceneGraph g;
  for (std::size_t i = 0; i < n_objects; ++i) {
    RawObject o;
    o.id = "o" + std::to_string(i + 1);
    o.label = labels[i];
    const std::size_t n_attrs = draw_between(rng, 0, spec.max_attributes);
    std::vector<std::string> attrs = spec.attributes;
    partial_shuffle(attrs, n_attrs, rng);
    o.attributes.assign(attrs.begin(), attrs.begin() + static_cast<std::ptrdiff_t>(n_attrs));
    g.objects.push_back(std::move(o));
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n_objects; ++i) {
    for (std::size_t j = i + 1; j < n_objects; ++j) pairs.emplace_back(i, j);
  }
  const std::size_t max_rel = std::min(spec.max_relations, pairs.size());
  const std::size_t n_rel = draw_between(rng, std::min(spec.min_relations, max_rel), max_rel);
  partial_shuffle(pairs, n_rel, rng);
  pairs.resize(n_rel);
  std::sort(pairs.begin(), pairs.end());
  for (auto [i, j] : pairs) {
    g.relations.push_back({g.objects[i].id, spec.relations[draw(rng, spec.relations.size())], g.objects[j].id});
  }

  Example ex;
  ex.graph = std::move(g);
  ex.paragraph = template_paragraph(ex.graph);
  return ex;
}

std::vector<Example> generate_synthetic(const SyntheticTaskSpec& spec, std::size_t count, std::uint64_t first_index) {
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_example(spec, first_index + i));
  return out;
}

}  // namespace sgst
