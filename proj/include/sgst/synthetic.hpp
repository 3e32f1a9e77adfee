#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sgst/scene_graph.hpp"

namespace sgst {

// Label pools and size ranges of the synthetic graph -> paragraph task.
struct SyntheticTaskSpec {
  std::vector<std::string> objects;
  std::vector<std::string> attributes;
  std::vector<std::string> relations;
  std::size_t min_objects = 2;
  std::size_t max_objects = 6;
  std::size_t min_relations = 1;
  std::size_t max_relations = 5;
  std::size_t max_attributes = 2;
  std::uint64_t seed = 0;

  static SyntheticTaskSpec defaults(std::uint64_t seed);
  // {"objects": [...], "attributes": [...], "relations": [...]}; size ranges keep their defaults.
  static SyntheticTaskSpec from_pool_json(std::string_view text, std::uint64_t seed);
  void validate() const;
};

// "the {attrs} {subject} {predicate} the {attrs} {object} ." for each relation in order.
std::string template_paragraph(const RawSceneGraph& graph);

// Pure function of (spec, index). Objects get distinct labels; relations link object i to a
// later object j, listed in (i, j) order, so the object graph is acyclic.
Example generate_example(const SyntheticTaskSpec& spec, std::uint64_t index);
std::vector<Example> generate_synthetic(const SyntheticTaskSpec& spec, std::size_t count, std::uint64_t first_index = 0);

}  // namespace sgst
