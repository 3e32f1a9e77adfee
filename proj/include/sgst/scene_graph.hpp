#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sgst {

// Scene graph as it arrives from JSON: labeled objects with attributes and labeled relations.
struct RawObject {
  std::string id;
  std::string label;
  std::vector<std::string> attributes;
};

struct RawRelation {
  std::string subject;
  std::string predicate;
  std::string object;
};

struct RawSceneGraph {
  std::vector<RawObject> objects;
  std::vector<RawRelation> relations;
};

enum class VertexKind { Object, Relation, Attribute, Global };

std::string_view vertex_kind_name(VertexKind kind);

struct Vertex {
  VertexKind kind;
  std::string label;
};

inline constexpr std::string_view kGlobalLabel = "<global>";

// Square boolean matrix stored row-major; row = source.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  explicit BoolMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool get(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) { bits_[i * n_ + j] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::size_t count() const;

  bool operator==(const BoolMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Unlabeled-edge DAG over typed vertices. Vertex order is canonical: objects in input order,
// then relation vertices in input order, then attribute vertices grouped by object, global last.
class SceneGraph {
 public:
  SceneGraph() = default;
  SceneGraph(std::vector<Vertex> vertices, BoolMatrix adjacency);

  std::size_t size() const { return vertices_.size(); }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const Vertex& vertex(std::size_t i) const { return vertices_.at(i); }
  const BoolMatrix& adjacency() const { return adjacency_; }
  bool has_edge(std::size_t from, std::size_t to) const { return adjacency_.get(from, to); }
  std::size_t edge_count() const { return adjacency_.count(); }
  std::optional<std::size_t> global_index() const;

 private:
  std::vector<Vertex> vertices_;
  BoolMatrix adjacency_;
};

// Attention neighborhood rule. Defaults: a vertex sees itself and its one-hop in/out neighbors.
struct NeighborhoodOptions {
  bool self_loops = true;
  bool symmetric = true;
};

// Turns every labeled relation (s, p, o) into a vertex p with edges s->p and p->o, and every
// attribute a of object o into a vertex a with edge o->a.
SceneGraph rewrite_relations(const RawSceneGraph& raw);

// Appends the global vertex with edges to and from every other vertex.
SceneGraph add_global_vertex(const SceneGraph& g);

BoolMatrix neighborhood_mask(const SceneGraph& g, const NeighborhoodOptions& options = {});

struct DagReport {
  bool ok = true;
  std::vector<std::size_t> order;  // topological order of non-global vertices when ok
  std::vector<std::size_t> cycle;  // one witness cycle otherwise
};

DagReport validate_dag(const SceneGraph& g);

// Checks id uniqueness, relation endpoints, non-emptiness and object-level acyclicity.
void validate_raw(const RawSceneGraph& raw);

// Parses one scene-graph JSON document and validates it.
RawSceneGraph parse_scene_graph(std::string_view text);
// Canonical compact JSON of a graph.
std::string serialize_scene_graph(const RawSceneGraph& raw);

// One graph/paragraph pair of a JSON-lines dataset.
struct Example {
  std::string id;
  RawSceneGraph graph;
  std::string paragraph;
};

// Reads {"graph": ..., "paragraph": ...} lines; an optional "id" field names the graph,
// otherwise the zero-based line index is used. Blank lines are skipped.
std::vector<Example> read_dataset(std::istream& in);
std::vector<Example> read_dataset_file(const std::string& path);
std::string serialize_example(const Example& ex);

}  // namespace sgst
