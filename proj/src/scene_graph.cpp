#include "sgst/scene_graph.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "sgst/errors.hpp"

namespace sgst {

using nlohmann::json;

std::string_view vertex_kind_name(VertexKind kind) {
  switch (kind) {
    case VertexKind::Object: return "object";
    case VertexKind::Relation: return "relation";
    case VertexKind::Attribute: return "attribute";
    case VertexKind::Global: return "global";
  }
  return "unknown";
}

std::size_t BoolMatrix::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

SceneGraph::SceneGraph(std::vector<Vertex> vertices, BoolMatrix adjacency)
    : vertices_(std::move(vertices)), adjacency_(std::move(adjacency)) {
  if (adjacency_.size() != vertices_.size()) throw ContractError("adjacency size does not match vertex count");
}

std::optional<std::size_t> SceneGraph::global_index() const {
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    if (vertices_[i].kind == VertexKind::Global) return i;
  }
  return std::nullopt;
}

void validate_raw(const RawSceneGraph& raw) {
  if (raw.objects.empty()) throw IngestionError("objects: scene graph must contain at least one object");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < raw.objects.size(); ++i) {
    const auto& obj = raw.objects[i];
    if (!index.emplace(obj.id, i).second) {
      throw IngestionError("objects[" + std::to_string(i) + "].id: duplicate object id \"" + obj.id + "\"");
    }
  }
  std::vector<std::vector<std::size_t>> out(raw.objects.size());
  for (std::size_t r = 0; r < raw.relations.size(); ++r) {
    const auto& rel = raw.relations[r];
    const std::string where = "relations[" + std::to_string(r) + "]";
    auto s = index.find(rel.subject);
    if (s == index.end()) throw IngestionError(where + ".subject: unknown object id \"" + rel.subject + "\"");
    auto o = index.find(rel.object);
    if (o == index.end()) throw IngestionError(where + ".object: unknown object id \"" + rel.object + "\"");
    out[s->second].push_back(o->second);
  }
  // Object-level cycles (including self relations) are rejected, not repaired.
  std::vector<int> state(raw.objects.size(), 0);
  std::function<void(std::size_t)> visit = [&](std::size_t u) {
    state[u] = 1;
    for (std::size_t w : out[u]) {
      if (state[w] == 1) {
        throw IngestionError("relations: object-level cycle through \"" + raw.objects[w].id + "\"");
      }
      if (state[w] == 0) visit(w);
    }
    state[u] = 2;
  };
  for (std::size_t u = 0; u < raw.objects.size(); ++u) {
    if (state[u] == 0) visit(u);
  }
}

SceneGraph rewrite_relations(const RawSceneGraph& raw) {
  validate_raw(raw);
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Vertex> vertices;
  for (const auto& obj : raw.objects) {
    index.emplace(obj.id, vertices.size());
    vertices.push_back({VertexKind::Object, obj.label});
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& rel : raw.relations) {
    const std::size_t p = vertices.size();
    vertices.push_back({VertexKind::Relation, rel.predicate});
    edges.emplace_back(index.at(rel.subject), p);
    edges.emplace_back(p, index.at(rel.object));
  }
  for (std::size_t o = 0; o < raw.objects.size(); ++o) {
    for (const auto& attr : raw.objects[o].attributes) {
      edges.emplace_back(o, vertices.size());
      vertices.push_back({VertexKind::Attribute, attr});
    }
  }
  BoolMatrix adj(vertices.size());
  for (auto [from, to] : edges) adj.set(from, to);
  return SceneGraph(std::move(vertices), std::move(adj));
}

SceneGraph add_global_vertex(const SceneGraph& g) {
  if (g.size() == 0) throw ContractError("cannot add a global vertex to an empty graph");
  if (g.global_index()) throw ContractError("graph already has a global vertex");
  const std::size_t m = g.size();
  std::vector<Vertex> vertices = g.vertices();
  vertices.push_back({VertexKind::Global, std::string(kGlobalLabel)});
  BoolMatrix adj(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) adj.set(i, j, g.has_edge(i, j));
    adj.set(i, m);
    adj.set(m, i);
  }
  return SceneGraph(std::move(vertices), std::move(adj));
}

BoolMatrix neighborhood_mask(const SceneGraph& g, const NeighborhoodOptions& options) {
  const std::size_t m = g.size();
  BoolMatrix mask(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (options.self_loops) mask.set(i, i);
    for (std::size_t j = 0; j < m; ++j) {
      if (g.has_edge(i, j) || (options.symmetric && g.has_edge(j, i))) mask.set(i, j);
    }
  }
  return mask;
}

DagReport validate_dag(const SceneGraph& g) {
  const std::size_t m = g.size();
  const auto global = g.global_index();
  auto active = [&](std::size_t v) { return !global || v != *global; };
  std::vector<std::size_t> indegree(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (active(i) && active(j) && g.has_edge(i, j)) ++indegree[j];
    }
  }
  // Kahn's algorithm, always taking the smallest ready index.
  std::set<std::size_t> ready;
  for (std::size_t v = 0; v < m; ++v) {
    if (active(v) && indegree[v] == 0) ready.insert(v);
  }
  DagReport report;
  while (!ready.empty()) {
    const std::size_t u = *ready.begin();
    ready.erase(ready.begin());
    report.order.push_back(u);
    for (std::size_t w = 0; w < m; ++w) {
      if (active(w) && g.has_edge(u, w) && --indegree[w] == 0) ready.insert(w);
    }
  }
  const std::size_t expected = m - (global ? 1 : 0);
  if (report.order.size() == expected) return report;

  report.ok = false;
  report.order.clear();
  std::vector<int> state(m, 0);
  std::vector<std::size_t> stack;
  std::function<bool(std::size_t)> dfs = [&](std::size_t u) {
    state[u] = 1;
    stack.push_back(u);
    for (std::size_t w = 0; w < m; ++w) {
      if (!active(w) || !g.has_edge(u, w)) continue;
      if (state[w] == 1) {
        auto start = std::find(stack.begin(), stack.end(), w);
        report.cycle.assign(start, stack.end());
        return true;
      }
      if (state[w] == 0 && dfs(w)) return true;
    }
    stack.pop_back();
    state[u] = 2;
    return false;
  };
  for (std::size_t v = 0; v < m; ++v) {
    if (active(v) && state[v] == 0 && dfs(v)) break;
  }
  return report;
}

namespace {

const json& require_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw IngestionError(where + ": expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw IngestionError(where + "." + key + ": missing field");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require_field(obj, key, where);
  if (!v.is_string()) throw IngestionError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

RawSceneGraph graph_from_json(const json& doc) {
  RawSceneGraph raw;
  const json& objects = require_field(doc, "objects", "graph");
  if (!objects.is_array()) throw IngestionError("graph.objects: expected an array");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string where = "objects[" + std::to_string(i) + "]";
    RawObject obj;
    obj.id = require_string(objects[i], "id", where);
    obj.label = require_string(objects[i], "label", where);
    auto attrs = objects[i].find("attributes");
    if (attrs != objects[i].end()) {
      if (!attrs->is_array()) throw IngestionError(where + ".attributes: expected an array");
      for (const auto& a : *attrs) {
        if (!a.is_string()) throw IngestionError(where + ".attributes: expected strings");
        obj.attributes.push_back(a.get<std::string>());
      }
    }
    raw.objects.push_back(std::move(obj));
  }
  auto rels = doc.find("relations");
  if (rels != doc.end()) {
    if (!rels->is_array()) throw IngestionError("graph.relations: expected an array");
    for (std::size_t i = 0; i < rels->size(); ++i) {
      const std::string where = "relations[" + std::to_string(i) + "]";
      const json& r = (*rels)[i];
      raw.relations.push_back(
          {require_string(r, "subject", where), require_string(r, "predicate", where), require_string(r, "object", where)});
    }
  }
  validate_raw(raw);
  return raw;
}

json graph_to_json(const RawSceneGraph& raw) {
  json objects = json::array();
  for (const auto& o : raw.objects) {
    objects.push_back({{"id", o.id}, {"label", o.label}, {"attributes", o.attributes}});
  }
  json relations = json::array();
  for (const auto& r : raw.relations) {
    relations.push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}});
  }
  return {{"objects", std::move(objects)}, {"relations", std::move(relations)}};
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw IngestionError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

RawSceneGraph parse_scene_graph(std::string_view text) { return graph_from_json(parse_json(text)); }

std::string serialize_scene_graph(const RawSceneGraph& raw) { return graph_to_json(raw).dump(); }

std::vector<Example> read_dataset(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json doc = parse_json(line);
      Example ex;
      ex.graph = graph_from_json(require_field(doc, "graph", "example"));
      ex.paragraph = require_string(doc, "paragraph", "example");
      auto id = doc.find("id");
      if (id != doc.end()) {
        ex.id = id->is_string() ? id->get<std::string>() : id->dump();
      } else {
        ex.id = std::to_string(out.size());
      }
      out.push_back(std::move(ex));
    } catch (const IngestionError& e) {
      throw IngestionError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Example> read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset file " + path);
  return read_dataset(in);
}

std::string serialize_example(const Example& ex) {
  json doc;
  if (!ex.id.empty()) doc["id"] = ex.id;
  doc["graph"] = graph_to_json(ex.graph);
  doc["paragraph"] = ex.paragraph;
  return doc.dump();
}

}  // namespace sgst
