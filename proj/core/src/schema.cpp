#include "agwm/schema.hpp"

#include <algorithm>
#include <sstream>

#include "agwm/errors.hpp"

namespace agwm {

std::vector<std::vector<int>> AffordanceSchema::parents() const {
  std::vector<std::vector<int>> out(nodes.size());
  for (const auto& [p, c] : edges) out[static_cast<std::size_t>(c)].push_back(p);
  return out;
}

void AffordanceSchema::validate() const {
  const int n = node_count();
  for (const auto& [p, c] : edges) {
    if (p < 0 || p >= n || c < 0 || c >= n)
      throw DataError("schema '" + name + "': edge index out of range");
    if (p == c) throw DataError("schema '" + name + "': self-edge");
  }
  // Kahn topological sort; leftover nodes mean a cycle.
  std::vector<int> indegree(static_cast<std::size_t>(n), 0);
  for (const auto& [p, c] : edges) indegree[static_cast<std::size_t>(c)]++;
  std::vector<int> queue;
  for (int v = 0; v < n; ++v)
    if (indegree[static_cast<std::size_t>(v)] == 0) queue.push_back(v);
  int visited = 0;
  while (!queue.empty()) {
    int v = queue.back();
    queue.pop_back();
    ++visited;
    for (const auto& [p, c] : edges)
      if (p == v && --indegree[static_cast<std::size_t>(c)] == 0) queue.push_back(c);
  }
  if (visited != n) throw DataError("schema '" + name + "': edge set has a cycle");
}

std::string AffordanceSchema::serialize() const {
  std::ostringstream out;
  out << "affordance-schema v1 " << name << "\n";
  for (const auto& node : nodes) out << "node " << node << "\n";
  for (const auto& [p, c] : edges)
    out << "edge " << nodes[static_cast<std::size_t>(p)] << " " << nodes[static_cast<std::size_t>(c)] << "\n";
  return out.str();
}

AffordanceSchema AffordanceSchema::parse(const std::string& text) {
  AffordanceSchema schema;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (!saw_header) {
      std::string version;
      ls >> version >> schema.name;
      if (kind != "affordance-schema" || version != "v1")
        throw DataError("unrecognized schema header: " + line);
      saw_header = true;
      continue;
    }
    if (kind == "node") {
      std::string node;
      ls >> node;
      schema.nodes.push_back(node);
    } else if (kind == "edge") {
      std::string parent, child;
      ls >> parent >> child;
      auto index_of = [&](const std::string& n) {
        auto it = std::find(schema.nodes.begin(), schema.nodes.end(), n);
        if (it == schema.nodes.end()) throw DataError("schema edge names unknown node: " + n);
        return static_cast<int>(it - schema.nodes.begin());
      };
      schema.edges.emplace_back(index_of(parent), index_of(child));
    } else {
      throw DataError("unrecognized schema line: " + line);
    }
  }
  if (!saw_header) throw DataError("empty schema text");
  schema.validate();
  return schema;
}

std::string AffordanceSchema::hash() const {
  const std::string text = serialize();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::vector<std::uint8_t> GraphState::packed() const {
  std::vector<std::uint8_t> out;
  out.reserve(node_active.size() * 2 + edge_active.size());
  out.insert(out.end(), node_active.begin(), node_active.end());
  out.insert(out.end(), frontier.begin(), frontier.end());
  out.insert(out.end(), edge_active.begin(), edge_active.end());
  return out;
}

std::vector<float> GraphState::packed_float() const {
  auto bits = packed();
  std::vector<float> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = bits[i] ? 1.0f : 0.0f;
  return out;
}

GraphState GraphState::all_zero(const AffordanceSchema& schema) {
  GraphState g;
  g.node_active.assign(static_cast<std::size_t>(schema.node_count()), 0);
  g.frontier.assign(static_cast<std::size_t>(schema.node_count()), 0);
  g.edge_active.assign(static_cast<std::size_t>(schema.edge_count()), 0);
  return g;
}

GraphState GraphState::from_packed(const AffordanceSchema& schema,
                                   std::span<const std::uint8_t> bits) {
  if (static_cast<int>(bits.size()) != schema.dim())
    throw DataError("packed graph size does not match schema dim");
  const std::size_t n = static_cast<std::size_t>(schema.node_count());
  const std::size_t e = static_cast<std::size_t>(schema.edge_count());
  GraphState g;
  g.node_active.assign(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(n));
  g.frontier.assign(bits.begin() + static_cast<std::ptrdiff_t>(n),
                    bits.begin() + static_cast<std::ptrdiff_t>(2 * n));
  g.edge_active.assign(bits.begin() + static_cast<std::ptrdiff_t>(2 * n),
                       bits.begin() + static_cast<std::ptrdiff_t>(2 * n + e));
  return g;
}

std::vector<std::uint8_t> frontier_mask(const AffordanceSchema& schema,
                                        std::span<const std::uint8_t> node_active) {
  if (static_cast<int>(node_active.size()) != schema.node_count())
    throw DataError("node_active size does not match schema");
  const auto parent_lists = schema.parents();
  std::vector<std::uint8_t> frontier(node_active.size(), 0);
  for (std::size_t v = 0; v < node_active.size(); ++v) {
    if (node_active[v]) continue;
    bool satisfied = true;
    for (int p : parent_lists[v])
      if (!node_active[static_cast<std::size_t>(p)]) {
        satisfied = false;
        break;
      }
    frontier[v] = satisfied ? 1 : 0;
  }
  return frontier;
}

GraphState graph_from_node_active(const AffordanceSchema& schema,
                                  std::vector<std::uint8_t> node_active) {
  GraphState g;
  g.frontier = frontier_mask(schema, node_active);
  g.edge_active.resize(schema.edges.size());
  for (std::size_t i = 0; i < schema.edges.size(); ++i) {
    const auto& [p, c] = schema.edges[i];
    g.edge_active[i] =
        (node_active[static_cast<std::size_t>(p)] && node_active[static_cast<std::size_t>(c)]) ? 1 : 0;
  }
  g.node_active = std::move(node_active);
  return g;
}

int sc_label(const GraphState& g, const GraphState& g_next) {
  if (g.node_active.size() != g_next.node_active.size() ||
      g.edge_active.size() != g_next.edge_active.size())
    throw DataError("sc_label: graph states have mismatched schemas");
  return g == g_next ? 0 : 1;
}

GraphState monotone_update(const AffordanceSchema& schema, const GraphState& g,
                           std::span<const float> probs, float threshold) {
  if (static_cast<int>(probs.size()) != schema.dim())
    throw DataError("monotone_update: probability vector does not match schema dim");
  if (static_cast<int>(g.node_active.size()) != schema.node_count())
    throw DataError("monotone_update: graph state does not match schema");
  std::vector<std::uint8_t> next = g.node_active;
  for (std::size_t v = 0; v < next.size(); ++v) {
    if (!next[v] && g.frontier[v] && probs[v] >= threshold) next[v] = 1;
  }
  return graph_from_node_active(schema, std::move(next));
}

GraphState raw_threshold_update(const AffordanceSchema& schema, std::span<const float> probs,
                                float threshold) {
  if (static_cast<int>(probs.size()) != schema.dim())
    throw DataError("raw_threshold_update: probability vector does not match schema dim");
  std::vector<std::uint8_t> bits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) bits[i] = probs[i] >= threshold ? 1 : 0;
  return GraphState::from_packed(schema, bits);
}

namespace {

AffordanceSchema chain_schema(std::string name, int items) {
  AffordanceSchema schema;
  schema.name = std::move(name);
  for (int i = 0; i < items; ++i) schema.nodes.push_back("item" + std::to_string(i + 1));
  for (int i = 0; i + 1 < items; ++i) schema.edges.emplace_back(i, i + 1);
  return schema;
}

AffordanceSchema independent_schema(std::string name, int items) {
  AffordanceSchema schema;
  schema.name = std::move(name);
  for (int i = 0; i < items; ++i) schema.nodes.push_back("item" + std::to_string(i + 1));
  return schema;
}

}  // namespace

AffordanceSchema schema_keydungeon() {
  AffordanceSchema schema;
  schema.name = "keydungeon";
  schema.nodes = {"find_key", "pickup_key", "reach_door", "unlock_door", "reach_goal"};
  // unlock_door requires both the key in hand and having reached the door.
  schema.edges = {{0, 1}, {1, 3}, {2, 3}, {3, 4}};
  return schema;
}

AffordanceSchema schema_keydungeon_chain4() {
  AffordanceSchema schema;
  schema.name = "keydungeon_chain4";
  schema.nodes = {"unlock_door1", "unlock_door2", "unlock_door3", "unlock_door4", "reach_goal"};
  schema.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  return schema;
}

AffordanceSchema schema_forage() { return independent_schema("forage", 6); }
AffordanceSchema schema_harvest() { return independent_schema("harvest", 8); }
AffordanceSchema schema_relay() { return chain_schema("relay", 4); }
AffordanceSchema schema_cascade() { return chain_schema("cascade", 5); }

AffordanceSchema schema_by_name(const std::string& name) {
  if (name == "keydungeon") return schema_keydungeon();
  if (name == "keydungeon_chain4") return schema_keydungeon_chain4();
  if (name == "forage") return schema_forage();
  if (name == "harvest") return schema_harvest();
  if (name == "relay") return schema_relay();
  if (name == "cascade") return schema_cascade();
  throw DataError("unknown schema name: " + name);
}

}  // namespace agwm
