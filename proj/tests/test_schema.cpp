#include <doctest.h>

#include <set>

#include "agwm/errors.hpp"
#include "agwm/rng.hpp"
#include "agwm/schema.hpp"

using namespace agwm;

namespace {

// Definitional frontier: v is on the frontier iff it is inactive and every
// parent is active. Independent of the production bit loops.
std::vector<std::uint8_t> frontier_oracle(const AffordanceSchema& schema,
                                          const std::vector<std::uint8_t>& active) {
  std::vector<std::uint8_t> out(active.size(), 0);
  for (int v = 0; v < schema.node_count(); ++v) {
    if (active[static_cast<std::size_t>(v)]) continue;
    bool all_parents = true;
    for (const auto& [p, c] : schema.edges)
      if (c == v && !active[static_cast<std::size_t>(p)]) all_parents = false;
    out[static_cast<std::size_t>(v)] = all_parents ? 1 : 0;
  }
  return out;
}

std::vector<AffordanceSchema> all_schemas() {
  return {schema_keydungeon(), schema_keydungeon_chain4(), schema_forage(),
          schema_harvest(),    schema_relay(),             schema_cascade()};
}

std::vector<std::uint8_t> bits_from_mask(unsigned mask, int n) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) bits[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
  return bits;
}

}  // namespace

TEST_CASE("built-in schema dimensions") {
  CHECK(schema_keydungeon().node_count() == 5);
  CHECK(schema_keydungeon().edge_count() == 4);
  CHECK(schema_keydungeon().dim() == 14);
  CHECK(schema_keydungeon_chain4().dim() == 14);
  CHECK(schema_forage().node_count() == 6);
  CHECK(schema_forage().edge_count() == 0);
  CHECK(schema_forage().dim() == 12);
  CHECK(schema_harvest().node_count() == 8);
  CHECK(schema_relay().node_count() == 4);
  CHECK(schema_relay().edge_count() == 3);
  CHECK(schema_cascade().node_count() == 5);
  CHECK(schema_cascade().edge_count() == 4);
  for (const auto& schema : all_schemas()) CHECK_NOTHROW(schema.validate());
}

TEST_CASE("cycle detection") {
  AffordanceSchema bad;
  bad.name = "bad";
  bad.nodes = {"a", "b", "c"};
  bad.edges = {{0, 1}, {1, 2}, {2, 0}};
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("frontier_mask matches the definitional oracle exhaustively") {
  for (const auto& schema : all_schemas()) {
    const int n = schema.node_count();
    REQUIRE(n <= 8);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      const auto active = bits_from_mask(mask, n);
      CHECK(frontier_mask(schema, active) == frontier_oracle(schema, active));
    }
  }
}

TEST_CASE("frontier of the empty and full activation vectors") {
  for (const auto& schema : all_schemas()) {
    const int n = schema.node_count();
    // All-zero: exactly the roots.
    std::set<int> roots;
    for (int v = 0; v < n; ++v) roots.insert(v);
    for (const auto& [p, c] : schema.edges) roots.erase(c);
    const auto empty_frontier = frontier_mask(schema, std::vector<std::uint8_t>(n, 0));
    for (int v = 0; v < n; ++v)
      CHECK(static_cast<bool>(empty_frontier[static_cast<std::size_t>(v)]) == (roots.count(v) > 0));
    // All-one: nothing left.
    const auto full = frontier_mask(schema, std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1));
    for (const auto bit : full) CHECK(bit == 0);
  }
}

TEST_CASE("cascade frontier example") {
  const auto schema = schema_cascade();
  const auto frontier = frontier_mask(schema, {1, 1, 0, 0, 0});
  CHECK(frontier == std::vector<std::uint8_t>{0, 0, 1, 0, 0});
}

TEST_CASE("relay graph state after collecting items 1-2") {
  const auto schema = schema_relay();
  const auto g = graph_from_node_active(schema, {1, 1, 0, 0});
  CHECK(g.node_active == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(g.frontier == std::vector<std::uint8_t>{0, 0, 1, 0});
  CHECK(g.edge_active == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("edge bits require both endpoints") {
  for (const auto& schema : all_schemas()) {
    const int n = schema.node_count();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      const auto g = graph_from_node_active(schema, bits_from_mask(mask, n));
      for (std::size_t e = 0; e < schema.edges.size(); ++e) {
        const auto& [p, c] = schema.edges[e];
        CHECK(static_cast<bool>(g.edge_active[e]) ==
              (g.node_active[static_cast<std::size_t>(p)] && g.node_active[static_cast<std::size_t>(c)]));
      }
    }
  }
}

TEST_CASE("sc_label") {
  const auto schema = schema_relay();
  const auto a = graph_from_node_active(schema, {1, 0, 0, 0});
  const auto b = graph_from_node_active(schema, {1, 1, 0, 0});
  CHECK(sc_label(a, a) == 0);
  CHECK(sc_label(a, b) == 1);
  const auto kd = graph_from_node_active(schema_keydungeon(), {0, 0, 0, 0, 0});
  CHECK_THROWS_AS(sc_label(a, kd), DataError);
}

TEST_CASE("any node_active change forces a packed difference") {
  const auto schema = schema_cascade();
  const int n = schema.node_count();
  for (unsigned m1 = 0; m1 < (1u << n); ++m1)
    for (unsigned m2 = 0; m2 < (1u << n); ++m2) {
      const auto a = graph_from_node_active(schema, bits_from_mask(m1, n));
      const auto b = graph_from_node_active(schema, bits_from_mask(m2, n));
      CHECK(sc_label(a, b) == (m1 != m2 ? 1 : 0));
    }
}

TEST_CASE("monotone_update with all-zero probabilities is the identity") {
  for (const auto& schema : all_schemas()) {
    const int n = schema.node_count();
    const std::vector<float> zeros(static_cast<std::size_t>(schema.dim()), 0.0f);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      const auto g = graph_from_node_active(schema, bits_from_mask(mask, n));
      CHECK(monotone_update(schema, g, zeros, 0.5f) == g);
    }
  }
}

TEST_CASE("monotone_update activates a frontier node") {
  const auto schema = schema_relay();
  const auto g = graph_from_node_active(schema, {1, 0, 0, 0});
  std::vector<float> probs(static_cast<std::size_t>(schema.dim()), 0.0f);
  probs[1] = 0.9f;
  const auto next = monotone_update(schema, g, probs, 0.5f);
  CHECK(next.node_active == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(next.frontier == std::vector<std::uint8_t>{0, 0, 1, 0});
}

TEST_CASE("monotone_update refuses nodes with unmet prerequisites") {
  const auto schema = schema_relay();
  const auto g = graph_from_node_active(schema, {1, 0, 0, 0});
  std::vector<float> probs(static_cast<std::size_t>(schema.dim()), 0.0f);
  probs[3] = 0.9f;  // item 4 has an unmet chain prerequisite
  const auto next = monotone_update(schema, g, probs, 0.5f);
  CHECK(next == g);
}

TEST_CASE("monotone_update never clears bits and preserves chain legality") {
  Rng rng(123);
  for (const auto& schema : {schema_relay(), schema_cascade(), schema_keydungeon()}) {
    const int n = schema.node_count();
    GraphState g = graph_from_node_active(schema, std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0));
    int prev_count = 0;
    for (int step = 0; step < 200; ++step) {
      std::vector<float> probs(static_cast<std::size_t>(schema.dim()));
      for (auto& p : probs) p = static_cast<float>(rng.uniform());
      const GraphState next = monotone_update(schema, g, probs, 0.5f);
      int count = 0;
      for (std::size_t v = 0; v < next.node_active.size(); ++v) {
        CHECK(next.node_active[v] >= g.node_active[v]);
        count += next.node_active[v];
      }
      CHECK(count >= prev_count);
      // Downward closure: every active node has all parents active.
      for (const auto& [p, c] : schema.edges)
        if (next.node_active[static_cast<std::size_t>(c)])
          CHECK(next.node_active[static_cast<std::size_t>(p)] == 1);
      prev_count = count;
      g = next;
    }
  }
}

TEST_CASE("raw threshold update ignores structure") {
  const auto schema = schema_relay();
  std::vector<float> probs(static_cast<std::size_t>(schema.dim()), 0.0f);
  probs[3] = 0.9f;  // node with unmet prerequisites
  probs[5] = 0.9f;  // frontier bit set arbitrarily
  const auto g = raw_threshold_update(schema, probs, 0.5f);
  CHECK(g.node_active == std::vector<std::uint8_t>{0, 0, 0, 1});
  CHECK(g.frontier == std::vector<std::uint8_t>{0, 1, 0, 0});
}

TEST_CASE("serialization round-trips and hashes are stable") {
  for (const auto& schema : all_schemas()) {
    const auto text = schema.serialize();
    const auto parsed = AffordanceSchema::parse(text);
    CHECK(parsed == schema);
    CHECK(parsed.hash() == schema.hash());
  }
  CHECK(schema_keydungeon().hash() != schema_keydungeon_chain4().hash());
  CHECK(schema_relay().hash() != schema_cascade().hash());
}

TEST_CASE("packed layout is [node | frontier | edge]") {
  const auto schema = schema_relay();
  const auto g = graph_from_node_active(schema, {1, 0, 0, 0});
  const auto packed = g.packed();
  REQUIRE(static_cast<int>(packed.size()) == schema.dim());
  CHECK(packed[0] == 1);  // node 1
  CHECK(packed[4] == 0);  // frontier of node 1 (already active)
  CHECK(packed[5] == 1);  // frontier of node 2
  const auto restored = GraphState::from_packed(schema, packed);
  CHECK(restored == g);
}
