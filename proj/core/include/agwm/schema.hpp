#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace agwm {

/// A fixed DAG of affordance nodes and directed prerequisite edges. The packed
/// graph vector has dim() = 2N + E bits laid out as
/// [node_active | frontier | edge_active].
struct AffordanceSchema {
  std::string name;
  std::vector<std::string> nodes;
  std::vector<std::pair<int, int>> edges;  // (parent, child) indices into nodes

  int node_count() const { return static_cast<int>(nodes.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  int dim() const { return 2 * node_count() + edge_count(); }

  /// Parent indices of every node, in edge-list order.
  std::vector<std::vector<int>> parents() const;

  /// Throws DataError if the edge set has a cycle or dangling index.
  void validate() const;

  /// Text form: header, then one `node <name>` line per node, then one
  /// `edge <parent> <child>` line per edge. Stable, diffable, hashable.
  std::string serialize() const;
  static AffordanceSchema parse(const std::string& text);

  /// FNV-1a over serialize(), hex-encoded. Embedded in dataset manifests and
  /// checkpoints so mismatched pairings are refused.
  std::string hash() const;

  bool operator==(const AffordanceSchema&) const = default;
};

/// Binary graph state over a schema: which nodes are achieved, which are
/// reachable next, and which prerequisite edges have both endpoints achieved.
struct GraphState {
  std::vector<std::uint8_t> node_active;
  std::vector<std::uint8_t> frontier;
  std::vector<std::uint8_t> edge_active;

  bool operator==(const GraphState&) const = default;

  /// Concatenated bit vector [node_active | frontier | edge_active], one byte
  /// per bit (0/1).
  std::vector<std::uint8_t> packed() const;

  /// Same bits as float 0.0/1.0, the network-facing encoding.
  std::vector<float> packed_float() const;

  static GraphState all_zero(const AffordanceSchema& schema);
  static GraphState from_packed(const AffordanceSchema& schema, std::span<const std::uint8_t> bits);
};

/// frontier[v] = 1 iff node_active[v] = 0 and every parent of v is active.
/// Root nodes are vacuously parent-satisfied.
std::vector<std::uint8_t> frontier_mask(const AffordanceSchema& schema,
                                        std::span<const std::uint8_t> node_active);

/// Builds the full GraphState from a node_active vector: frontier and
/// edge_active are recomputed analytically, never supplied by a caller.
GraphState graph_from_node_active(const AffordanceSchema& schema,
                                  std::vector<std::uint8_t> node_active);

/// 1 iff the packed vectors differ in any bit. Throws DataError on dim
/// mismatch.
int sc_label(const GraphState& g, const GraphState& g_next);

/// Inference-time graph evolution. Candidate node activations are taken from
/// `probs` (per-dimension probabilities for the full packed vector; only the
/// node section is consulted), gated to the current frontier, and OR-ed with
/// the already-active nodes. Frontier and edge sections are recomputed.
/// Never clears a set node bit.
GraphState monotone_update(const AffordanceSchema& schema, const GraphState& g,
                           std::span<const float> probs, float threshold);

/// Ablation path: thresholds all dim() probabilities directly into a
/// GraphState with no OR, no frontier gating and no recomputation. The result
/// may violate every structural invariant; that is the point of the ablation.
GraphState raw_threshold_update(const AffordanceSchema& schema, std::span<const float> probs,
                                float threshold);

/// The built-in schemas. Item-chain environments use one node per item;
/// forage/harvest items are independent (no edges), relay/cascade items form
/// a single prerequisite chain. The two keydungeon schemas share dim() = 14.
AffordanceSchema schema_keydungeon();
AffordanceSchema schema_keydungeon_chain4();
AffordanceSchema schema_forage();
AffordanceSchema schema_harvest();
AffordanceSchema schema_relay();
AffordanceSchema schema_cascade();

/// Lookup by name ("keydungeon", "keydungeon_chain4", "forage", ...).
AffordanceSchema schema_by_name(const std::string& name);

}  // namespace agwm
