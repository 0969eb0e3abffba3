#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "agwm/rng.hpp"
#include "agwm/schema.hpp"

namespace agwm {

enum class EnvName { KeyDungeon, Forage, Harvest, Relay, Cascade };

std::string to_string(EnvName name);
EnvName env_from_string(const std::string& name);

enum class OodVariant { CrossColor, Chain4L5 };

/// Static description of an environment instance. Item-chain environments run
/// on an 8x8 grid rendered at 8 px/cell (4 px/cell in small-obs mode);
/// keydungeon uses a 6x6 grid. Episodes have fixed length: every step() after
/// the cap is a contract violation.
struct EnvSpec {
  EnvName name = EnvName::Forage;
  int grid_size = 8;
  int num_items = 6;       // 0 for keydungeon
  int action_count = 4;    // 7 for keydungeon (4 moves, pickup, use-door, no-op)
  int max_episode_len = 120;
  std::vector<std::array<float, 3>> item_colors;
  float noise_rate = 0.15f;
  int cell_px = 8;                   // 4 in small-obs mode
  std::vector<int> kd_levels = {};   // keydungeon only; levels drawn per episode

  int obs_h() const { return grid_size * cell_px; }
  int obs_w() const { return grid_size * cell_px; }
  int obs_c() const { return 3; }
  int obs_size() const { return obs_h() * obs_w() * obs_c(); }
  bool is_keydungeon() const { return name == EnvName::KeyDungeon; }
};

EnvSpec make_spec(EnvName name, bool small_obs);

/// Returns the schema paired with the spec. Keydungeon specs restricted to
/// level 5 get the chain4 schema; all other keydungeon level sets share the
/// base schema.
AffordanceSchema build_schema(const EnvSpec& spec);

/// OOD variants of the keydungeon curriculum: a never-seen key/door color
/// pairing (CrossColor, level 4) or a four-link key/door chain (Chain4L5,
/// level 5). Throws DataError for non-keydungeon bases.
std::pair<EnvSpec, AffordanceSchema> make_ood_spec(const EnvSpec& base, OodVariant variant);

enum class ItemPhase : std::uint8_t { Locked = 0, Visible = 1, Collected = 2 };

struct Cell {
  int r = 0;
  int c = 0;
  bool operator==(const Cell&) const = default;
};

struct EnvState {
  Cell agent;
  int step_count = 0;
  std::uint64_t episode_seed = 0;

  // Item-chain environments.
  std::vector<Cell> item_cells;
  std::vector<ItemPhase> item_states;
  Cell goal_cell;
  bool goal_reached = false;

  // Keydungeon family. Base levels use a single key/door pair; level 5 uses
  // four chained pairs. Flags are monotone within an episode.
  int kd_level = 0;
  std::vector<Cell> key_cells;
  std::vector<Cell> door_cells;
  Cell chest_cell;
  std::vector<std::uint8_t> key_held;
  std::vector<std::uint8_t> door_open;
  bool found_key = false;
  bool reached_door = false;
  bool reached_goal = false;

  bool operator==(const EnvState&) const = default;
};

std::string serialize_state(const EnvState& state);
EnvState parse_state(const std::string& text);

/// Pure function of (spec, state): identical states render to bit-identical
/// pixel buffers. Layout is row-major HxWx3 with values in [0,1].
std::vector<float> render(const EnvSpec& spec, const EnvState& state);

EnvState env_reset(const EnvSpec& spec, std::uint64_t seed);

struct StepResult {
  EnvState state;
  std::vector<float> obs;
  float reward = 0.0f;
  bool done = false;
  int sc_event = 0;
};

/// Advances one transition. sc_event is 1 exactly when the affordance graph of
/// the successor state differs from the current one. Throws DataError when
/// called on a finished episode or with an out-of-range action.
StepResult env_step(const EnvSpec& spec, const AffordanceSchema& schema, const EnvState& state,
                    int action);
StepResult env_step(const EnvSpec& spec, const EnvState& state, int action);

/// Achieved-affordance readout: node_active from the environment state, with
/// frontier and edge bits recomputed analytically.
GraphState graph_from_state(const AffordanceSchema& schema, const EnvSpec& spec,
                            const EnvState& state);

/// Noisy greedy data-collection policy: with probability spec.noise_rate a
/// uniform random action, otherwise a shortest-path step toward the current
/// objective (nearest visible uncollected item, then the goal cell; key,
/// door, chest in task order for keydungeon). Distance ties break toward the
/// lowest action index.
int scripted_policy(const EnvSpec& spec, const EnvState& state, Rng& rng);

}  // namespace agwm
