#include "agwm/env.hpp"

#include <algorithm>
#include <deque>
#include <limits>

#include <json.hpp>

#include "agwm/errors.hpp"

namespace agwm {

namespace {

using json = nlohmann::json;

constexpr std::array<float, 3> kBackground = {0.05f, 0.05f, 0.05f};
constexpr std::array<float, 3> kAgentColor = {1.0f, 1.0f, 1.0f};
constexpr std::array<float, 3> kLockedGray = {0.5f, 0.5f, 0.5f};
constexpr std::array<float, 3> kUsedMarker = {0.75f, 0.75f, 0.75f};
constexpr std::array<float, 3> kGoalColor = {0.95f, 0.85f, 0.30f};
constexpr std::array<float, 3> kChestDim = {0.45f, 0.36f, 0.12f};
constexpr std::array<float, 3> kChestBright = {1.0f, 0.84f, 0.25f};

const std::array<std::array<float, 3>, 8> kItemPalette = {{
    {0.90f, 0.10f, 0.10f},
    {0.10f, 0.80f, 0.15f},
    {0.15f, 0.30f, 0.90f},
    {0.90f, 0.85f, 0.10f},
    {0.85f, 0.15f, 0.80f},
    {0.10f, 0.80f, 0.80f},
    {0.95f, 0.55f, 0.10f},
    {0.55f, 0.20f, 0.90f},
}};

const std::array<std::array<float, 3>, 4> kKeyColors = {{
    {1.00f, 0.85f, 0.10f},
    {0.75f, 0.78f, 0.80f},
    {0.80f, 0.45f, 0.20f},
    {0.30f, 0.90f, 0.90f},
}};

const std::array<std::array<float, 3>, 4> kDoorColors = {{
    {0.55f, 0.12f, 0.60f},
    {0.15f, 0.35f, 0.85f},
    {0.10f, 0.60f, 0.25f},
    {0.85f, 0.20f, 0.30f},
}};

// Level -> (key color index, door color index). Levels 1-3 are the diagonal
// pairings seen in training; level 4 recombines seen colors in a novel way.
std::pair<int, int> kd_pairing(int level) {
  switch (level) {
    case 1: return {0, 0};
    case 2: return {1, 1};
    case 3: return {2, 2};
    case 4: return {0, 1};
    default: throw DataError("keydungeon pairing requested for level " + std::to_string(level));
  }
}

// Level-5 chain uses pairings already seen across levels 1-4.
const std::array<std::pair<int, int>, 4> kChainPairings = {{{0, 0}, {1, 1}, {2, 2}, {0, 1}}};

constexpr int kMoveCount = 4;
constexpr int kActPickup = 4;
constexpr int kActUseDoor = 5;
constexpr int kActNoop = 6;

// up, down, left, right
constexpr int kDr[4] = {-1, 1, 0, 0};
constexpr int kDc[4] = {0, 0, -1, 1};

bool adjacent(const Cell& a, const Cell& b) {
  return std::abs(a.r - b.r) + std::abs(a.c - b.c) == 1;
}

void fill_cell(std::vector<float>& img, const EnvSpec& spec, const Cell& cell,
               const std::array<float, 3>& color) {
  const int px = spec.cell_px;
  const int w = spec.obs_w();
  for (int r = cell.r * px; r < (cell.r + 1) * px; ++r)
    for (int c = cell.c * px; c < (cell.c + 1) * px; ++c)
      for (int ch = 0; ch < 3; ++ch) img[static_cast<std::size_t>((r * w + c) * 3 + ch)] = color[static_cast<std::size_t>(ch)];
}

void fill_agent(std::vector<float>& img, const EnvSpec& spec, const Cell& cell) {
  const int px = spec.cell_px;
  const int w = spec.obs_w();
  const int inset = px / 4;
  for (int r = cell.r * px + inset; r < (cell.r + 1) * px - inset; ++r)
    for (int c = cell.c * px + inset; c < (cell.c + 1) * px - inset; ++c)
      for (int ch = 0; ch < 3; ++ch)
        img[static_cast<std::size_t>((r * w + c) * 3 + ch)] = kAgentColor[static_cast<std::size_t>(ch)];
}

std::array<float, 3> mix(const std::array<float, 3>& a, const std::array<float, 3>& b, float t) {
  return {a[0] * (1 - t) + b[0] * t, a[1] * (1 - t) + b[1] * t, a[2] * (1 - t) + b[2] * t};
}

std::array<float, 3> open_door_color(const std::array<float, 3>& door) {
  return mix(door, {0.95f, 0.95f, 0.95f}, 0.65f);
}

int cell_index(const EnvSpec& spec, const Cell& cell) { return cell.r * spec.grid_size + cell.c; }

Cell cell_at(const EnvSpec& spec, int index) {
  return Cell{index / spec.grid_size, index % spec.grid_size};
}

bool in_grid(const EnvSpec& spec, int r, int c) {
  return r >= 0 && r < spec.grid_size && c >= 0 && c < spec.grid_size;
}

// Cells the agent cannot enter in the current state.
std::vector<std::uint8_t> blocked_cells(const EnvSpec& spec, const EnvState& state) {
  std::vector<std::uint8_t> blocked(static_cast<std::size_t>(spec.grid_size * spec.grid_size), 0);
  if (spec.is_keydungeon()) {
    for (std::size_t i = 0; i < state.door_cells.size(); ++i)
      if (!state.door_open[i]) blocked[static_cast<std::size_t>(cell_index(spec, state.door_cells[i]))] = 1;
    const bool chest_open = !state.door_open.empty() && state.door_open.back();
    if (!chest_open) blocked[static_cast<std::size_t>(cell_index(spec, state.chest_cell))] = 1;
  }
  return blocked;
}

Cell apply_move(const EnvSpec& spec, const EnvState& state, const Cell& from, int move) {
  const int r = from.r + kDr[move];
  const int c = from.c + kDc[move];
  if (!in_grid(spec, r, c)) return from;
  const auto blocked = blocked_cells(spec, state);
  if (blocked[static_cast<std::size_t>(r * spec.grid_size + c)]) return from;
  return Cell{r, c};
}

// BFS distances to `target` over currently enterable cells. The target itself
// is treated as enterable so that "stand next to it" objectives work.
std::vector<int> bfs_distances(const EnvSpec& spec, const EnvState& state, const Cell& target) {
  const int n = spec.grid_size * spec.grid_size;
  std::vector<int> dist(static_cast<std::size_t>(n), std::numeric_limits<int>::max());
  auto blocked = blocked_cells(spec, state);
  blocked[static_cast<std::size_t>(cell_index(spec, target))] = 0;
  std::deque<int> queue;
  dist[static_cast<std::size_t>(cell_index(spec, target))] = 0;
  queue.push_back(cell_index(spec, target));
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const Cell cc = cell_at(spec, cur);
    for (int m = 0; m < kMoveCount; ++m) {
      const int r = cc.r + kDr[m];
      const int c = cc.c + kDc[m];
      if (!in_grid(spec, r, c)) continue;
      const int idx = r * spec.grid_size + c;
      if (blocked[static_cast<std::size_t>(idx)]) continue;
      if (dist[static_cast<std::size_t>(idx)] != std::numeric_limits<int>::max()) continue;
      dist[static_cast<std::size_t>(idx)] = dist[static_cast<std::size_t>(cur)] + 1;
      queue.push_back(idx);
    }
  }
  return dist;
}

// Greedy move toward target: the move whose resulting cell minimizes BFS
// distance, ties broken by lowest action index. Blocked moves leave the agent
// in place.
int greedy_move(const EnvSpec& spec, const EnvState& state, const Cell& target) {
  const auto dist = bfs_distances(spec, state, target);
  int best_action = 0;
  long best_dist = std::numeric_limits<long>::max();
  for (int m = 0; m < kMoveCount; ++m) {
    const Cell next = apply_move(spec, state, state.agent, m);
    const int d = dist[static_cast<std::size_t>(cell_index(spec, next))];
    if (d < best_dist) {
      best_dist = d;
      best_action = m;
    }
  }
  return best_action;
}

int kd_level_count(int level) { return level == 5 ? 4 : 1; }

// Reachability under the maximal blocked set (all doors locked, chest shut).
// Unlocking only shrinks the blocked set, so this is sufficient for the whole
// episode: every key must be reachable and every door/chest must have a
// reachable neighbor.
bool kd_layout_feasible(const EnvSpec& spec, const EnvState& state) {
  const int n = spec.grid_size * spec.grid_size;
  std::vector<std::uint8_t> blocked(static_cast<std::size_t>(n), 0);
  for (const auto& door : state.door_cells) blocked[static_cast<std::size_t>(cell_index(spec, door))] = 1;
  blocked[static_cast<std::size_t>(cell_index(spec, state.chest_cell))] = 1;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  std::deque<int> queue;
  seen[static_cast<std::size_t>(cell_index(spec, state.agent))] = 1;
  queue.push_back(cell_index(spec, state.agent));
  while (!queue.empty()) {
    const Cell cur = cell_at(spec, queue.front());
    queue.pop_front();
    for (int m = 0; m < kMoveCount; ++m) {
      const int r = cur.r + kDr[m];
      const int c = cur.c + kDc[m];
      if (!in_grid(spec, r, c)) continue;
      const int idx = r * spec.grid_size + c;
      if (blocked[static_cast<std::size_t>(idx)] || seen[static_cast<std::size_t>(idx)]) continue;
      seen[static_cast<std::size_t>(idx)] = 1;
      queue.push_back(idx);
    }
  }
  auto has_seen_neighbor = [&](const Cell& cell) {
    for (int m = 0; m < kMoveCount; ++m) {
      const int r = cell.r + kDr[m];
      const int c = cell.c + kDc[m];
      if (in_grid(spec, r, c) && seen[static_cast<std::size_t>(r * spec.grid_size + c)]) return true;
    }
    return false;
  };
  for (const auto& key : state.key_cells)
    if (!seen[static_cast<std::size_t>(cell_index(spec, key))]) return false;
  for (const auto& door : state.door_cells)
    if (!has_seen_neighbor(door)) return false;
  return has_seen_neighbor(state.chest_cell);
}

void sample_keydungeon_layout(const EnvSpec& spec, EnvState& state, Rng& rng) {
  const int pairs = kd_level_count(state.kd_level);
  const int n = spec.grid_size * spec.grid_size;
  auto sample_free = [&](std::vector<std::uint8_t>& used) {
    while (true) {
      const int idx = rng.uniform_int(n);
      if (!used[static_cast<std::size_t>(idx)]) {
        used[static_cast<std::size_t>(idx)] = 1;
        return cell_at(spec, idx);
      }
    }
  };
  while (true) {
    std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
    state.key_cells.clear();
    state.door_cells.clear();
    for (int i = 0; i < pairs; ++i) state.key_cells.push_back(sample_free(used));
    for (int i = 0; i < pairs; ++i) state.door_cells.push_back(sample_free(used));
    state.chest_cell = sample_free(used);
    state.agent = sample_free(used);
    // A fresh episode must start with an all-inactive graph: the agent may not
    // begin on a key or adjacent to a door.
    bool ok = true;
    for (const auto& door : state.door_cells)
      if (adjacent(state.agent, door)) ok = false;
    if (ok && kd_layout_feasible(spec, state)) break;
  }
  state.key_held.assign(static_cast<std::size_t>(pairs), 0);
  state.door_open.assign(static_cast<std::size_t>(pairs), 0);
}

void sample_item_layout(const EnvSpec& spec, EnvState& state, Rng& rng) {
  const int n = spec.grid_size * spec.grid_size;
  state.goal_cell = Cell{0, 0};
  std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
  used[static_cast<std::size_t>(cell_index(spec, state.goal_cell))] = 1;
  auto sample_free = [&]() {
    while (true) {
      const int idx = rng.uniform_int(n);
      if (!used[static_cast<std::size_t>(idx)]) {
        used[static_cast<std::size_t>(idx)] = 1;
        return cell_at(spec, idx);
      }
    }
  };
  state.item_cells.clear();
  for (int i = 0; i < spec.num_items; ++i) state.item_cells.push_back(sample_free());
  state.agent = sample_free();
  const bool chain = spec.name == EnvName::Relay || spec.name == EnvName::Cascade;
  state.item_states.assign(static_cast<std::size_t>(spec.num_items), ItemPhase::Visible);
  if (chain)
    for (int i = 1; i < spec.num_items; ++i)
      state.item_states[static_cast<std::size_t>(i)] = ItemPhase::Locked;
}

// True key availability in the chain: key i can be picked once the previous
// door is open.
bool key_available(const EnvState& state, std::size_t i) {
  if (state.key_held[i]) return false;
  return i == 0 || state.door_open[i - 1];
}

}  // namespace

std::string to_string(EnvName name) {
  switch (name) {
    case EnvName::KeyDungeon: return "keydungeon";
    case EnvName::Forage: return "forage";
    case EnvName::Harvest: return "harvest";
    case EnvName::Relay: return "relay";
    case EnvName::Cascade: return "cascade";
  }
  throw DataError("invalid EnvName");
}

EnvName env_from_string(const std::string& name) {
  if (name == "keydungeon") return EnvName::KeyDungeon;
  if (name == "forage") return EnvName::Forage;
  if (name == "harvest") return EnvName::Harvest;
  if (name == "relay") return EnvName::Relay;
  if (name == "cascade") return EnvName::Cascade;
  if (name == "crafter" || name == "craftax" || name == "minihack")
    throw UsageError("environment '" + name + "' is out of scope for this build");
  throw UsageError("unknown environment: " + name);
}

EnvSpec make_spec(EnvName name, bool small_obs) {
  EnvSpec spec;
  spec.name = name;
  spec.cell_px = small_obs ? 4 : 8;
  switch (name) {
    case EnvName::KeyDungeon:
      spec.grid_size = 6;
      spec.num_items = 0;
      spec.action_count = 7;
      spec.max_episode_len = 100;
      spec.kd_levels = {1, 2, 3};
      break;
    case EnvName::Forage:
      spec.grid_size = 8;
      spec.num_items = 6;
      spec.action_count = 4;
      spec.max_episode_len = 120;
      break;
    case EnvName::Harvest:
      spec.grid_size = 8;
      spec.num_items = 8;
      spec.action_count = 4;
      spec.max_episode_len = 120;
      break;
    case EnvName::Relay:
      spec.grid_size = 8;
      spec.num_items = 4;
      spec.action_count = 4;
      spec.max_episode_len = 60;
      break;
    case EnvName::Cascade:
      spec.grid_size = 8;
      spec.num_items = 5;
      spec.action_count = 4;
      spec.max_episode_len = 60;
      break;
  }
  for (int i = 0; i < spec.num_items; ++i)
    spec.item_colors.push_back(kItemPalette[static_cast<std::size_t>(i)]);
  return spec;
}

AffordanceSchema build_schema(const EnvSpec& spec) {
  switch (spec.name) {
    case EnvName::Forage: return schema_forage();
    case EnvName::Harvest: return schema_harvest();
    case EnvName::Relay: return schema_relay();
    case EnvName::Cascade: return schema_cascade();
    case EnvName::KeyDungeon:
      if (spec.kd_levels == std::vector<int>{5}) return schema_keydungeon_chain4();
      for (int level : spec.kd_levels)
        if (level < 1 || level > 4)
          throw DataError("keydungeon level sets may be within 1..4 or exactly {5}");
      return schema_keydungeon();
  }
  throw DataError("invalid spec");
}

std::pair<EnvSpec, AffordanceSchema> make_ood_spec(const EnvSpec& base, OodVariant variant) {
  if (!base.is_keydungeon())
    throw DataError("OOD variants exist only for the keydungeon curriculum");
  EnvSpec spec = base;
  switch (variant) {
    case OodVariant::CrossColor:
      spec.kd_levels = {4};
      return {spec, build_schema(spec)};
    case OodVariant::Chain4L5:
      spec.kd_levels = {5};
      return {spec, build_schema(spec)};
  }
  throw DataError("invalid OOD variant");
}

std::vector<float> render(const EnvSpec& spec, const EnvState& state) {
  std::vector<float> img(static_cast<std::size_t>(spec.obs_size()));
  for (std::size_t i = 0; i < img.size(); i += 3) {
    img[i] = kBackground[0];
    img[i + 1] = kBackground[1];
    img[i + 2] = kBackground[2];
  }
  if (spec.is_keydungeon()) {
    const bool chain = state.kd_level == 5;
    for (std::size_t i = 0; i < state.key_cells.size(); ++i) {
      const auto pairing = chain ? kChainPairings[i] : kd_pairing(state.kd_level);
      const bool revealed = i == 0 || state.door_open[i - 1];
      if (!state.key_held[i] && revealed)
        fill_cell(img, spec, state.key_cells[i], kKeyColors[static_cast<std::size_t>(pairing.first)]);
      const auto& door_color = kDoorColors[static_cast<std::size_t>(pairing.second)];
      fill_cell(img, spec, state.door_cells[i],
                state.door_open[i] ? open_door_color(door_color) : door_color);
    }
    const bool chest_open = !state.door_open.empty() && state.door_open.back();
    fill_cell(img, spec, state.chest_cell, chest_open ? kChestBright : kChestDim);
  } else {
    fill_cell(img, spec, state.goal_cell, kGoalColor);
    const bool chain = spec.name == EnvName::Relay || spec.name == EnvName::Cascade;
    for (std::size_t i = 0; i < state.item_cells.size(); ++i) {
      switch (state.item_states[i]) {
        case ItemPhase::Visible:
          fill_cell(img, spec, state.item_cells[i], spec.item_colors[i]);
          break;
        case ItemPhase::Locked:
          fill_cell(img, spec, state.item_cells[i], kLockedGray);
          break;
        case ItemPhase::Collected:
          if (chain) fill_cell(img, spec, state.item_cells[i], kUsedMarker);
          break;
      }
    }
  }
  fill_agent(img, spec, state.agent);
  return img;
}

EnvState env_reset(const EnvSpec& spec, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x454e56, 0));
  EnvState state;
  state.episode_seed = seed;
  if (spec.is_keydungeon()) {
    if (spec.kd_levels.empty()) throw DataError("keydungeon spec has no levels configured");
    state.kd_level = spec.kd_levels[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(spec.kd_levels.size())))];
    sample_keydungeon_layout(spec, state, rng);
  } else {
    sample_item_layout(spec, state, rng);
  }
  return state;
}

GraphState graph_from_state(const AffordanceSchema& schema, const EnvSpec& spec,
                            const EnvState& state) {
  std::vector<std::uint8_t> active;
  if (spec.is_keydungeon()) {
    if (state.kd_level == 5) {
      if (schema.name != "keydungeon_chain4")
        throw DataError("level-5 keydungeon state requires the chain4 schema");
      for (std::size_t i = 0; i < 4; ++i) active.push_back(state.door_open[i]);
      active.push_back(state.reached_goal ? 1 : 0);
    } else {
      if (schema.name != "keydungeon")
        throw DataError("keydungeon state requires the keydungeon schema");
      active = {static_cast<std::uint8_t>(state.found_key ? 1 : 0),
                static_cast<std::uint8_t>(state.key_held.at(0)),
                static_cast<std::uint8_t>(state.reached_door ? 1 : 0),
                static_cast<std::uint8_t>(state.door_open.at(0)),
                static_cast<std::uint8_t>(state.reached_goal ? 1 : 0)};
    }
  } else {
    if (schema.node_count() != spec.num_items)
      throw DataError("schema node count does not match item count");
    for (const auto phase : state.item_states)
      active.push_back(phase == ItemPhase::Collected ? 1 : 0);
  }
  return graph_from_node_active(schema, std::move(active));
}

StepResult env_step(const EnvSpec& spec, const AffordanceSchema& schema, const EnvState& state,
                    int action) {
  if (state.step_count >= spec.max_episode_len)
    throw DataError("env_step called on a finished episode");
  if (action < 0 || action >= spec.action_count)
    throw DataError("action " + std::to_string(action) + " out of range");

  const GraphState g_before = graph_from_state(schema, spec, state);
  StepResult result;
  EnvState next = state;
  const bool was_goal = spec.is_keydungeon() ? state.reached_goal : state.goal_reached;

  if (action < kMoveCount) {
    next.agent = apply_move(spec, state, state.agent, action);
  } else if (spec.is_keydungeon()) {
    if (action == kActPickup) {
      for (std::size_t i = 0; i < next.key_cells.size(); ++i)
        if (next.agent == next.key_cells[i] && key_available(next, i)) {
          next.key_held[i] = 1;
          break;
        }
    } else if (action == kActUseDoor) {
      for (std::size_t i = 0; i < next.door_cells.size(); ++i)
        if (adjacent(next.agent, next.door_cells[i]) && next.key_held[i] && !next.door_open[i]) {
          next.door_open[i] = 1;
          break;
        }
    }
    // kActNoop falls through.
  }

  if (spec.is_keydungeon()) {
    // First-visit flags evaluated on the post-action position.
    if (next.kd_level != 5) {
      if (!next.key_held[0] && next.agent == next.key_cells[0]) next.found_key = true;
      if (next.key_held[0]) next.found_key = true;
      for (const auto& door : next.door_cells)
        if (adjacent(next.agent, door)) next.reached_door = true;
    }
    if (next.agent == next.chest_cell) next.reached_goal = true;
  } else {
    for (std::size_t i = 0; i < next.item_cells.size(); ++i)
      if (next.item_states[i] == ItemPhase::Visible && next.agent == next.item_cells[i]) {
        next.item_states[i] = ItemPhase::Collected;
        const bool chain = spec.name == EnvName::Relay || spec.name == EnvName::Cascade;
        if (chain && i + 1 < next.item_states.size())
          next.item_states[i + 1] = ItemPhase::Visible;
      }
    const bool all_collected = std::all_of(next.item_states.begin(), next.item_states.end(),
                                           [](ItemPhase p) { return p == ItemPhase::Collected; });
    if (all_collected && next.agent == next.goal_cell) next.goal_reached = true;
  }

  next.step_count = state.step_count + 1;

  const GraphState g_after = graph_from_state(schema, spec, next);
  result.sc_event = sc_label(g_before, g_after);
  const bool now_goal = spec.is_keydungeon() ? next.reached_goal : next.goal_reached;
  result.reward = (!was_goal && now_goal) ? 1.0f : 0.0f;
  result.done = next.step_count >= spec.max_episode_len;
  result.obs = render(spec, next);
  result.state = std::move(next);
  return result;
}

StepResult env_step(const EnvSpec& spec, const EnvState& state, int action) {
  return env_step(spec, build_schema(spec), state, action);
}

int scripted_policy(const EnvSpec& spec, const EnvState& state, Rng& rng) {
  if (state.step_count >= spec.max_episode_len)
    throw DataError("policy queried on a finished episode");
  if (rng.uniform() < spec.noise_rate) return rng.uniform_int(spec.action_count);

  if (!spec.is_keydungeon()) {
    // Nearest visible item, then the goal cell.
    Cell target = state.goal_cell;
    int best = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < state.item_cells.size(); ++i) {
      if (state.item_states[i] != ItemPhase::Visible) continue;
      const int d = std::abs(state.agent.r - state.item_cells[i].r) +
                    std::abs(state.agent.c - state.item_cells[i].c);
      if (d < best) {
        best = d;
        target = state.item_cells[i];
      }
    }
    return greedy_move(spec, state, target);
  }

  // Keydungeon task order: pick up the current key, open its door, then head
  // for the chest.
  for (std::size_t i = 0; i < state.door_cells.size(); ++i) {
    if (state.door_open[i]) continue;
    if (!state.key_held[i]) {
      if (state.agent == state.key_cells[i]) return kActPickup;
      return greedy_move(spec, state, state.key_cells[i]);
    }
    if (adjacent(state.agent, state.door_cells[i])) return kActUseDoor;
    return greedy_move(spec, state, state.door_cells[i]);
  }
  if (state.agent == state.chest_cell) return kActNoop;
  return greedy_move(spec, state, state.chest_cell);
}

std::string serialize_state(const EnvState& state) {
  json j;
  j["agent"] = {state.agent.r, state.agent.c};
  j["step_count"] = state.step_count;
  j["episode_seed"] = state.episode_seed;
  j["goal_reached"] = state.goal_reached;
  j["goal_cell"] = {state.goal_cell.r, state.goal_cell.c};
  auto cells = json::array();
  for (const auto& cell : state.item_cells) cells.push_back({cell.r, cell.c});
  j["item_cells"] = cells;
  auto phases = json::array();
  for (const auto phase : state.item_states) phases.push_back(static_cast<int>(phase));
  j["item_states"] = phases;
  j["kd_level"] = state.kd_level;
  auto keys = json::array();
  for (const auto& cell : state.key_cells) keys.push_back({cell.r, cell.c});
  j["key_cells"] = keys;
  auto doors = json::array();
  for (const auto& cell : state.door_cells) doors.push_back({cell.r, cell.c});
  j["door_cells"] = doors;
  j["chest_cell"] = {state.chest_cell.r, state.chest_cell.c};
  j["key_held"] = state.key_held;
  j["door_open"] = state.door_open;
  j["found_key"] = state.found_key;
  j["reached_door"] = state.reached_door;
  j["reached_goal"] = state.reached_goal;
  return j.dump();
}

EnvState parse_state(const std::string& text) {
  json j = json::parse(text);
  EnvState state;
  state.agent = {j["agent"][0], j["agent"][1]};
  state.step_count = j["step_count"];
  state.episode_seed = j["episode_seed"];
  state.goal_reached = j["goal_reached"];
  state.goal_cell = {j["goal_cell"][0], j["goal_cell"][1]};
  for (const auto& cell : j["item_cells"]) state.item_cells.push_back({cell[0], cell[1]});
  for (const auto& phase : j["item_states"])
    state.item_states.push_back(static_cast<ItemPhase>(static_cast<int>(phase)));
  state.kd_level = j["kd_level"];
  for (const auto& cell : j["key_cells"]) state.key_cells.push_back({cell[0], cell[1]});
  for (const auto& cell : j["door_cells"]) state.door_cells.push_back({cell[0], cell[1]});
  state.chest_cell = {j["chest_cell"][0], j["chest_cell"][1]};
  state.key_held = j["key_held"].get<std::vector<std::uint8_t>>();
  state.door_open = j["door_open"].get<std::vector<std::uint8_t>>();
  state.found_key = j["found_key"];
  state.reached_door = j["reached_door"];
  state.reached_goal = j["reached_goal"];
  return state;
}

}  // namespace agwm
