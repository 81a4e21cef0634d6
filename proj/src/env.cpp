#include "mmoba/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mmoba {

namespace c = constants;

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::Solo: return "solo";
    case Mode::Trio: return "trio";
    case Mode::SubDestroyTurret: return "destroy_turret";
    case Mode::SubGainGold: return "gain_gold";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::Solo, Mode::Trio, Mode::SubDestroyTurret, Mode::SubGainGold}) {
    if (name == mode_name(m)) return m;
  }
  throw ConfigError("mode", "unknown mode '" + name + "'");
}

EnvConfig EnvConfig::defaults(Mode mode) {
  EnvConfig cfg;
  cfg.mode = mode;
  switch (mode) {
    case Mode::Solo:
      break;
    case Mode::Trio:
      cfg.archetypes_a = {0, 1, 2};
      cfg.archetypes_b = {0, 1, 2};
      break;
    case Mode::SubDestroyTurret:
      cfg.archetypes_b.clear();
      break;
    case Mode::SubGainGold:
      cfg.max_steps = 200;
      cfg.archetypes_a = {0, 1, 2};
      cfg.archetypes_b.clear();
      break;
  }
  return cfg;
}

void EnvConfig::validate() const {
  if (grid_width < 5) throw ConfigError("grid_width", "must be >= 5");
  if (grid_height < 3) throw ConfigError("grid_height", "must be >= 3");
  if (max_steps <= 0) throw ConfigError("max_steps", "must be positive");
  for (double w : reward_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("reward_weights", "weights must be finite and >= 0");
  }
  if (!(crit_chance >= 0.0 && crit_chance <= 1.0)) throw ConfigError("crit_chance", "must lie in [0, 1]");
  auto check_ids = [](const std::vector<int>& ids, const char* field) {
    for (int id : ids) {
      if (id < 0 || id >= static_cast<int>(kArchetypes.size())) {
        throw ConfigError(field, "unknown archetype id " + std::to_string(id));
      }
    }
  };
  check_ids(archetypes_a, "hero_archetypes_a");
  check_ids(archetypes_b, "hero_archetypes_b");
  const std::size_t team_size = is_trio_layout(mode) ? 3 : 1;
  if (archetypes_a.size() != team_size) {
    throw ConfigError("hero_archetypes_a", "expected " + std::to_string(team_size) + " archetypes, got " +
                                                std::to_string(archetypes_a.size()));
  }
  if (is_subtask(mode)) {
    if (!archetypes_b.empty()) throw ConfigError("hero_archetypes_b", "sub-task modes have no enemy heroes");
  } else if (archetypes_b.size() != team_size) {
    throw ConfigError("hero_archetypes_b", "expected " + std::to_string(team_size) + " archetypes, got " +
                                               std::to_string(archetypes_b.size()));
  }
  if (calibration.random_frame_length == calibration.expert_frame_length) {
    throw ConfigError("calibration", "destroy-turret constants must differ");
  }
  if (calibration.random_gain_gold == calibration.expert_gain_gold) {
    throw ConfigError("calibration", "gain-gold constants must differ");
  }
}

int HeroState::level() const { return std::min(c::kMaxHeroLevel, experience / c::kExpPerLevel); }

ActionSpec ActionSpec::for_mode(Mode mode) {
  if (is_trio_layout(mode)) return {{"button", "move", "skill_x", "skill_y", "target"}, {5, 9, 3, 3, 8}};
  return {{"button", "move_x", "move_y", "skill_x", "skill_y", "target"}, {5, 3, 3, 3, 3, 5}};
}

int ActionSpec::total_size() const { return std::accumulate(head_sizes.begin(), head_sizes.end(), 0); }

int ActionSpec::offset(int head) const {
  return std::accumulate(head_sizes.begin(), head_sizes.begin() + head, 0);
}

bool ActionMasks::admits(const StructuredAction& a) const {
  if (a.head_indices.size() != legal.size()) return false;
  for (std::size_t h = 0; h < legal.size(); ++h) {
    const int i = a.head_indices[h];
    if (i < 0 || i >= static_cast<int>(legal[h].size()) || !legal[h][static_cast<std::size_t>(i)]) return false;
  }
  return true;
}

std::vector<std::vector<std::uint8_t>> sub_action_table(Mode mode) {
  if (is_trio_layout(mode)) {
    // button, move, skill_x, skill_y, target
    return {{1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {1, 0, 0, 0, 1}, {1, 0, 1, 1, 0}, {1, 0, 0, 0, 0}};
  }
  // button, move_x, move_y, skill_x, skill_y, target
  return {{1, 0, 0, 0, 0, 0}, {1, 1, 1, 0, 0, 0}, {1, 0, 0, 0, 0, 1}, {1, 0, 0, 1, 1, 0}, {1, 0, 0, 0, 0, 0}};
}

int obs_dim(Mode mode) { return is_trio_layout(mode) ? kTrioObsDim : kSoloObsDim; }

TargetSlots TargetSlots::for_mode(Mode mode) {
  if (is_trio_layout(mode)) return {0, 3, 3, 2, 5, 6, 7};
  return {0, 1, 1, 2, -1, 3, 4};
}

// ---------------------------------------------------------------- rewards

namespace {

const std::vector<std::string> kSoloItems{"hp_point", "tower_hp_point", "money", "ep_rate", "death",
                                          "kill",     "exp",            "last_hit", "crystal"};
const std::vector<std::string> kTrioItems{"hp_rate_sqrt_sqrt", "money",        "exp",        "tower",
                                          "kill",              "assist",       "death",      "hurt_to_hero",
                                          "atk_monster",       "atk_crystal",  "win_crystal"};

}  // namespace

const std::vector<std::string>& reward_item_names(Mode mode) {
  return is_trio_layout(mode) ? kTrioItems : kSoloItems;
}

int reward_item_group(const std::string& item) {
  // 0 farming, 1 KDA, 2 damage, 3 pushing, 4 win/lose
  static const std::map<std::string, int> groups{
      {"money", 0},       {"exp", 0},          {"ep_rate", 0},      {"last_hit", 0},
      {"atk_monster", 0}, {"kill", 1},         {"death", 1},        {"assist", 1},
      {"hp_point", 2},    {"hp_rate_sqrt_sqrt", 2}, {"hurt_to_hero", 2}, {"tower_hp_point", 3},
      {"tower", 3},       {"atk_crystal", 3},  {"crystal", 4},      {"win_crystal", 4}};
  auto it = groups.find(item);
  if (it == groups.end()) throw Error(ErrorKind::Internal, "unknown reward item '" + item + "'");
  return it->second;
}

double weigh_items(const std::map<std::string, double>& items, const std::array<double, 5>& w) {
  double total = 0.0;
  for (const auto& [name, value] : items) total += w[static_cast<std::size_t>(reward_item_group(name))] * value;
  return total;
}

void apply_zero_sum(std::span<RewardVector> rewards, std::span<const Team> teams) {
  double sum[2] = {0.0, 0.0};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const int t = teams[i] == Team::A ? 0 : 1;
    sum[t] += rewards[i].weighted;
    ++count[t];
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const int enemy = teams[i] == Team::A ? 1 : 0;
    const double enemy_mean = count[enemy] > 0 ? sum[enemy] / count[enemy] : 0.0;
    rewards[i].zero_sum = rewards[i].weighted - enemy_mean;
  }
}

// ---------------------------------------------------------------- environment

struct Environment::TickEvents {
  std::vector<int> kills, assists, deaths, last_hits;
  std::vector<double> hurt_to_hero, atk_monster, atk_crystal;
  std::vector<bool> respawned;
  std::vector<int> gold_before, exp_before, mana_before, hp_before;
  std::array<int, 2> turret_before{}, turret_after{};
  std::optional<Team> crystal_lost;  // team whose crystal fell (nullopt also for a double loss)
  bool both_crystals = false;

  explicit TickEvents(std::size_t n)
      : kills(n), assists(n), deaths(n), last_hits(n), hurt_to_hero(n), atk_monster(n), atk_crystal(n),
        respawned(n), gold_before(n), exp_before(n), mana_before(n), hp_before(n) {}
};

Environment::Environment(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  spec_ = ActionSpec::for_mode(config_.mode);
  sub_actions_ = sub_action_table(config_.mode);
}

GridPos Environment::world(Team team, GridPos local) const {
  if (team == Team::B) return {config_.grid_width - 1 - local.x, local.y};
  return local;
}

bool Environment::in_grid(GridPos p) const {
  return p.x >= 0 && p.y >= 0 && p.x < config_.grid_width && p.y < config_.grid_height;
}

bool Environment::structures_active() const { return config_.mode != Mode::SubGainGold; }

int Environment::heroes_on(Team team) const {
  return static_cast<int>(std::count_if(heroes_.begin(), heroes_.end(),
                                        [team](const HeroState& h) { return h.base.team == team; }));
}

UnitState Environment::make_unit(UnitKind kind, Team team, GridPos pos, int hp, int attack, int local_index) {
  UnitState u;
  u.unit_id = next_unit_id_++;
  u.kind = kind;
  u.team = team;
  u.pos = pos;
  u.hp = hp;
  u.max_hp = hp;
  u.attack = attack;
  u.alive = hp > 0;
  u.local_index = local_index;
  return u;
}

UnitState& Environment::unit_mut(int unit_id) {
  for (auto& h : heroes_) {
    if (h.base.unit_id == unit_id) return h.base;
  }
  for (auto& u : units_) {
    if (u.unit_id == unit_id) return u;
  }
  throw Error(ErrorKind::Internal, "no unit with id " + std::to_string(unit_id));
}

const UnitState* Environment::find_structure(UnitKind kind, Team team) const {
  for (const auto& u : units_) {
    if (u.kind == kind && u.team == team) return &u;
  }
  return nullptr;
}

void Environment::spawn_wave() {
  const int mid = config_.grid_height / 2;
  for (Team team : {Team::A, Team::B}) {
    for (int k = 0; k < c::kCreepsPerWave; ++k) {
      const int y = (k % 2 == 0) ? mid - 1 : mid + 1;
      units_.push_back(make_unit(UnitKind::Creep, team, world(team, {1, y}), c::kCreepHp, c::kCreepAttack,
                                 wave_count_ * c::kCreepsPerWave + k));
    }
  }
  ++wave_count_;
}

void Environment::spawn_monsters() {
  const int x = config_.grid_width / 2;
  const GridPos homes[2] = {{x, 0}, {x, config_.grid_height - 1}};
  for (int k = 0; k < 2; ++k) {
    units_.push_back(make_unit(UnitKind::Monster, Team::Neutral, homes[k], c::kMonsterHp, c::kMonsterAttack, k));
  }
}

StepResult Environment::reset(std::uint64_t episode_seed) {
  episode_seed_ = mix_seed(config_.seed, episode_seed);
  heroes_.clear();
  units_.clear();
  monster_respawn_.clear();
  monster_aggro_.clear();
  unit_rng_counter_.clear();
  next_unit_id_ = 0;
  wave_count_ = 0;
  step_ = 0;
  done_ = false;
  winner_.reset();
  was_reset_ = true;

  const int mid = config_.grid_height / 2;
  auto add_team = [&](Team team, const std::vector<int>& archetypes) {
    const int n = static_cast<int>(archetypes.size());
    for (int k = 0; k < n; ++k) {
      const Archetype& a = kArchetypes[static_cast<std::size_t>(archetypes[static_cast<std::size_t>(k)])];
      const int y = n == 1 ? mid : mid - 1 + k;
      HeroState h;
      h.base = make_unit(UnitKind::Hero, team, world(team, {1, y}), a.max_hp, a.attack, k);
      h.mana = c::kMaxMana;
      h.archetype = archetypes[static_cast<std::size_t>(k)];
      heroes_.push_back(h);
    }
  };
  add_team(Team::A, config_.archetypes_a);
  add_team(Team::B, config_.archetypes_b);
  for (Team team : {Team::A, Team::B}) {
    units_.push_back(make_unit(UnitKind::Crystal, team, world(team, {0, mid}), c::kCrystalHp, 0, 0));
    units_.push_back(make_unit(UnitKind::Turret, team, world(team, {3, mid}), c::kTurretHp, c::kTurretAttack, 0));
  }
  if (is_trio_layout(config_.mode)) spawn_monsters();
  spawn_wave();

  const std::size_t n = heroes_.size();
  recent_damage_.assign(n, std::vector<int>(n, -1000));
  last_rewards_.assign(n, RewardVector{});
  for (auto& r : last_rewards_) {
    for (const auto& item : reward_item_names(config_.mode)) r.items[item] = 0.0;
  }
  for (int t = 0; t < 2; ++t) {
    const Team team = t == 0 ? Team::A : Team::B;
    last_turret_hp_[static_cast<std::size_t>(t)] = find_structure(UnitKind::Turret, team)->hp;
    last_crystal_hp_[static_cast<std::size_t>(t)] = find_structure(UnitKind::Crystal, team)->hp;
  }
  return snapshot();
}

int Environment::hero_attack(const HeroState& h) const {
  return kArchetypes[static_cast<std::size_t>(h.archetype)].attack + c::kAttackPerLevel * h.level();
}

int Environment::roll_damage(int unit_id, int base) {
  auto& counter = unit_rng_counter_[unit_id];
  const std::uint64_t r = splitmix64(mix_seed(episode_seed_, static_cast<std::uint64_t>(unit_id) + 1) ^
                                     (counter++ * kGolden));
  const double u = static_cast<double>(r >> 11) * 0x1.0p-53;
  return u < config_.crit_chance ? static_cast<int>(std::lround(base * c::kCritMultiplier)) : base;
}

bool Environment::visible_to(Team team, const UnitState& target) const {
  if (target.team == team) return true;
  if (target.kind == UnitKind::Turret || target.kind == UnitKind::Crystal) return true;
  for (const auto& h : heroes_) {
    if (h.base.team == team && h.base.alive && chebyshev(h.base.pos, target.pos) <= h.vision_radius) return true;
  }
  for (const auto& u : units_) {
    if (u.team != team || !u.alive) continue;
    if (u.kind == UnitKind::Creep && chebyshev(u.pos, target.pos) <= c::kCreepVision) return true;
    if (u.kind == UnitKind::Turret && chebyshev(u.pos, target.pos) <= c::kTurretVision) return true;
  }
  return false;
}

// Whether a unit of `attacker` may damage `u` at all.
bool Environment::targetable(Team attacker, const UnitState& u) const {
  if (!u.alive || u.team == attacker) return false;
  if (u.kind == UnitKind::Turret || u.kind == UnitKind::Crystal) {
    if (!structures_active()) return false;
    if (u.kind == UnitKind::Crystal) {
      const UnitState* turret = find_structure(UnitKind::Turret, u.team);
      if (turret != nullptr && turret->alive) return false;
    }
  }
  return true;
}

std::vector<const UnitState*> Environment::visible_creeps(int hero, Team of_team) const {
  const HeroState& h = heroes_[static_cast<std::size_t>(hero)];
  std::vector<const UnitState*> out;
  for (const auto& u : units_) {
    if (u.kind == UnitKind::Creep && u.alive && u.team == of_team && visible_to(h.base.team, u)) out.push_back(&u);
  }
  std::stable_sort(out.begin(), out.end(), [&](const UnitState* a, const UnitState* b) {
    const int da = chebyshev(a->pos, h.base.pos), db = chebyshev(b->pos, h.base.pos);
    if (da != db) return da < db;
    return a->local_index < b->local_index;
  });
  return out;
}

const UnitState* Environment::nearest_monster(int hero) const {
  const HeroState& h = heroes_[static_cast<std::size_t>(hero)];
  const UnitState* best = nullptr;
  for (const auto& u : units_) {
    if (u.kind != UnitKind::Monster || !u.alive || !visible_to(h.base.team, u)) continue;
    if (best == nullptr) {
      best = &u;
      continue;
    }
    const int d = chebyshev(u.pos, h.base.pos), bd = chebyshev(best->pos, h.base.pos);
    // Mirror-consistent tie-break: the monster nearer the hero's own bottom/top row order.
    if (d < bd || (d == bd && u.local_index < best->local_index)) best = &u;
  }
  return best;
}

const UnitState* Environment::target_at(int hero, int slot) const {
  const HeroState& h = heroes_[static_cast<std::size_t>(hero)];
  if (!h.base.alive) return nullptr;
  const Team me = h.base.team;
  const Team enemy = me == Team::A ? Team::B : Team::A;
  const TargetSlots ts = TargetSlots::for_mode(config_.mode);
  const UnitState* u = nullptr;
  if (slot >= ts.hero_begin && slot < ts.hero_begin + ts.hero_count) {
    int k = slot - ts.hero_begin;
    for (const auto& other : heroes_) {
      if (other.base.team == enemy && other.base.local_index == k) u = &other.base;
    }
  } else if (slot >= ts.creep_begin && slot < ts.creep_begin + ts.creep_count) {
    auto creeps = visible_creeps(hero, enemy);
    const auto k = static_cast<std::size_t>(slot - ts.creep_begin);
    if (k < creeps.size()) u = creeps[k];
  } else if (slot == ts.monster) {
    u = nearest_monster(hero);
  } else if (slot == ts.turret) {
    u = find_structure(UnitKind::Turret, enemy);
  } else if (slot == ts.crystal) {
    u = find_structure(UnitKind::Crystal, enemy);
  }
  if (u == nullptr || !targetable(me, *u) || !visible_to(me, *u)) return nullptr;
  return u;
}

ActionMasks Environment::legal_masks(int hero) const {
  const HeroState& h = heroes_.at(static_cast<std::size_t>(hero));
  ActionMasks m;
  m.sub_action_active = sub_actions_;
  m.legal.resize(spec_.head_sizes.size());
  for (std::size_t k = 0; k < spec_.head_sizes.size(); ++k) {
    m.legal[k].assign(static_cast<std::size_t>(spec_.head_sizes[k]), 0);
  }
  const bool trio = is_trio_layout(config_.mode);
  const std::size_t target_head = spec_.head_sizes.size() - 1;
  const std::size_t skill_x = trio ? 2 : 3;
  auto& btn = m.legal[0];
  btn[button::kNoop] = 1;

  if (!h.base.alive) {
    if (trio) {
      m.legal[1][4] = 1;
    } else {
      m.legal[1][1] = 1;
      m.legal[2][1] = 1;
    }
    m.legal[skill_x][1] = 1;
    m.legal[skill_x + 1][1] = 1;
    m.legal[target_head][0] = 1;
    return m;
  }

  const GridPos p = h.base.pos;
  bool any_move = false;
  if (trio) {
    for (int idx = 0; idx < 9; ++idx) {
      const int dx = mirror_dx(h.base.team, idx % 3 - 1), dy = idx / 3 - 1;
      if (in_grid({p.x + dx, p.y + dy})) {
        m.legal[1][static_cast<std::size_t>(idx)] = 1;
        any_move = any_move || idx != 4;
      }
    }
  } else {
    for (int idx = 0; idx < 3; ++idx) {
      const int dx = mirror_dx(h.base.team, idx - 1), dy = idx - 1;
      if (in_grid({p.x + dx, p.y})) {
        m.legal[1][static_cast<std::size_t>(idx)] = 1;
        any_move = any_move || idx != 1;
      }
      if (in_grid({p.x, p.y + dy})) {
        m.legal[2][static_cast<std::size_t>(idx)] = 1;
        any_move = any_move || idx != 1;
      }
    }
  }
  if (any_move) btn[button::kMove] = 1;
  std::fill(m.legal[skill_x].begin(), m.legal[skill_x].end(), 1);
  std::fill(m.legal[skill_x + 1].begin(), m.legal[skill_x + 1].end(), 1);

  bool any_target = false;
  for (int slot = 0; slot < spec_.head_sizes[target_head]; ++slot) {
    if (target_at(hero, slot) != nullptr) {
      m.legal[target_head][static_cast<std::size_t>(slot)] = 1;
      any_target = true;
    }
  }
  if (!any_target) m.legal[target_head][0] = 1;  // placeholder; attack is illegal
  if (any_target) btn[button::kAttack] = 1;

  const Archetype& a = kArchetypes[static_cast<std::size_t>(h.archetype)];
  if (h.skill_cooldown == 0 && h.mana >= a.skill_cost) btn[button::kSkill] = 1;
  if (h.heal_cooldown == 0 && h.mana >= c::kHealCost && h.base.hp < h.base.max_hp) btn[button::kHeal] = 1;
  return m;
}

void Environment::validate_actions(std::span<const StructuredAction> joint_actions) const {
  if (joint_actions.size() != heroes_.size()) {
    throw IllegalActionError("expected " + std::to_string(heroes_.size()) + " actions, got " +
                             std::to_string(joint_actions.size()));
  }
  for (std::size_t i = 0; i < heroes_.size(); ++i) {
    const ActionMasks m = legal_masks(static_cast<int>(i));
    const auto& a = joint_actions[i].head_indices;
    if (a.size() != spec_.head_sizes.size()) {
      throw IllegalActionError("hero " + std::to_string(i) + ": expected " + std::to_string(spec_.head_sizes.size()) +
                               " heads, got " + std::to_string(a.size()));
    }
    std::ostringstream bad;
    for (std::size_t h = 0; h < a.size(); ++h) {
      const int idx = a[h];
      if (idx < 0 || idx >= spec_.head_sizes[h] || !m.legal[h][static_cast<std::size_t>(idx)]) {
        bad << " " << spec_.head_names[h] << "=" << idx;
      }
    }
    if (!bad.str().empty()) {
      throw IllegalActionError("hero " + std::to_string(i) + " illegal head indices:" + bad.str() + " at step " +
                               std::to_string(step_));
    }
  }
}

namespace {

int sign(int v) { return (v > 0) - (v < 0); }

struct DamageEvent {
  int victim;       // unit id
  int amount;
  int source_unit;  // unit id
  int source_hero;  // hero index or -1
  int rank;         // kill-credit tie-break: heroes first, then by team-local index
};

}  // namespace

StepResult Environment::step(std::span<const StructuredAction> joint_actions) {
  if (!was_reset_) throw Error(ErrorKind::Internal, "step() before reset()");
  if (done_) throw Error(ErrorKind::Internal, "step() after episode end");
  validate_actions(joint_actions);

  const std::size_t n = heroes_.size();
  const bool trio = is_trio_layout(config_.mode);
  TickEvents ev(n);
  for (std::size_t i = 0; i < n; ++i) {
    ev.gold_before[i] = heroes_[i].gold;
    ev.exp_before[i] = heroes_[i].experience;
    ev.mana_before[i] = heroes_[i].mana;
    ev.hp_before[i] = heroes_[i].base.hp;
  }
  for (int t = 0; t < 2; ++t) {
    ev.turret_before[static_cast<std::size_t>(t)] = find_structure(UnitKind::Turret, t == 0 ? Team::A : Team::B)->hp;
  }

  std::vector<DamageEvent> damage;
  std::vector<std::pair<int, GridPos>> moves;  // (unit id, new position)
  std::vector<int> heals(n, 0);
  std::map<int, int> hero_of_unit;
  for (std::size_t i = 0; i < n; ++i) hero_of_unit[heroes_[i].base.unit_id] = static_cast<int>(i);

  auto all_units = [&]() {
    std::vector<const UnitState*> v;
    for (const auto& h : heroes_) v.push_back(&h.base);
    for (const auto& u : units_) v.push_back(&u);
    return v;
  };

  // Phase A: every unit decides on the pre-tick state.
  const std::size_t skill_x = trio ? 2 : 3;
  const std::size_t target_head = spec_.head_sizes.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    HeroState& h = heroes_[i];
    if (!h.base.alive) continue;
    const auto& a = joint_actions[i].head_indices;
    const int btn = a[0];
    h.last_button = btn;
    const Archetype& arch = kArchetypes[static_cast<std::size_t>(h.archetype)];
    const int rank = h.base.local_index;
    switch (btn) {
      case button::kMove: {
        int dx = 0, dy = 0;
        if (trio) {
          dx = a[1] % 3 - 1;
          dy = a[1] / 3 - 1;
        } else {
          dx = a[1] - 1;
          dy = a[2] - 1;
        }
        moves.emplace_back(h.base.unit_id, GridPos{h.base.pos.x + mirror_dx(h.base.team, dx), h.base.pos.y + dy});
        break;
      }
      case button::kAttack: {
        const UnitState* t = target_at(static_cast<int>(i), a[target_head]);
        if (t == nullptr) break;
        if (chebyshev(t->pos, h.base.pos) <= arch.attack_range) {
          damage.push_back({t->unit_id, hero_attack(h), h.base.unit_id, static_cast<int>(i), rank});
        } else {
          moves.emplace_back(h.base.unit_id, GridPos{h.base.pos.x + sign(t->pos.x - h.base.pos.x),
                                                     h.base.pos.y + sign(t->pos.y - h.base.pos.y)});
        }
        break;
      }
      case button::kSkill: {
        const GridPos centre{h.base.pos.x + c::kSkillReach * mirror_dx(h.base.team, a[skill_x] - 1),
                             h.base.pos.y + c::kSkillReach * (a[skill_x + 1] - 1)};
        h.mana -= arch.skill_cost;
        h.skill_cooldown = arch.skill_cooldown;
        for (const UnitState* u : all_units()) {
          if (targetable(h.base.team, *u) && chebyshev(u->pos, centre) <= c::kSkillRadius) {
            damage.push_back({u->unit_id, arch.skill_damage, h.base.unit_id, static_cast<int>(i), rank});
          }
        }
        break;
      }
      case button::kHeal:
        h.mana -= c::kHealCost;
        h.heal_cooldown = c::kHealCooldown;
        heals[i] = c::kHealAmount;
        break;
      default:
        break;
    }
  }

  auto kind_rank = [](UnitKind k) {
    switch (k) {
      case UnitKind::Creep: return 0;
      case UnitKind::Hero: return 1;
      case UnitKind::Turret: return 2;
      case UnitKind::Crystal: return 3;
      case UnitKind::Monster: return 4;
    }
    return 5;
  };

  for (const auto& u : units_) {
    if (!u.alive) continue;
    if (u.kind == UnitKind::Creep) {
      const UnitState* best = nullptr;
      for (const UnitState* v : all_units()) {
        if (v->kind == UnitKind::Monster || !targetable(u.team, *v) || chebyshev(v->pos, u.pos) > 1) continue;
        if (best == nullptr) {
          best = v;
          continue;
        }
        const int dv = chebyshev(v->pos, u.pos), db = chebyshev(best->pos, u.pos);
        const auto key_v = std::make_tuple(dv, kind_rank(v->kind), v->local_index);
        const auto key_b = std::make_tuple(db, kind_rank(best->kind), best->local_index);
        if (key_v < key_b) best = v;
      }
      if (best != nullptr) {
        damage.push_back({best->unit_id, u.attack, u.unit_id, -1, 100 + u.local_index});
      } else {
        const GridPos next{u.pos.x + (u.team == Team::A ? 1 : -1), u.pos.y};
        if (in_grid(next)) moves.emplace_back(u.unit_id, next);
      }
    } else if (u.kind == UnitKind::Turret && structures_active()) {
      const UnitState* best = nullptr;
      for (const UnitState* v : all_units()) {
        if (v->kind != UnitKind::Creep && v->kind != UnitKind::Hero) continue;
        if (!targetable(u.team, *v) || chebyshev(v->pos, u.pos) > c::kTurretRange) continue;
        if (best == nullptr) {
          best = v;
          continue;
        }
        const auto key_v = std::make_tuple(kind_rank(v->kind), chebyshev(v->pos, u.pos), v->local_index);
        const auto key_b = std::make_tuple(kind_rank(best->kind), chebyshev(best->pos, u.pos), best->local_index);
        if (key_v < key_b) best = v;
      }
      if (best != nullptr) damage.push_back({best->unit_id, u.attack, u.unit_id, -1, 200});
    } else if (u.kind == UnitKind::Monster) {
      // Hits back at whoever last hurt it, if adjacent.
      auto it = monster_aggro_.find(u.unit_id);
      if (it != monster_aggro_.end()) {
        const auto& h = heroes_[static_cast<std::size_t>(it->second)];
        if (h.base.alive && chebyshev(h.base.pos, u.pos) <= 1) {
          damage.push_back({h.base.unit_id, u.attack, u.unit_id, -1, 300});
        }
      }
    }
  }

  // Phase B: apply all damage simultaneously.
  std::map<int, int> total;
  std::map<int, DamageEvent> best_source;     // largest single contributor
  std::map<int, std::map<int, int>> by_source;  // victim -> source unit -> amount
  for (auto& d : damage) {
    if (d.source_hero >= 0) d.amount = roll_damage(d.source_unit, d.amount);
    by_source[d.victim][d.source_unit] += d.amount;
  }
  for (const auto& d : damage) {
    total[d.victim] += d.amount;
    const int amount = by_source[d.victim][d.source_unit];
    auto it = best_source.find(d.victim);
    if (it == best_source.end()) {
      best_source[d.victim] = d;
      continue;
    }
    const int best_amount = by_source[d.victim][it->second.source_unit];
    const bool better = amount > best_amount || (amount == best_amount && d.rank < it->second.rank);
    if (better) it->second = d;
  }

  std::vector<int> died_heroes;
  std::vector<int> died_units;
  for (const auto& [victim, amount] : total) {
    UnitState& v = unit_mut(victim);
    const auto& sources = by_source[victim];
    for (const auto& [src, amt] : sources) {
      auto hs = hero_of_unit.find(src);
      if (hs == hero_of_unit.end()) continue;
      const auto si = static_cast<std::size_t>(hs->second);
      if (v.kind == UnitKind::Hero) {
        ev.hurt_to_hero[si] += std::min(amt, v.hp);
        recent_damage_[static_cast<std::size_t>(hero_of_unit[victim])][si] = step_;
      } else if (v.kind == UnitKind::Monster) {
        ev.atk_monster[si] += std::min(amt, v.hp);
      } else if (v.kind == UnitKind::Crystal) {
        ev.atk_crystal[si] += std::min(amt, v.hp);
      }
    }
    if (v.kind == UnitKind::Monster) {
      const auto& src = best_source[victim];
      if (src.source_hero >= 0) monster_aggro_[victim] = src.source_hero;
    }
    v.hp = std::max(0, v.hp - amount);
    if (v.hp == 0) {
      v.alive = false;
      if (v.kind == UnitKind::Hero) {
        died_heroes.push_back(victim);
      } else {
        died_units.push_back(victim);
      }
    }
  }

  // Phase C: heals (only for heroes that survived).
  for (std::size_t i = 0; i < n; ++i) {
    auto& h = heroes_[i];
    if (heals[i] > 0 && h.base.alive) h.base.hp = std::min(h.base.max_hp, h.base.hp + heals[i]);
  }

  // Phase D: movement of surviving units.
  for (const auto& [id, pos] : moves) {
    UnitState& u = unit_mut(id);
    if (u.alive && in_grid(pos)) u.pos = pos;
  }

  // Phase E: deaths and rewards bookkeeping.
  auto hero_index_of = [&](int unit_id) { return hero_of_unit.at(unit_id); };
  for (int victim : died_heroes) {
    const int vi = hero_index_of(victim);
    HeroState& vh = heroes_[static_cast<std::size_t>(vi)];
    ev.deaths[static_cast<std::size_t>(vi)] += 1;
    vh.respawn_timer = c::kRespawnDelay;
    const int killer = best_source[victim].source_hero;
    if (killer >= 0) {
      auto& kh = heroes_[static_cast<std::size_t>(killer)];
      ev.kills[static_cast<std::size_t>(killer)] += 1;
      kh.gold += c::kGoldHeroKill;
      kh.experience += c::kExpHeroKill;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (static_cast<int>(j) == killer || heroes_[j].base.team == vh.base.team) continue;
      if (step_ - recent_damage_[static_cast<std::size_t>(vi)][j] <= c::kAssistWindow) {
        ev.assists[j] += 1;
        heroes_[j].gold += c::kGoldAssist;
      }
    }
    vh.base.pos = world(vh.base.team, {1, heroes_on(vh.base.team) == 1 ? config_.grid_height / 2
                                                                     : config_.grid_height / 2 - 1 + vh.base.local_index});
  }
  for (int victim : died_units) {
    UnitState& v = unit_mut(victim);
    const int killer = best_source[victim].source_hero;
    if (v.kind == UnitKind::Creep) {
      if (killer >= 0) {
        auto& kh = heroes_[static_cast<std::size_t>(killer)];
        ev.last_hits[static_cast<std::size_t>(killer)] += 1;
        kh.gold += c::kGoldCreep;
        kh.experience += c::kExpCreep;
      }
      for (std::size_t j = 0; j < n; ++j) {
        auto& h = heroes_[j];
        if (static_cast<int>(j) == killer || h.base.team == v.team || !h.base.alive) continue;
        if (chebyshev(h.base.pos, v.pos) <= c::kShareRadius) h.experience += c::kExpCreepShare;
      }
    } else if (v.kind == UnitKind::Monster) {
      if (killer >= 0) {
        auto& kh = heroes_[static_cast<std::size_t>(killer)];
        kh.gold += c::kGoldMonster;
        kh.experience += c::kExpMonster;
      }
      monster_respawn_[v.local_index] = step_ + 1 + c::kMonsterRespawn;
      monster_aggro_.erase(victim);
    } else if (v.kind == UnitKind::Turret) {
      const Team winner_team = v.team == Team::A ? Team::B : Team::A;
      const int team_n = heroes_on(winner_team);
      for (auto& h : heroes_) {
        if (h.base.team == winner_team) h.gold += c::kGoldTurret / std::max(1, team_n);
      }
    }
  }
  // Drop dead creeps; dead structures and monsters stay (as corpses) for observation.
  std::erase_if(units_, [](const UnitState& u) { return u.kind == UnitKind::Creep && !u.alive; });

  // Phase F: respawn, regeneration, cooldowns, ambient experience.
  for (std::size_t i = 0; i < n; ++i) {
    auto& h = heroes_[i];
    if (!h.base.alive) {
      if (h.respawn_timer > 0) --h.respawn_timer;
      if (h.respawn_timer == 0 && std::find(died_heroes.begin(), died_heroes.end(), h.base.unit_id) == died_heroes.end()) {
        h.base.alive = true;
        h.base.hp = h.base.max_hp;
        h.mana = c::kMaxMana;
        h.skill_cooldown = 0;
        h.heal_cooldown = 0;
        ev.respawned[i] = true;
      }
      continue;
    }
    const UnitState* crystal = find_structure(UnitKind::Crystal, h.base.team);
    if (chebyshev(crystal->pos, h.base.pos) <= 1) {
      h.base.hp = std::min(h.base.max_hp, h.base.hp + h.base.max_hp * c::kFountainRegenPct / 100);
      h.mana = std::min(c::kMaxMana, h.mana + c::kMaxMana * c::kFountainRegenPct / 100);
    }
    h.mana = std::min(c::kMaxMana, h.mana + c::kManaRegen);
    h.skill_cooldown = std::max(0, h.skill_cooldown - 1);
    h.heal_cooldown = std::max(0, h.heal_cooldown - 1);
    h.experience += c::kAmbientExp;
  }
  for (auto& h : heroes_) {
    if (!h.base.alive) h.last_button = button::kNoop;
  }

  ++step_;
  if (step_ % c::kWaveInterval == 0) spawn_wave();
  for (auto& u : units_) {
    if (u.kind != UnitKind::Monster || u.alive) continue;
    auto it = monster_respawn_.find(u.local_index);
    if (it != monster_respawn_.end() && it->second <= step_) {
      u.alive = true;
      u.hp = u.max_hp;
      monster_respawn_.erase(it);
    }
  }

  // Phase G: termination.
  const bool a_lost = !find_structure(UnitKind::Crystal, Team::A)->alive;
  const bool b_lost = !find_structure(UnitKind::Crystal, Team::B)->alive;
  if (a_lost || b_lost) {
    done_ = true;
    if (a_lost && b_lost) {
      ev.both_crystals = true;
    } else {
      winner_ = a_lost ? Team::B : Team::A;
      ev.crystal_lost = a_lost ? Team::A : Team::B;
    }
  }
  if (config_.mode == Mode::SubDestroyTurret && !done_ && !find_structure(UnitKind::Turret, Team::B)->alive) {
    done_ = true;
    winner_ = Team::A;
  }
  if (step_ >= config_.max_steps) done_ = true;
  for (int t = 0; t < 2; ++t) {
    ev.turret_after[static_cast<std::size_t>(t)] = find_structure(UnitKind::Turret, t == 0 ? Team::A : Team::B)->hp;
  }

  compute_rewards(ev, last_rewards_);
  return snapshot();
}

void Environment::compute_rewards(const TickEvents& ev, std::vector<RewardVector>& out) const {
  const std::size_t n = heroes_.size();
  out.assign(n, RewardVector{});
  const bool trio = is_trio_layout(config_.mode);
  auto cap = [](double v) { return std::clamp(v, -c::kDenseCap, c::kDenseCap); };
  std::vector<Team> teams(n);
  for (std::size_t i = 0; i < n; ++i) {
    const HeroState& h = heroes_[i];
    teams[i] = h.base.team;
    auto& items = out[i].items;
    const int t = h.base.team == Team::A ? 0 : 1;
    const double hp_prev = static_cast<double>(ev.hp_before[i]) / h.base.max_hp;
    const double hp_now = static_cast<double>(h.base.hp) / h.base.max_hp;
    const bool respawned = ev.respawned[i];
    const double d_money = (h.gold - ev.gold_before[i]) / c::kGoldScale;
    const double d_exp = (h.experience - ev.exp_before[i]) / c::kExpScale;
    const double d_tower = static_cast<double>(ev.turret_after[static_cast<std::size_t>(t)] -
                                               ev.turret_before[static_cast<std::size_t>(t)]) / c::kTurretHp;
    double crystal = 0.0;
    if (ev.crystal_lost) crystal = *ev.crystal_lost == h.base.team ? -c::kCrystalReward : c::kCrystalReward;
    if (!trio) {
      items["hp_point"] = respawned ? 0.0 : cap(hp_now - hp_prev);
      items["tower_hp_point"] = cap(d_tower);
      items["money"] = cap(d_money);
      items["ep_rate"] = respawned ? 0.0 : cap(static_cast<double>(h.mana - ev.mana_before[i]) / c::kMaxMana);
      items["death"] = c::kDeathReward * ev.deaths[i];
      items["kill"] = c::kKillReward * ev.kills[i];
      items["exp"] = cap(d_exp);
      items["last_hit"] = c::kLastHitReward * ev.last_hits[i];
      items["crystal"] = crystal;
    } else {
      items["hp_rate_sqrt_sqrt"] = respawned ? 0.0 : cap(std::sqrt(std::sqrt(hp_now)) - std::sqrt(std::sqrt(hp_prev)));
      items["money"] = cap(d_money);
      items["exp"] = cap(d_exp);
      items["tower"] = cap(d_tower);
      items["kill"] = c::kKillReward * ev.kills[i];
      items["assist"] = c::kAssistReward * ev.assists[i];
      items["death"] = c::kDeathReward * ev.deaths[i];
      items["hurt_to_hero"] = cap(ev.hurt_to_hero[i] / c::kHurtScale);
      items["atk_monster"] = cap(ev.atk_monster[i] / c::kHurtScale);
      items["atk_crystal"] = cap(ev.atk_crystal[i] / c::kHurtScale);
      items["win_crystal"] = crystal;
    }
    out[i].weighted = weigh_items(items, config_.reward_weights);
  }
  apply_zero_sum(out, teams);
}

// ---------------------------------------------------------------- observation

namespace {

float frac(int num, int den) { return den > 0 ? static_cast<float>(num) / static_cast<float>(den) : 0.0f; }

}  // namespace

Observation Environment::observe(int hero) const {
  return is_trio_layout(config_.mode) ? observe_trio(hero) : observe_solo(hero);
}

namespace {

struct ObsWriter {
  std::vector<float>& v;
  int W, H;
  Team team;
  GridPos self;
  float dx(GridPos p) const {
    const int d = p.x - self.x;
    return static_cast<float>(team == Team::B ? -d : d) / static_cast<float>(W - 1);
  }
  float dy(GridPos p) const { return static_cast<float>(p.y - self.y) / static_cast<float>(H - 1); }
};

}  // namespace

// Shared own-hero block and structure/global blocks; layout in env.hpp.
static void write_own(std::vector<float>& v, const HeroState& h, const Environment& env, bool hero_in_range,
                      bool under_turret) {
  const auto& cfg = env.config();
  const Archetype& a = kArchetypes[static_cast<std::size_t>(h.archetype)];
  const int lx = h.base.team == Team::B ? cfg.grid_width - 1 - h.base.pos.x : h.base.pos.x;
  v[obs::kAlive] = h.base.alive ? 1.0f : 0.0f;
  v[obs::kHp] = frac(h.base.hp, h.base.max_hp);
  v[obs::kMana] = frac(h.mana, constants::kMaxMana);
  v[obs::kX] = frac(lx, cfg.grid_width - 1);
  v[obs::kY] = frac(h.base.pos.y, cfg.grid_height - 1);
  v[obs::kSkillCd] = frac(h.skill_cooldown, a.skill_cooldown);
  v[obs::kHealCd] = frac(h.heal_cooldown, constants::kHealCooldown);
  v[obs::kRespawn] = frac(h.respawn_timer, constants::kRespawnDelay);
  v[obs::kGold] = std::min(1.0f, frac(h.gold, 1000));
  v[obs::kExp] = std::min(1.0f, frac(h.experience, 300));
  v[static_cast<std::size_t>(obs::kArchetype + h.archetype)] = 1.0f;
  v[static_cast<std::size_t>(obs::kLastButton + h.last_button)] = 1.0f;
  v[obs::kHeroInRange] = hero_in_range ? 1.0f : 0.0f;
  v[obs::kUnderEnemyTurret] = under_turret ? 1.0f : 0.0f;
}

Observation Environment::observe_solo(int hero) const {
  const HeroState& h = heroes_.at(static_cast<std::size_t>(hero));
  std::vector<float> v(kSoloObsDim, 0.0f);
  const Team me = h.base.team, enemy = me == Team::A ? Team::B : Team::A;
  ObsWriter w{v, config_.grid_width, config_.grid_height, me, h.base.pos};
  const Archetype& a = kArchetypes[static_cast<std::size_t>(h.archetype)];

  bool hero_in_range = false;
  for (const auto& e : heroes_) {
    if (e.base.team != enemy) continue;
    const std::size_t o = obs::kSoloEnemyHero;
    if (!e.base.alive) {
      v[o] = 1.0f;
      v[o + 7 + static_cast<std::size_t>(e.archetype)] = 1.0f;
    } else if (visible_to(me, e.base)) {
      v[o] = 1.0f;
      v[o + 1] = 1.0f;
      v[o + 2] = frac(e.base.hp, e.base.max_hp);
      v[o + 3] = w.dx(e.base.pos);
      v[o + 4] = w.dy(e.base.pos);
      v[o + 5] = frac(e.mana, constants::kMaxMana);
      v[o + 6] = frac(e.skill_cooldown, kArchetypes[static_cast<std::size_t>(e.archetype)].skill_cooldown);
      v[o + 7 + static_cast<std::size_t>(e.archetype)] = 1.0f;
      hero_in_range = h.base.alive && chebyshev(e.base.pos, h.base.pos) <= a.attack_range;
    }
  }
  const UnitState* eturret = find_structure(UnitKind::Turret, enemy);
  const bool under_turret = h.base.alive && structures_active() && eturret->alive &&
                            chebyshev(eturret->pos, h.base.pos) <= constants::kTurretRange;
  write_own(v, h, *this, hero_in_range, under_turret);

  auto creep_block = [&](std::size_t base, const std::vector<const UnitState*>& creeps) {
    for (std::size_t k = 0; k < 2 && k < creeps.size(); ++k) {
      const std::size_t o = base + k * obs::kCreepSize;
      v[o] = 1.0f;
      v[o + 1] = frac(creeps[k]->hp, creeps[k]->max_hp);
      v[o + 2] = w.dx(creeps[k]->pos);
      v[o + 3] = w.dy(creeps[k]->pos);
    }
  };
  const auto allies = visible_creeps(hero, me);
  const auto foes = visible_creeps(hero, enemy);
  creep_block(obs::kSoloAllyCreeps, allies);
  creep_block(obs::kSoloEnemyCreeps, foes);

  const UnitState* structs[4] = {find_structure(UnitKind::Turret, me), find_structure(UnitKind::Crystal, me), eturret,
                                 find_structure(UnitKind::Crystal, enemy)};
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t o = obs::kSoloStructures + k * obs::kStructureSize;
    v[o] = frac(structs[k]->hp, structs[k]->max_hp);
    v[o + 1] = w.dx(structs[k]->pos);
    v[o + 2] = w.dy(structs[k]->pos);
  }
  const std::size_t g = obs::kSoloGlobal;
  v[g] = frac(step_, config_.max_steps);
  v[g + 1] = frac(constants::kWaveInterval - step_ % constants::kWaveInterval, constants::kWaveInterval);
  v[g + 2] = std::min(1.0f, frac(static_cast<int>(allies.size()), 8));
  v[g + 3] = std::min(1.0f, frac(static_cast<int>(foes.size()), 8));
  v[g + 4] = targetable(me, *structs[3]) ? 1.0f : 0.0f;
  v[g + 5] = frac(h.level(), constants::kMaxHeroLevel);
  return {std::move(v)};
}

Observation Environment::observe_trio(int hero) const {
  const HeroState& h = heroes_.at(static_cast<std::size_t>(hero));
  std::vector<float> v(kTrioObsDim, 0.0f);
  const Team me = h.base.team, enemy = me == Team::A ? Team::B : Team::A;
  ObsWriter w{v, config_.grid_width, config_.grid_height, me, h.base.pos};
  const Archetype& a = kArchetypes[static_cast<std::size_t>(h.archetype)];

  std::size_t ally_slot = 0;
  for (const auto& o : heroes_) {
    if (o.base.team != me || o.base.unit_id == h.base.unit_id) continue;
    const std::size_t b = obs::kTrioAllies + ally_slot * obs::kAllySize;
    ++ally_slot;
    v[b] = o.base.alive ? 1.0f : 0.0f;
    v[b + 1] = frac(o.base.hp, o.base.max_hp);
    v[b + 2] = w.dx(o.base.pos);
    v[b + 3] = w.dy(o.base.pos);
    v[b + 4] = frac(o.mana, constants::kMaxMana);
    v[b + 5] = frac(o.skill_cooldown, kArchetypes[static_cast<std::size_t>(o.archetype)].skill_cooldown);
    v[b + 6] = static_cast<float>(o.archetype) / 2.0f;
  }
  bool hero_in_range = false;
  for (const auto& e : heroes_) {
    if (e.base.team != enemy) continue;
    const std::size_t b = obs::kTrioEnemyHeroes + static_cast<std::size_t>(e.base.local_index) * obs::kTrioEnemyHeroSize;
    if (!e.base.alive) {
      v[b] = 1.0f;
      v[b + 6] = static_cast<float>(e.archetype) / 2.0f;
    } else if (visible_to(me, e.base)) {
      const bool in_range = h.base.alive && chebyshev(e.base.pos, h.base.pos) <= a.attack_range;
      v[b] = 1.0f;
      v[b + 1] = 1.0f;
      v[b + 2] = frac(e.base.hp, e.base.max_hp);
      v[b + 3] = w.dx(e.base.pos);
      v[b + 4] = w.dy(e.base.pos);
      v[b + 5] = frac(e.skill_cooldown, kArchetypes[static_cast<std::size_t>(e.archetype)].skill_cooldown);
      v[b + 6] = static_cast<float>(e.archetype) / 2.0f;
      v[b + 7] = in_range ? 1.0f : 0.0f;
      hero_in_range = hero_in_range || in_range;
    }
  }
  const UnitState* eturret = find_structure(UnitKind::Turret, enemy);
  const bool under_turret = h.base.alive && structures_active() && eturret->alive &&
                            chebyshev(eturret->pos, h.base.pos) <= constants::kTurretRange;
  write_own(v, h, *this, hero_in_range, under_turret);

  auto creep_block = [&](std::size_t base, const std::vector<const UnitState*>& creeps) {
    for (std::size_t k = 0; k < 2 && k < creeps.size(); ++k) {
      const std::size_t o = base + k * obs::kCreepSize;
      v[o] = 1.0f;
      v[o + 1] = frac(creeps[k]->hp, creeps[k]->max_hp);
      v[o + 2] = w.dx(creeps[k]->pos);
      v[o + 3] = w.dy(creeps[k]->pos);
    }
  };
  const auto allies = visible_creeps(hero, me);
  const auto foes = visible_creeps(hero, enemy);
  creep_block(obs::kTrioAllyCreeps, allies);
  creep_block(obs::kTrioEnemyCreeps, foes);
  if (const UnitState* m = h.base.alive ? nearest_monster(hero) : nullptr; m != nullptr) {
    v[obs::kTrioMonster] = 1.0f;
    v[obs::kTrioMonster + 1] = frac(m->hp, m->max_hp);
    v[obs::kTrioMonster + 2] = w.dx(m->pos);
    v[obs::kTrioMonster + 3] = w.dy(m->pos);
  }
  const UnitState* structs[4] = {find_structure(UnitKind::Turret, me), find_structure(UnitKind::Crystal, me), eturret,
                                 find_structure(UnitKind::Crystal, enemy)};
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t o = obs::kTrioStructures + k * obs::kStructureSize;
    v[o] = frac(structs[k]->hp, structs[k]->max_hp);
    v[o + 1] = w.dx(structs[k]->pos);
    v[o + 2] = w.dy(structs[k]->pos);
  }
  const std::size_t g = obs::kTrioGlobal;
  v[g] = frac(step_, config_.max_steps);
  v[g + 1] = frac(constants::kWaveInterval - step_ % constants::kWaveInterval, constants::kWaveInterval);
  v[g + 2] = std::min(1.0f, frac(static_cast<int>(allies.size()), 8));
  v[g + 3] = std::min(1.0f, frac(static_cast<int>(foes.size()), 8));
  v[g + 4] = targetable(me, *structs[3]) ? 1.0f : 0.0f;
  v[g + 5] = frac(h.level(), constants::kMaxHeroLevel);
  return {std::move(v)};
}

StepResult Environment::snapshot() const {
  StepResult r;
  const auto n = static_cast<int>(heroes_.size());
  r.observations.reserve(static_cast<std::size_t>(n));
  r.masks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    r.observations.push_back(observe(i));
    r.masks.push_back(legal_masks(i));
  }
  r.rewards = last_rewards_;
  r.done = done_;
  r.info.winner = winner_;
  r.info.step = step_;
  for (const auto& h : heroes_) r.info.hero_gold.push_back(h.gold);
  for (int t = 0; t < 2; ++t) {
    const Team team = t == 0 ? Team::A : Team::B;
    r.info.turret_hp[static_cast<std::size_t>(t)] = find_structure(UnitKind::Turret, team)->hp;
    r.info.crystal_hp[static_cast<std::size_t>(t)] = find_structure(UnitKind::Crystal, team)->hp;
  }
  return r;
}

double subtask_score(Mode mode, const SubtaskOutcome& outcome, const SubtaskCalibration& cal) {
  if (mode == Mode::SubDestroyTurret) {
    const double den = cal.random_frame_length - cal.expert_frame_length;
    if (den == 0.0) throw ConfigError("calibration", "random_frame_length equals expert_frame_length");
    return (cal.random_frame_length - outcome.frame_length) / den;
  }
  if (mode == Mode::SubGainGold) {
    const double den = cal.expert_gain_gold - cal.random_gain_gold;
    if (den == 0.0) throw ConfigError("calibration", "expert_gain_gold equals random_gain_gold");
    return (outcome.gold - cal.random_gain_gold) / den;
  }
  throw ConfigError("mode", std::string("no sub-task score for mode ") + mode_name(mode));
}

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::IllegalAction: return "illegal_action";
    case ErrorKind::Io: return "io";
    case ErrorKind::BadMagic: return "bad_magic";
    case ErrorKind::VersionMismatch: return "version_mismatch";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::CountMismatch: return "count_mismatch";
    case ErrorKind::HashMismatch: return "hash_mismatch";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Checkpoint: return "checkpoint";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

}  // namespace mmoba
