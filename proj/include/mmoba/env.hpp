#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmoba/error.hpp"
#include "mmoba/rng.hpp"

namespace mmoba {

enum class Mode : std::uint8_t { Solo, Trio, SubDestroyTurret, SubGainGold };
enum class Team : std::uint8_t { A, B, Neutral };
enum class UnitKind : std::uint8_t { Hero, Creep, Turret, Crystal, Monster };

const char* mode_name(Mode mode);
Mode parse_mode(const std::string& name);

// Solo-like modes use the 1v1 lane layout; Trio-like modes the 3v3 one.
inline bool is_trio_layout(Mode m) { return m == Mode::Trio || m == Mode::SubGainGold; }
inline bool is_subtask(Mode m) { return m == Mode::SubDestroyTurret || m == Mode::SubGainGold; }

// All tunable game constants live here. docs/env.md mirrors this table.
namespace constants {
inline constexpr int kWaveInterval = 20;         // creep wave every N ticks (and at tick 0)
inline constexpr int kCreepsPerWave = 2;
inline constexpr int kCreepHp = 60;
inline constexpr int kCreepAttack = 6;
inline constexpr int kCreepVision = 2;
inline constexpr int kTurretHp = 300;
inline constexpr int kTurretAttack = 30;
inline constexpr int kTurretRange = 2;
inline constexpr int kTurretVision = 3;
inline constexpr int kCrystalHp = 200;
inline constexpr int kMonsterHp = 120;
inline constexpr int kMonsterAttack = 8;
inline constexpr int kMonsterRespawn = 30;
inline constexpr int kRespawnDelay = 15;
inline constexpr int kMaxMana = 100;
inline constexpr int kManaRegen = 1;
inline constexpr int kFountainRegenPct = 10;      // % of max hp/mana per tick next to own crystal
inline constexpr int kHealAmount = 40;
inline constexpr int kHealCost = 25;
inline constexpr int kHealCooldown = 12;
inline constexpr int kVisionRadius = 4;
inline constexpr int kMaxHeroLevel = 4;
inline constexpr int kExpPerLevel = 60;
inline constexpr int kAttackPerLevel = 2;
inline constexpr int kAmbientExp = 1;
inline constexpr int kGoldCreep = 20;
inline constexpr int kExpCreep = 10;
inline constexpr int kExpCreepShare = 4;          // allied heroes within kShareRadius
inline constexpr int kShareRadius = 3;
inline constexpr int kGoldHeroKill = 60;
inline constexpr int kExpHeroKill = 30;
inline constexpr int kGoldAssist = 20;
inline constexpr int kAssistWindow = 5;
inline constexpr int kGoldMonster = 40;
inline constexpr int kExpMonster = 20;
inline constexpr int kGoldTurret = 100;
inline constexpr int kSkillReach = 2;             // skill centre = pos + reach * offset
inline constexpr int kSkillRadius = 1;
inline constexpr double kCritMultiplier = 2.0;
// Reward item normalisers.
inline constexpr double kGoldScale = 100.0;
inline constexpr double kExpScale = 100.0;
inline constexpr double kHurtScale = 100.0;
inline constexpr double kLastHitReward = 0.5;
inline constexpr double kKillReward = 1.0;
inline constexpr double kDeathReward = -1.0;
inline constexpr double kAssistReward = 0.5;
inline constexpr double kCrystalReward = 5.0;
// Per-tick caps on |dense item| (documented bounds, enforced by clamping).
inline constexpr double kDenseCap = 1.0;
}  // namespace constants

struct Archetype {
  const char* name;
  int max_hp;
  int attack;
  int attack_range;
  int skill_damage;
  int skill_cost;
  int skill_cooldown;
};

inline constexpr std::array<Archetype, 3> kArchetypes{{
    {"marksman", 160, 12, 2, 30, 30, 6},
    {"warrior", 220, 14, 1, 26, 30, 6},
    {"mage", 150, 9, 2, 42, 35, 7},
}};

// Affine calibration constants for the normalised sub-task score. Defaults are the
// level-0 and level-4 means over 300 episodes (calibrate_subtasks, seed 0xca1), rounded.
struct SubtaskCalibration {
  double random_frame_length = 396.0;
  double expert_frame_length = 79.0;
  double random_gain_gold = 357.0;
  double expert_gain_gold = 790.0;
};

struct EnvConfig {
  Mode mode = Mode::Solo;
  int grid_width = 15;
  int grid_height = 7;
  int max_steps = 400;
  // w1..w5: farming, KDA, damage, pushing, win/lose.
  std::array<double, 5> reward_weights{1.0, 1.0, 1.0, 1.0, 1.0};
  double crit_chance = 0.1;
  std::vector<int> archetypes_a{0};
  std::vector<int> archetypes_b{0};
  std::uint64_t seed = 0;
  SubtaskCalibration calibration{};

  static EnvConfig defaults(Mode mode);
  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

struct GridPos {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

inline int chebyshev(GridPos a, GridPos b) {
  const int dx = a.x > b.x ? a.x - b.x : b.x - a.x;
  const int dy = a.y > b.y ? a.y - b.y : b.y - a.y;
  return dx > dy ? dx : dy;
}

struct UnitState {
  int unit_id = 0;
  UnitKind kind = UnitKind::Creep;
  Team team = Team::Neutral;
  GridPos pos{};
  int hp = 0;
  int max_hp = 0;
  int attack = 0;
  bool alive = false;
  int local_index = 0;  // spawn order within the team; mirrors across teams
};

struct ActionSpec {
  std::vector<std::string> head_names;
  std::vector<int> head_sizes;

  static ActionSpec for_mode(Mode mode);
  int num_heads() const { return static_cast<int>(head_sizes.size()); }
  int total_size() const;
  int offset(int head) const;
  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

struct StructuredAction {
  std::vector<int> head_indices;
  friend bool operator==(const StructuredAction&, const StructuredAction&) = default;
};

// Button indices shared by both layouts.
namespace button {
inline constexpr int kNoop = 0;
inline constexpr int kMove = 1;
inline constexpr int kAttack = 2;
inline constexpr int kSkill = 3;
inline constexpr int kHeal = 4;
inline constexpr int kCount = 5;
}  // namespace button

struct ActionMasks {
  std::vector<std::vector<std::uint8_t>> legal;             // [head][index]
  std::vector<std::vector<std::uint8_t>> sub_action_active;  // [button][head]

  bool admits(const StructuredAction& a) const;
  // Head-wise activity for the button chosen in `a`.
  const std::vector<std::uint8_t>& active_row(const StructuredAction& a) const {
    return sub_action_active.at(static_cast<std::size_t>(a.head_indices.at(0)));
  }
};

// Which heads each button executes; identical for every state of a mode.
std::vector<std::vector<std::uint8_t>> sub_action_table(Mode mode);

struct HeroState {
  UnitState base{};
  int mana = 0;
  int gold = 0;
  int experience = 0;
  int skill_cooldown = 0;
  int heal_cooldown = 0;
  int respawn_timer = 0;
  int archetype = 0;
  int vision_radius = constants::kVisionRadius;
  int last_button = button::kNoop;
  int level() const;
};

struct RewardVector {
  std::map<std::string, double> items;
  double weighted = 0.0;
  double zero_sum = 0.0;
};

// Reward item names in storage order, and the w-group (0..4) each belongs to.
const std::vector<std::string>& reward_item_names(Mode mode);
int reward_item_group(const std::string& item);

// weighted = sum over items of w[group(item)] * item.
double weigh_items(const std::map<std::string, double>& items, const std::array<double, 5>& w);

// zero_sum[i] = weighted[i] - mean(weighted over heroes of the other team).
// Heroes with no opposing heroes keep zero_sum = weighted.
void apply_zero_sum(std::span<RewardVector> rewards, std::span<const Team> teams);

struct Observation {
  std::vector<float> vector;
  friend bool operator==(const Observation&, const Observation&) = default;
};

inline constexpr int kSoloObsDim = 64;
inline constexpr int kTrioObsDim = 96;
int obs_dim(Mode mode);

// Feature offsets inside an Observation. Coordinates are mirrored for team B so
// that +x always points toward the enemy base; dx/dy are normalised by (W-1)/(H-1).
namespace obs {
// own-hero block, both layouts
inline constexpr int kAlive = 0, kHp = 1, kMana = 2, kX = 3, kY = 4, kSkillCd = 5, kHealCd = 6,
                     kRespawn = 7, kGold = 8, kExp = 9, kArchetype = 10, kLastButton = 13,
                     kHeroInRange = 18, kUnderEnemyTurret = 19, kOwnSize = 20;
// Solo
inline constexpr int kSoloEnemyHero = 20, kEnemyHeroSize = 10;
inline constexpr int kSoloAllyCreeps = 30, kSoloEnemyCreeps = 38, kCreepSize = 4;
inline constexpr int kSoloStructures = 46, kStructureSize = 3;
inline constexpr int kSoloGlobal = 58;
// Trio
inline constexpr int kTrioAllies = 20, kAllySize = 7;
inline constexpr int kTrioEnemyHeroes = 34, kTrioEnemyHeroSize = 8;
inline constexpr int kTrioAllyCreeps = 58, kTrioEnemyCreeps = 66;
inline constexpr int kTrioMonster = 74, kMonsterSize = 4;
inline constexpr int kTrioStructures = 78;
inline constexpr int kTrioGlobal = 90;
// structure order inside the structure block
inline constexpr int kOwnTurret = 0, kOwnCrystal = 1, kEnemyTurret = 2, kEnemyCrystal = 3;
}  // namespace obs

// Target head slot layout.
struct TargetSlots {
  int hero_begin, hero_count;
  int creep_begin, creep_count;
  int monster;  // -1 when absent
  int turret;
  int crystal;
  static TargetSlots for_mode(Mode mode);
};

struct StepInfo {
  std::optional<Team> winner;
  int step = 0;
  std::vector<int> hero_gold;
  std::array<int, 2> turret_hp{};
  std::array<int, 2> crystal_hp{};
};

struct StepResult {
  std::vector<Observation> observations;
  std::vector<ActionMasks> masks;
  std::vector<RewardVector> rewards;
  bool done = false;
  StepInfo info;
};

// Raised by Environment::step when an action violates the legal masks.
class IllegalActionError : public Error {
 public:
  explicit IllegalActionError(const std::string& what) : Error(ErrorKind::IllegalAction, what) {}
};

// Deterministic grid MOBA. Heroes are indexed team A first, then team B.
class Environment {
 public:
  explicit Environment(EnvConfig config);

  StepResult reset(std::uint64_t episode_seed);
  StepResult step(std::span<const StructuredAction> joint_actions);

  ActionMasks legal_masks(int hero) const;
  Observation observe(int hero) const;

  const EnvConfig& config() const { return config_; }
  const ActionSpec& action_spec() const { return spec_; }
  int num_heroes() const { return static_cast<int>(heroes_.size()); }
  int heroes_on(Team team) const;
  int step_index() const { return step_; }
  bool done() const { return done_; }
  std::optional<Team> winner() const { return winner_; }

  const std::vector<HeroState>& heroes() const { return heroes_; }
  const std::vector<UnitState>& units() const { return units_; }
  // Direct state access for tests and tooling; callers keep invariants.
  HeroState& hero_mut(int hero) { return heroes_.at(static_cast<std::size_t>(hero)); }
  UnitState& unit_mut(int unit_id);
  const UnitState* find_structure(UnitKind kind, Team team) const;
  // True if `target` is inside the vision of `team`.
  bool visible_to(Team team, const UnitState& target) const;
  StepResult snapshot() const;

 private:
  struct TickEvents;

  void spawn_wave();
  void spawn_monsters();
  UnitState make_unit(UnitKind kind, Team team, GridPos pos, int hp, int attack, int local_index);
  GridPos world(Team team, GridPos local) const;
  int mirror_dx(Team team, int dx) const { return team == Team::B ? -dx : dx; }
  bool in_grid(GridPos p) const;
  bool structures_active() const;
  bool targetable(Team attacker, const UnitState& u) const;
  const UnitState* target_at(int hero, int slot) const;
  std::vector<const UnitState*> visible_creeps(int hero, Team of_team) const;
  const UnitState* nearest_monster(int hero) const;
  int hero_attack(const HeroState& h) const;
  int roll_damage(int unit_id, int base);
  void validate_actions(std::span<const StructuredAction> joint_actions) const;
  void compute_rewards(const TickEvents& ev, std::vector<RewardVector>& out) const;
  Observation observe_solo(int hero) const;
  Observation observe_trio(int hero) const;

  EnvConfig config_;
  ActionSpec spec_;
  std::vector<std::vector<std::uint8_t>> sub_actions_;
  std::vector<HeroState> heroes_;
  std::vector<UnitState> units_;  // creeps, structures, monsters (heroes live in heroes_)
  std::vector<std::vector<int>> recent_damage_;  // [victim hero][attacker hero] -> last tick
  std::map<int, int> monster_respawn_;           // local_index -> tick
  std::map<int, int> monster_aggro_;             // monster unit id -> hero index
  std::map<int, std::uint64_t> unit_rng_counter_;
  std::vector<RewardVector> last_rewards_;
  std::uint64_t episode_seed_ = 0;
  int next_unit_id_ = 0;
  int wave_count_ = 0;
  int step_ = 0;
  bool done_ = false;
  bool was_reset_ = false;
  std::optional<Team> winner_;
  std::array<int, 2> last_turret_hp_{};
  std::array<int, 2> last_crystal_hp_{};
};

struct SubtaskOutcome {
  double frame_length = 0.0;  // DestroyTurret
  double gold = 0.0;          // GainGold
};

// Normalised sub-task score; random calibration maps to 0 and expert to 1.
double subtask_score(Mode mode, const SubtaskOutcome& outcome, const SubtaskCalibration& cal);

}  // namespace mmoba
