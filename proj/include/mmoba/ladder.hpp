#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmoba/env.hpp"

namespace mmoba {

// What a policy may know besides its own observation and masks.
struct PolicyContext {
  Mode mode = Mode::Solo;
  int grid_width = 15;
  int grid_height = 7;
  static PolicyContext from(const EnvConfig& cfg) { return {cfg.mode, cfg.grid_width, cfg.grid_height}; }
};

// Per-hero decision rule. Implementations are immutable and shareable.
class HeroPolicy {
 public:
  virtual ~HeroPolicy() = default;
  virtual StructuredAction act(const Observation& obs, const ActionMasks& masks, CounterRng& rng) const = 0;
};

inline constexpr int kNumLevels = 5;

class LevelPolicy : public HeroPolicy {
 public:
  LevelPolicy(int level, PolicyContext ctx);
  int level() const { return level_; }
  StructuredAction act(const Observation& obs, const ActionMasks& masks, CounterRng& rng) const override;

 private:
  int level_;
  PolicyContext ctx_;
};

// Throws ConfigError for k outside [0, 4].
std::shared_ptr<const LevelPolicy> make_level(int k, PolicyContext ctx = {});

// Uniform over each head's legal entries.
StructuredAction uniform_legal_action(const ActionMasks& masks, CounterRng& rng);

// Controls all heroes of one team for one episode. Each hero gets its own
// RNG stream; act_team sees only the team's own observations.
class TeamController {
 public:
  virtual ~TeamController() = default;
  virtual void begin_episode(std::uint64_t /*episode_seed*/) {}
  virtual std::vector<StructuredAction> act_team(std::span<const Observation> obs, std::span<const ActionMasks> masks,
                                                 std::span<CounterRng> rngs) = 0;
};

// One HeroPolicy per hero slot.
class ScriptedTeam : public TeamController {
 public:
  explicit ScriptedTeam(std::vector<std::shared_ptr<const HeroPolicy>> per_hero) : policies_(std::move(per_hero)) {}
  std::vector<StructuredAction> act_team(std::span<const Observation> obs, std::span<const ActionMasks> masks,
                                         std::span<CounterRng> rngs) override;

 private:
  std::vector<std::shared_ptr<const HeroPolicy>> policies_;
};

std::unique_ptr<TeamController> scripted_team(const std::vector<int>& levels, PolicyContext ctx);

struct EpisodeOutcome {
  std::optional<Team> winner;
  int length = 0;
  int team_a_gold = 0;
  std::array<int, 2> turret_hp{};
  double return_a = 0.0;  // sum of zero_sum over team A heroes and ticks
};

// Optional per-tick hook: (pre-step result, joint actions, post-step result).
using StepHook = std::function<void(const StepResult&, const std::vector<StructuredAction>&, const StepResult&)>;

// Plays one episode. `team_b` may be null when the mode has no enemy heroes.
EpisodeOutcome run_episode(const EnvConfig& cfg, std::uint64_t episode_seed, TeamController& team_a,
                           TeamController* team_b, const StepHook& hook = {});

// 1 win, 0.5 draw, 0 loss from team A's point of view.
double score_for(const std::optional<Team>& winner, Team side);

struct DuelOptions {
  Mode mode = Mode::Solo;
  int workers = 1;
};

// Win rate of level a against level b over episodes seeds base_seed..base_seed+n-1.
// Sides alternate by episode parity so positional asymmetries cancel.
double duel(int level_a, int level_b, int episodes, std::uint64_t base_seed, const DuelOptions& opt = {});

struct LadderReport {
  int episodes_per_pair = 0;
  std::uint64_t seed = 0;
  std::string mode = "solo";
  std::vector<std::vector<double>> win_rate;  // [a][b]

  std::string to_csv() const;
  std::string to_json() const;
  static LadderReport from_json(const std::string& text);
};

LadderReport ladder_report(int episodes_per_pair, std::uint64_t seed, const DuelOptions& opt = {});

}  // namespace mmoba
