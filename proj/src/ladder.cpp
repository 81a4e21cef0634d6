#include "mmoba/ladder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "mmoba/parallel.hpp"

namespace mmoba {

namespace {

// Exploration noise per level; the top level plays its script unperturbed.
constexpr double kEpsilon[kNumLevels] = {1.0, 0.4, 0.25, 0.12, 0.0};
constexpr double kRetreatHp = 0.15;
constexpr double kFountainLeaveHp = 0.5;
constexpr double kSkillMinScore = 2.0;

int sgn(int v) { return (v > 0) - (v < 0); }

struct Seen {
  int slot = -1;  // target slot, -1 if not targetable through the target head
  int x = 0, y = 0;
  double hp = 0.0;  // fraction
  int hp_abs = 0;
  UnitKind kind = UnitKind::Creep;
};

// Everything the scripts read, decoded from the observation in the hero's local frame.
struct View {
  bool alive = false;
  int x = 0, y = 0, mid = 0, W = 0, H = 0;
  double hp = 0.0, mana = 0.0;
  int archetype = 0;
  int attack = 0, range = 1;
  std::vector<Seen> enemies;     // everything hittable or visible on the other side
  std::vector<Seen> ally_creeps;
  std::optional<Seen> enemy_turret;  // alive only
  Seen enemy_crystal;
  bool crystal_open = false;
};

int ipos(float v, int span) { return static_cast<int>(std::lround(v * static_cast<float>(span))); }

View decode(const Observation& o, const ActionMasks& m, const PolicyContext& ctx) {
  const auto& v = o.vector;
  const bool trio = is_trio_layout(ctx.mode);
  View s;
  s.W = ctx.grid_width;
  s.H = ctx.grid_height;
  s.mid = s.H / 2;
  s.alive = v[obs::kAlive] > 0.5f;
  s.hp = v[obs::kHp];
  s.mana = v[obs::kMana];
  s.x = ipos(v[obs::kX], s.W - 1);
  s.y = ipos(v[obs::kY], s.H - 1);
  for (int k = 0; k < 3; ++k) {
    if (v[static_cast<std::size_t>(obs::kArchetype + k)] > 0.5f) s.archetype = k;
  }
  const Archetype& a = kArchetypes[static_cast<std::size_t>(s.archetype)];
  const std::size_t g = static_cast<std::size_t>(trio ? obs::kTrioGlobal : obs::kSoloGlobal);
  const int level = static_cast<int>(std::lround(v[g + 5] * constants::kMaxHeroLevel));
  s.attack = a.attack + constants::kAttackPerLevel * level;
  s.range = a.attack_range;
  s.crystal_open = v[g + 4] > 0.5f;
  const auto& legal_t = m.legal.back();
  auto rel = [&](std::size_t o_dx, Seen& u) {
    u.x = s.x + ipos(v[o_dx], s.W - 1);
    u.y = s.y + ipos(v[o_dx + 1], s.H - 1);
  };
  auto legal_slot = [&](int slot) { return legal_t[static_cast<std::size_t>(slot)] != 0; };
  const TargetSlots ts = TargetSlots::for_mode(ctx.mode);

  // enemy heroes
  for (int k = 0; k < ts.hero_count; ++k) {
    const std::size_t b = trio ? static_cast<std::size_t>(obs::kTrioEnemyHeroes + k * obs::kTrioEnemyHeroSize)
                               : static_cast<std::size_t>(obs::kSoloEnemyHero);
    if (v[b] < 0.5f || v[b + 1] < 0.5f) continue;
    Seen u;
    u.kind = UnitKind::Hero;
    u.hp = v[b + 2];
    u.hp_abs = static_cast<int>(u.hp * 200);
    rel(b + 3, u);
    u.slot = legal_slot(ts.hero_begin + k) ? ts.hero_begin + k : -1;
    s.enemies.push_back(u);
  }
  const std::size_t ec = static_cast<std::size_t>(trio ? obs::kTrioEnemyCreeps : obs::kSoloEnemyCreeps);
  const std::size_t ac = static_cast<std::size_t>(trio ? obs::kTrioAllyCreeps : obs::kSoloAllyCreeps);
  for (int k = 0; k < 2; ++k) {
    const std::size_t b = ec + static_cast<std::size_t>(k * obs::kCreepSize);
    if (v[b] > 0.5f) {
      Seen u;
      u.hp = v[b + 1];
      u.hp_abs = static_cast<int>(std::lround(u.hp * constants::kCreepHp));
      rel(b + 2, u);
      u.slot = legal_slot(ts.creep_begin + k) ? ts.creep_begin + k : -1;
      s.enemies.push_back(u);
    }
    const std::size_t a2 = ac + static_cast<std::size_t>(k * obs::kCreepSize);
    if (v[a2] > 0.5f) {
      Seen u;
      u.hp = v[a2 + 1];
      rel(a2 + 2, u);
      s.ally_creeps.push_back(u);
    }
  }
  if (trio && v[obs::kTrioMonster] > 0.5f) {
    Seen u;
    u.kind = UnitKind::Monster;
    u.hp = v[obs::kTrioMonster + 1];
    u.hp_abs = static_cast<int>(std::lround(u.hp * constants::kMonsterHp));
    rel(obs::kTrioMonster + 2, u);
    u.slot = legal_slot(ts.monster) ? ts.monster : -1;
    s.enemies.push_back(u);
  }
  const std::size_t st = static_cast<std::size_t>(trio ? obs::kTrioStructures : obs::kSoloStructures);
  const std::size_t et = st + obs::kEnemyTurret * obs::kStructureSize;
  const std::size_t ecr = st + obs::kEnemyCrystal * obs::kStructureSize;
  if (v[et] > 0.0f) {
    Seen u;
    u.kind = UnitKind::Turret;
    u.hp = v[et];
    rel(et + 1, u);
    u.slot = legal_slot(ts.turret) ? ts.turret : -1;
    s.enemy_turret = u;
    if (u.slot >= 0) s.enemies.push_back(u);
  }
  s.enemy_crystal.kind = UnitKind::Crystal;
  s.enemy_crystal.hp = v[ecr];
  rel(ecr + 1, s.enemy_crystal);
  s.enemy_crystal.slot = legal_slot(ts.crystal) ? ts.crystal : -1;
  if (s.enemy_crystal.slot >= 0) s.enemies.push_back(s.enemy_crystal);
  return s;
}

int dist(const View& s, const Seen& u) { return chebyshev({s.x, s.y}, {u.x, u.y}); }

// Fill every head with its first legal index; the caller overwrites the active ones.
StructuredAction filler(const ActionMasks& m) {
  StructuredAction a;
  for (const auto& head : m.legal) {
    int idx = 0;
    while (idx + 1 < static_cast<int>(head.size()) && !head[static_cast<std::size_t>(idx)]) ++idx;
    a.head_indices.push_back(idx);
  }
  return a;
}

class Script {
 public:
  Script(int level, const PolicyContext& ctx, const ActionMasks& m, const View& s)
      : level_(level), ctx_(ctx), m_(m), s_(s), trio_(is_trio_layout(ctx.mode)) {}

  StructuredAction decide() {
    StructuredAction a = filler(m_);
    a.head_indices[0] = button::kNoop;
    if (!s_.alive) return a;

    if (level_ >= 4) {
      // Last-hit a creep we can finish this tick.
      const Seen* best = nullptr;
      for (const auto& e : s_.enemies) {
        if (e.kind != UnitKind::Creep || e.slot < 0 || dist(s_, e) > s_.range) continue;
        if (e.hp_abs <= s_.attack && (best == nullptr || e.hp_abs < best->hp_abs)) best = &e;
      }
      bool hero_near = false;
      for (const auto& e : s_.enemies) hero_near = hero_near || (e.kind == UnitKind::Hero && dist(s_, e) <= s_.range);
      if (best != nullptr && can(button::kAttack) && !hero_near) return attack(a, *best);
    }
    if (level_ >= 3 && s_.hp < 0.5 && can(button::kHeal)) {
      a.head_indices[0] = button::kHeal;
      return a;
    }
    if (level_ >= 2) {
      const int home = chebyshev({s_.x, s_.y}, {0, s_.mid});
      // Stand and fight a weaker hero already on us; running only gets us shot.
      const Seen* duelist = nullptr;
      for (const auto& e : s_.enemies) {
        if (e.kind == UnitKind::Hero && e.slot >= 0 && dist(s_, e) <= s_.range) duelist = &e;
      }
      const bool winning = duelist != nullptr && duelist->hp <= s_.hp;
      if (winning && can(button::kAttack)) return attack(a, *duelist);
      if (s_.hp < kRetreatHp || (s_.hp < kFountainLeaveHp && home <= 2)) {
        if (home <= 1) return a;  // regenerate at the fountain
        return move_toward(a, 0, s_.mid);
      }
    }
    if (level_ >= 3 && can(button::kSkill)) {
      int ox = 0, oy = 0;
      const double score = best_skill(ox, oy);
      if (score >= kSkillMinScore) {
        a.head_indices[0] = button::kSkill;
        const std::size_t sx = trio_ ? 2 : 3;
        a.head_indices[sx] = ox + 1;
        a.head_indices[sx + 1] = oy + 1;
        return a;
      }
    }
    if (level_ >= 4 && in_turret_danger(s_.x, s_.y)) {
      return move_toward(a, s_.x - 1, s_.y);
    }
    if (can(button::kAttack)) {
      const Seen* t = pick_target();
      if (t != nullptr) return attack(a, *t);
    }
    // Advance toward the enemy base.
    int tx = s_.W - 1, ty = s_.mid;
    if (s_.enemy_turret) {
      tx = s_.enemy_turret->x;
      ty = s_.enemy_turret->y;
    }
    if (level_ >= 4) {
      const int nx = s_.x + sgn(tx - s_.x), ny = s_.y + sgn(ty - s_.y);
      if (in_turret_danger(nx, ny)) return a;
    }
    return move_toward(a, tx, ty);
  }

 private:
  bool can(int btn) const { return m_.legal[0][static_cast<std::size_t>(btn)] != 0; }

  bool ally_creeps_tanking() const {
    if (!s_.enemy_turret) return true;
    for (const auto& c : s_.ally_creeps) {
      if (chebyshev({c.x, c.y}, {s_.enemy_turret->x, s_.enemy_turret->y}) <= constants::kTurretRange) return true;
    }
    return false;
  }

  bool in_turret_danger(int x, int y) const {
    if (!s_.enemy_turret || ctx_.mode == Mode::SubGainGold) return false;
    if (chebyshev({x, y}, {s_.enemy_turret->x, s_.enemy_turret->y}) > constants::kTurretRange) return false;
    return !ally_creeps_tanking();
  }

  const Seen* pick_target() const {
    const Seen* best = nullptr;
    if (level_ >= 2) {
      // Focus the weakest target already in range.
      for (const auto& e : s_.enemies) {
        if (e.slot < 0 || dist(s_, e) > s_.range) continue;
        if (level_ >= 4 && e.kind == UnitKind::Turret && !ally_creeps_tanking()) continue;
        if (best == nullptr || e.hp < best->hp) best = &e;
      }
      if (best != nullptr) return best;
    }
    int best_d = 1 << 20;
    for (const auto& e : s_.enemies) {
      if (e.slot < 0) continue;
      const int d = dist(s_, e);
      if (level_ >= 4) {
        // Would chasing it walk us under the turret?
        const int nx = s_.x + sgn(e.x - s_.x), ny = s_.y + sgn(e.y - s_.y);
        if (d > s_.range && in_turret_danger(nx, ny)) continue;
        // jungle detours only pay off when farming is the whole game
        if (e.kind == UnitKind::Monster && d > 3 && ctx_.mode != Mode::SubGainGold) continue;
      }
      if (d < best_d) {
        best_d = d;
        best = &e;
      }
    }
    return best;
  }

  double best_skill(int& ox, int& oy) const {
    double best = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const GridPos c{s_.x + constants::kSkillReach * dx, s_.y + constants::kSkillReach * dy};
        double score = 0.0;
        for (const auto& e : s_.enemies) {
          if (chebyshev(c, {e.x, e.y}) > constants::kSkillRadius) continue;
          if (e.kind == UnitKind::Crystal && !s_.crystal_open) continue;
          score += e.kind == UnitKind::Hero ? 3.0 : e.kind == UnitKind::Monster ? 0.5 : 1.0;
        }
        if (score > best) {
          best = score;
          ox = dx;
          oy = dy;
        }
      }
    }
    return best;
  }

  StructuredAction& attack(StructuredAction& a, const Seen& t) const {
    a.head_indices[0] = button::kAttack;
    a.head_indices.back() = t.slot;
    return a;
  }

  StructuredAction& move_toward(StructuredAction& a, int tx, int ty) const {
    int dx = sgn(tx - s_.x), dy = sgn(ty - s_.y);
    if (!can(button::kMove) || (dx == 0 && dy == 0)) {
      a.head_indices[0] = button::kNoop;
      return a;
    }
    if (trio_) {
      auto ok = [&](int ddx, int ddy) { return m_.legal[1][static_cast<std::size_t>((ddy + 1) * 3 + ddx + 1)] != 0; };
      if (!ok(dx, dy)) {
        if (ok(dx, 0)) {
          dy = 0;
        } else if (ok(0, dy)) {
          dx = 0;
        } else {
          dx = dy = 0;
        }
      }
      if (dx == 0 && dy == 0) {
        a.head_indices[0] = button::kNoop;
        return a;
      }
      a.head_indices[1] = (dy + 1) * 3 + dx + 1;
    } else {
      if (!m_.legal[1][static_cast<std::size_t>(dx + 1)]) dx = 0;
      if (!m_.legal[2][static_cast<std::size_t>(dy + 1)]) dy = 0;
      if (dx == 0 && dy == 0) {
        a.head_indices[0] = button::kNoop;
        return a;
      }
      a.head_indices[1] = dx + 1;
      a.head_indices[2] = dy + 1;
    }
    a.head_indices[0] = button::kMove;
    return a;
  }

  int level_;
  const PolicyContext& ctx_;
  const ActionMasks& m_;
  const View& s_;
  bool trio_;
};

}  // namespace

StructuredAction uniform_legal_action(const ActionMasks& masks, CounterRng& rng) {
  StructuredAction a;
  a.head_indices.reserve(masks.legal.size());
  for (const auto& head : masks.legal) {
    int count = 0;
    for (auto b : head) count += b;
    if (count == 0) throw Error(ErrorKind::Internal, "head with no legal entry");
    int pick = rng.below(count);
    for (std::size_t i = 0; i < head.size(); ++i) {
      if (head[i] && pick-- == 0) {
        a.head_indices.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  return a;
}

LevelPolicy::LevelPolicy(int level, PolicyContext ctx) : level_(level), ctx_(ctx) {
  if (level < 0 || level >= kNumLevels) throw ConfigError("level", "must lie in [0, 4], got " + std::to_string(level));
}

StructuredAction LevelPolicy::act(const Observation& obs, const ActionMasks& masks, CounterRng& rng) const {
  // Draw the exploration coin first so every level consumes the stream alike.
  const bool explore = rng.bernoulli(kEpsilon[level_]);
  if (explore) return uniform_legal_action(masks, rng);
  const View s = decode(obs, masks, ctx_);
  Script script(level_, ctx_, masks, s);
  StructuredAction a = script.decide();
  // Rules only reason about the heads they use; any leftover illegal index falls back to the first legal one.
  for (std::size_t h = 0; h < a.head_indices.size(); ++h) {
    const auto& head = masks.legal[h];
    if (!head[static_cast<std::size_t>(a.head_indices[h])]) {
      a.head_indices[h] = static_cast<int>(std::find(head.begin(), head.end(), 1) - head.begin());
    }
  }
  return a;
}

std::shared_ptr<const LevelPolicy> make_level(int k, PolicyContext ctx) {
  return std::make_shared<const LevelPolicy>(k, ctx);
}

std::vector<StructuredAction> ScriptedTeam::act_team(std::span<const Observation> obs,
                                                     std::span<const ActionMasks> masks, std::span<CounterRng> rngs) {
  std::vector<StructuredAction> out;
  out.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out.push_back(policies_.at(i)->act(obs[i], masks[i], rngs[i]));
  return out;
}

std::unique_ptr<TeamController> scripted_team(const std::vector<int>& levels, PolicyContext ctx) {
  std::vector<std::shared_ptr<const HeroPolicy>> per_hero;
  for (int k : levels) per_hero.push_back(make_level(k, ctx));
  return std::make_unique<ScriptedTeam>(std::move(per_hero));
}

double score_for(const std::optional<Team>& winner, Team side) {
  if (!winner) return 0.5;
  return *winner == side ? 1.0 : 0.0;
}

EpisodeOutcome run_episode(const EnvConfig& cfg, std::uint64_t episode_seed, TeamController& team_a,
                           TeamController* team_b, const StepHook& hook) {
  Environment env(cfg);
  StepResult r = env.reset(episode_seed);
  const int na = env.heroes_on(Team::A), nb = env.heroes_on(Team::B);
  if (nb > 0 && team_b == nullptr) throw ConfigError("opponent", "mode has enemy heroes but no opponent controller");
  std::vector<CounterRng> rngs;
  for (int i = 0; i < na + nb; ++i) rngs.emplace_back(mix_seed(episode_seed, 0xac7 + static_cast<std::uint64_t>(i)));
  team_a.begin_episode(episode_seed);
  if (team_b != nullptr) team_b->begin_episode(episode_seed);

  EpisodeOutcome out;
  const auto ua = static_cast<std::size_t>(na);
  while (!r.done) {
    std::span<const Observation> obs(r.observations);
    std::span<const ActionMasks> masks(r.masks);
    std::span<CounterRng> rs(rngs);
    std::vector<StructuredAction> joint = team_a.act_team(obs.first(ua), masks.first(ua), rs.first(ua));
    if (nb > 0) {
      auto b = team_b->act_team(obs.subspan(ua), masks.subspan(ua), rs.subspan(ua));
      joint.insert(joint.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
    }
    StepResult next = env.step(joint);
    for (std::size_t i = 0; i < ua; ++i) out.return_a += next.rewards[i].zero_sum;
    if (hook) hook(r, joint, next);
    r = std::move(next);
  }
  out.winner = r.info.winner;
  out.length = r.info.step;
  for (std::size_t i = 0; i < ua; ++i) out.team_a_gold += r.info.hero_gold[i];
  out.turret_hp = r.info.turret_hp;
  return out;
}

double duel(int level_a, int level_b, int episodes, std::uint64_t base_seed, const DuelOptions& opt) {
  if (episodes < 1) throw ConfigError("episodes", "must be >= 1");
  const EnvConfig cfg = EnvConfig::defaults(opt.mode);
  const PolicyContext ctx = PolicyContext::from(cfg);
  const std::size_t team = cfg.archetypes_a.size();
  // Validate up front so errors surface on the calling thread.
  make_level(level_a, ctx);
  make_level(level_b, ctx);
  auto scores = parallel_map<double>(episodes, opt.workers, [&](int i) {
    auto pa = scripted_team(std::vector<int>(team, level_a), ctx);
    auto pb = scripted_team(std::vector<int>(team, level_b), ctx);
    const bool swap = (i % 2) == 1;
    const auto seed = base_seed + static_cast<std::uint64_t>(i);
    const EpisodeOutcome o = swap ? run_episode(cfg, seed, *pb, pa.get()) : run_episode(cfg, seed, *pa, pb.get());
    return score_for(o.winner, swap ? Team::B : Team::A);
  });
  double total = 0.0;
  for (double s : scores) total += s;
  return total / episodes;
}

LadderReport ladder_report(int episodes_per_pair, std::uint64_t seed, const DuelOptions& opt) {
  LadderReport rep;
  rep.episodes_per_pair = episodes_per_pair;
  rep.seed = seed;
  rep.mode = mode_name(opt.mode);
  rep.win_rate.assign(kNumLevels, std::vector<double>(kNumLevels, 0.5));
  for (int a = 0; a < kNumLevels; ++a) {
    for (int b = 0; b < kNumLevels; ++b) rep.win_rate[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
        duel(a, b, episodes_per_pair, seed, opt);
  }
  return rep;
}

std::string LadderReport::to_csv() const {
  std::ostringstream os;
  os << "level_a,level_b,win_rate,episodes\n";
  os.precision(17);
  for (std::size_t a = 0; a < win_rate.size(); ++a) {
    for (std::size_t b = 0; b < win_rate[a].size(); ++b) {
      os << a << ',' << b << ',' << win_rate[a][b] << ',' << episodes_per_pair << '\n';
    }
  }
  return os.str();
}

std::string LadderReport::to_json() const {
  nlohmann::json j;
  j["episodes_per_pair"] = episodes_per_pair;
  j["seed"] = seed;
  j["mode"] = mode;
  j["win_rate"] = win_rate;
  return j.dump(2) + "\n";
}

LadderReport LadderReport::from_json(const std::string& text) {
  LadderReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.episodes_per_pair = j.at("episodes_per_pair").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.mode = j.at("mode").get<std::string>();
    r.win_rate = j.at("win_rate").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("ladder report: ") + e.what());
  }
  return r;
}

}  // namespace mmoba
