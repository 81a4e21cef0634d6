#include "doctest.h"

#include <array>

#include "mmoba/ladder.hpp"

using namespace mmoba;

namespace {

ActionMasks full_masks(Mode mode) {
  ActionMasks m;
  m.sub_action_active = sub_action_table(mode);
  for (int size : ActionSpec::for_mode(mode).head_sizes) m.legal.emplace_back(static_cast<std::size_t>(size), 1);
  return m;
}

}  // namespace

TEST_CASE("level range is checked") {
  CHECK_THROWS_AS(make_level(5), ConfigError);
  CHECK_THROWS_AS(make_level(-1), ConfigError);
  CHECK(make_level(4)->level() == 4);
}

TEST_CASE("level 0 buttons are uniform under full masks") {
  auto p = make_level(0);
  const auto masks = full_masks(Mode::Solo);
  Observation o{std::vector<float>(kSoloObsDim, 0.0f)};
  CounterRng rng(99);
  std::array<int, 5> counts{};
  const int n = 1000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(p->act(o, masks, rng).head_indices[0])];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 5.0) * (c - n / 5.0) / (n / 5.0);
  CHECK(chi2 < 13.277);  // 4 dof, p = 0.01
}

TEST_CASE("a single legal tuple is always returned") {
  for (Mode mode : {Mode::Solo, Mode::Trio}) {
    const auto spec = ActionSpec::for_mode(mode);
    ActionMasks m = full_masks(mode);
    StructuredAction only;
    for (std::size_t h = 0; h < m.legal.size(); ++h) {
      std::fill(m.legal[h].begin(), m.legal[h].end(), 0);
      const int idx = spec.head_sizes[h] - 1;
      m.legal[h][static_cast<std::size_t>(idx)] = 1;
      only.head_indices.push_back(idx);
    }
    Observation o{std::vector<float>(static_cast<std::size_t>(obs_dim(mode)), 0.5f)};
    for (int k = 0; k < kNumLevels; ++k) {
      auto p = make_level(k, {mode, 15, 7});
      CounterRng rng(static_cast<std::uint64_t>(k));
      for (int i = 0; i < 20; ++i) CHECK(p->act(o, m, rng) == only);
    }
  }
}

TEST_CASE("scripted actions respect masks in real games") {
  for (Mode mode : {Mode::Solo, Mode::Trio, Mode::SubDestroyTurret, Mode::SubGainGold}) {
    const auto cfg = EnvConfig::defaults(mode);
    for (int k = 0; k < kNumLevels; ++k) {
      auto a = scripted_team(std::vector<int>(cfg.archetypes_a.size(), k), PolicyContext::from(cfg));
      auto b = scripted_team(std::vector<int>(cfg.archetypes_b.size(), k), PolicyContext::from(cfg));
      // run_episode would throw IllegalActionError on any violation.
      CHECK_NOTHROW(run_episode(cfg, 17, *a, cfg.archetypes_b.empty() ? nullptr : b.get()));
    }
  }
}

TEST_CASE("duels are deterministic and self-play is balanced") {
  const double w1 = duel(2, 2, 40, 5);
  CHECK(w1 == duel(2, 2, 40, 5));
  CHECK(duel(3, 1, 40, 5, {Mode::Solo, 2}) == duel(3, 1, 40, 5, {Mode::Solo, 1}));
  CHECK(w1 >= 0.3);
  CHECK(w1 <= 0.7);
  CHECK(score_for(std::nullopt, Team::A) == 0.5);
}

TEST_CASE("ladder report round-trips through json") {
  LadderReport r;
  r.episodes_per_pair = 3;
  r.seed = 11;
  r.win_rate = {{0.5, 1.0 / 3.0}, {2.0 / 3.0, 0.5}};
  const auto j = r.to_json();
  const auto back = LadderReport::from_json(j);
  CHECK(back.win_rate == r.win_rate);
  CHECK(back.to_json() == j);
  CHECK(r.to_csv().rfind("level_a,level_b,win_rate,episodes\n", 0) == 0);
  CHECK_THROWS_AS(LadderReport::from_json("{\"seed\": 1}"), Error);
}
