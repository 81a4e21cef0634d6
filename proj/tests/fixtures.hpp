#pragma once

// Small synthetic datasets and batches shared by the unit tests and the acceptance runner.

#include "mmoba/algos.hpp"

namespace fixtures {

using namespace mmoba;

inline AlgoSpec mode_spec(Mode mode) {
  AlgoSpec s;
  s.mode = mode;
  s.obs_dim = obs_dim(mode);
  s.action = ActionSpec::for_mode(mode);
  s.sub_action_table = sub_action_table(mode);
  s.n_agents = is_trio_layout(mode) ? 3 : 1;
  return s;
}

// One state, one head with two actions; every stored transition takes action 0 with reward 0 and ends.
inline AlgoSpec bandit_spec() {
  AlgoSpec s;
  s.mode = Mode::Solo;
  s.obs_dim = 4;
  s.action.head_names = {"button"};
  s.action.head_sizes = {2};
  s.sub_action_table = {{1}, {1}};
  s.n_agents = 1;
  return s;
}

inline const std::vector<float>& bandit_obs() {
  static const std::vector<float> o{1.0f, 0.5f, -0.5f, 0.25f};
  return o;
}

inline TransitionStore bandit_store(int n = 64) {
  std::vector<EpisodeRecord> eps;
  for (int i = 0; i < n; ++i) {
    EpisodeRecord ep;
    StepFrame f;
    HeroFrame h;
    h.obs = bandit_obs();
    h.legal = {{1, 1}};
    h.action.head_indices = {0};
    h.active = {1};
    h.zero_sum = 0.0;
    f.heroes.push_back(h);
    f.done = true;
    ep.frames.push_back(f);
    eps.push_back(ep);
  }
  return TransitionStore::from_episodes(bandit_spec(), eps);
}

// Random legal transitions: every head keeps at least one legal entry and the stored action is legal.
inline std::vector<EpisodeRecord> random_episodes(const AlgoSpec& s, int episodes, int length, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<EpisodeRecord> eps;
  for (int e = 0; e < episodes; ++e) {
    EpisodeRecord ep;
    for (int t = 0; t < length; ++t) {
      StepFrame f;
      for (int a = 0; a < s.n_agents; ++a) {
        HeroFrame h;
        for (int i = 0; i < s.obs_dim; ++i) h.obs.push_back(static_cast<float>(rng.uniform(-1, 1)));
        for (int k = 0; k < s.heads(); ++k) {
          const int n = s.action.head_sizes[static_cast<std::size_t>(k)];
          std::vector<std::uint8_t> m(static_cast<std::size_t>(n));
          for (auto& x : m) x = rng.bernoulli(0.6) ? 1 : 0;
          m[static_cast<std::size_t>(rng.below(n))] = 1;
          std::vector<int> legal;
          for (int j = 0; j < n; ++j)
            if (m[static_cast<std::size_t>(j)]) legal.push_back(j);
          h.action.head_indices.push_back(legal[static_cast<std::size_t>(rng.below(static_cast<int>(legal.size())))]);
          h.legal.push_back(std::move(m));
        }
        h.active = s.sub_action_table[static_cast<std::size_t>(h.action.head_indices[0])];
        h.zero_sum = rng.uniform(-1, 1);
        f.heroes.push_back(std::move(h));
      }
      f.done = t + 1 == length;
      ep.frames.push_back(std::move(f));
    }
    eps.push_back(std::move(ep));
  }
  return eps;
}

inline Batch random_batch(const AlgoSpec& s, int timesteps, std::uint64_t seed) {
  auto store = TransitionStore::from_episodes(s, random_episodes(s, 4, 16, seed));
  CounterRng rng(mix_seed(seed, 1));
  return store.sample(timesteps, rng);
}

// Same transitions with the agents of every timestep reordered by `perm`.
inline Batch permute_agents(const Batch& b, const AlgoSpec& s, const std::vector<int>& perm) {
  Batch o = b;
  const int n = b.agents, heads = s.heads(), total = s.total();
  for (int t = 0; t < b.timesteps; ++t)
    for (int a = 0; a < n; ++a) {
      const int dst = t * n + a, src = t * n + perm[static_cast<std::size_t>(a)];
      o.obs.row(dst) = b.obs.row(src);
      o.next_obs.row(dst) = b.next_obs.row(src);
      for (int k = 0; k < total; ++k) {
        o.legal[static_cast<std::size_t>(dst * total + k)] = b.legal[static_cast<std::size_t>(src * total + k)];
        o.next_legal[static_cast<std::size_t>(dst * total + k)] = b.next_legal[static_cast<std::size_t>(src * total + k)];
      }
      for (int k = 0; k < heads; ++k) {
        const auto d = static_cast<std::size_t>(dst * heads + k), sidx = static_cast<std::size_t>(src * heads + k);
        o.act[d] = b.act[sidx];
        o.next_act[d] = b.next_act[sidx];
        o.active[d] = b.active[sidx];
        o.next_active[d] = b.next_active[sidx];
      }
      o.reward[static_cast<std::size_t>(dst)] = b.reward[static_cast<std::size_t>(src)];
      o.done[static_cast<std::size_t>(dst)] = b.done[static_cast<std::size_t>(src)];
    }
  return o;
}

inline AlgoConfig quick_config(AlgoId id, Mode mode, std::uint64_t seed) {
  AlgoConfig c = AlgoConfig::defaults(id, mode);
  c.seed = seed;
  c.hidden = 32;
  c.batch_size = 32;
  return c;
}

// Q(in-data) - Q(out-of-data) after training on the bandit set.
inline double bandit_gap(AlgoId id, double alpha, std::uint64_t seed, int steps = 2000) {
  AlgoConfig c = AlgoConfig::defaults(id, Mode::Solo);
  c.seed = seed;
  c.cql_alpha = alpha;
  c.max_steps = steps;
  c.batch_size = 32;
  auto algo = make_algorithm(bandit_spec(), c);
  train(*algo, bandit_store());
  Mat o(1, 4);
  for (int i = 0; i < 4; ++i) o(0, i) = bandit_obs()[static_cast<std::size_t>(i)];
  const Mat q = algo->action_scores(o);
  return static_cast<double>(q(0, 0)) - q(0, 1);
}

}  // namespace fixtures
