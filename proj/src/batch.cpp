#include <cstring>

#include "mmoba/algos.hpp"
#include "mmoba/error.hpp"

namespace mmoba {

AlgoSpec AlgoSpec::from_header(const DatasetHeader& h) {
  AlgoSpec s;
  s.mode = h.mode;
  s.obs_dim = h.obs_dim;
  s.action = h.action_spec;
  s.sub_action_table = h.sub_action_table;
  s.n_agents = h.n_heroes_controlled;
  return s;
}

nlohmann::json AlgoSpec::to_json() const {
  return {{"mode", mode_name(mode)},
          {"obs_dim", obs_dim},
          {"head_names", action.head_names},
          {"head_sizes", action.head_sizes},
          {"sub_action_table", sub_action_table},
          {"n_agents", n_agents}};
}

AlgoSpec AlgoSpec::from_json(const nlohmann::json& j) {
  AlgoSpec s;
  try {
    s.mode = parse_mode(j.at("mode").get<std::string>());
    s.obs_dim = j.at("obs_dim").get<int>();
    s.action.head_names = j.at("head_names").get<std::vector<std::string>>();
    s.action.head_sizes = j.at("head_sizes").get<std::vector<int>>();
    s.sub_action_table = j.at("sub_action_table").get<std::vector<std::vector<std::uint8_t>>>();
    s.n_agents = j.at("n_agents").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Checkpoint, std::string("bad algorithm spec: ") + e.what());
  }
  return s;
}

TransitionStore TransitionStore::from_episodes(const AlgoSpec& spec, const std::vector<EpisodeRecord>& episodes) {
  TransitionStore s;
  s.spec_ = spec;
  const auto heads = static_cast<std::size_t>(spec.heads());
  const auto total = static_cast<std::size_t>(spec.total());
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.frames.size(); ++t) {
      const auto& f = ep.frames[t];
      if (static_cast<int>(f.heroes.size()) != spec.n_agents) throw Error(ErrorKind::Schema, "frame agent count differs");
      for (const auto& h : f.heroes) {
        if (static_cast<int>(h.obs.size()) != spec.obs_dim) throw Error(ErrorKind::Schema, "observation width differs");
        s.obs_.insert(s.obs_.end(), h.obs.begin(), h.obs.end());
        for (std::size_t k = 0; k < heads; ++k) s.legal_.insert(s.legal_.end(), h.legal[k].begin(), h.legal[k].end());
        for (std::size_t k = 0; k < heads; ++k) {
          s.act_.push_back(h.action.head_indices[k]);
          s.active_.push_back(h.active[k]);
        }
        s.reward_.push_back(static_cast<float>(h.zero_sum));
      }
      const bool terminal = f.done || t + 1 == ep.frames.size();
      s.done_.push_back(terminal ? 1 : 0);
      s.next_.push_back(terminal ? -1 : static_cast<std::int64_t>(s.done_.size()));
    }
  }
  if (s.legal_.size() != s.done_.size() * total * static_cast<std::size_t>(spec.n_agents)) {
    throw Error(ErrorKind::Schema, "legal mask width differs from the action spec");
  }
  if (s.done_.empty()) throw Error(ErrorKind::Schema, "dataset has no transitions");
  return s;
}

TransitionStore TransitionStore::load(const std::string& path) {
  DatasetReader r(path);
  std::vector<EpisodeRecord> eps;
  EpisodeRecord ep;
  while (r.next(ep)) eps.push_back(std::move(ep));
  return from_episodes(AlgoSpec::from_header(r.header()), eps);
}

Batch TransitionStore::gather(std::span<const std::size_t> index) const {
  const int n = spec_.n_agents, d = spec_.obs_dim, heads = spec_.heads(), total = spec_.total();
  Batch b;
  b.timesteps = static_cast<int>(index.size());
  b.agents = n;
  const int rows = b.rows();
  b.obs.resize(rows, d);
  b.next_obs.resize(rows, d);
  b.legal.resize(static_cast<std::size_t>(rows * total));
  b.next_legal.resize(b.legal.size());
  b.act.resize(static_cast<std::size_t>(rows * heads));
  b.next_act.resize(b.act.size());
  b.active.resize(b.act.size());
  b.next_active.resize(b.act.size());
  b.reward.resize(static_cast<std::size_t>(rows));
  b.done.resize(static_cast<std::size_t>(rows));
  for (int i = 0; i < b.timesteps; ++i) {
    const std::size_t t = index[static_cast<std::size_t>(i)];
    // terminal transitions reuse their own state as the (ignored) successor
    const std::size_t nt = next_[t] >= 0 ? static_cast<std::size_t>(next_[t]) : t;
    for (int a = 0; a < n; ++a) {
      const std::size_t src = t * static_cast<std::size_t>(n) + static_cast<std::size_t>(a);
      const std::size_t nsrc = nt * static_cast<std::size_t>(n) + static_cast<std::size_t>(a);
      const std::size_t r = static_cast<std::size_t>(i * n + a);
      std::memcpy(b.obs.row(static_cast<Eigen::Index>(r)).data(), &obs_[src * d], sizeof(float) * static_cast<std::size_t>(d));
      std::memcpy(b.next_obs.row(static_cast<Eigen::Index>(r)).data(), &obs_[nsrc * d], sizeof(float) * static_cast<std::size_t>(d));
      std::memcpy(&b.legal[r * total], &legal_[src * total], static_cast<std::size_t>(total));
      std::memcpy(&b.next_legal[r * total], &legal_[nsrc * total], static_cast<std::size_t>(total));
      for (int h = 0; h < heads; ++h) {
        b.act[r * heads + h] = act_[src * heads + h];
        b.active[r * heads + h] = active_[src * heads + h];
        b.next_act[r * heads + h] = act_[nsrc * heads + h];
        b.next_active[r * heads + h] = active_[nsrc * heads + h];
      }
      b.reward[r] = reward_[src];
      b.done[r] = done_[t] ? 1.0f : 0.0f;
    }
  }
  return b;
}

Batch TransitionStore::sample(int timesteps, CounterRng& rng) const {
  std::vector<std::size_t> idx(static_cast<std::size_t>(timesteps));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(static_cast<int>(size())));
  return gather(idx);
}

}  // namespace mmoba
