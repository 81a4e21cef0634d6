#include "mmoba/evaluator.hpp"

#include <cmath>
#include <sstream>

#include "mmoba/parallel.hpp"
#include "mmoba/sampler.hpp"

namespace mmoba {

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

void check_fits(const AlgoSpec& s, const EnvConfig& cfg) {
  const AlgoSpec want = [&] {
    AlgoSpec w;
    w.obs_dim = obs_dim(cfg.mode);
    w.action = ActionSpec::for_mode(cfg.mode);
    w.n_agents = static_cast<int>(cfg.archetypes_a.size());
    return w;
  }();
  if (s.obs_dim != want.obs_dim || s.action.head_sizes != want.action.head_sizes || s.n_agents != want.n_agents) {
    throw Error(ErrorKind::Schema, std::string("checkpoint trained for ") + mode_name(s.mode) + " does not fit mode " +
                                       mode_name(cfg.mode));
  }
}

void check_episodes(const EvalOptions& opt) {
  if (opt.episodes < 1) throw ConfigError("episodes", "must be >= 1");
}

}  // namespace

PolicyTeam::PolicyTeam(std::shared_ptr<const Algorithm> algo, bool stochastic)
    : algo_(std::move(algo)), stochastic_(stochastic) {}

std::vector<StructuredAction> PolicyTeam::act_team(std::span<const Observation> obs, std::span<const ActionMasks> masks,
                                                   std::span<CounterRng> rngs) {
  const int d = algo_->spec().obs_dim;
  Mat x(static_cast<Eigen::Index>(obs.size()), d);
  for (std::size_t r = 0; r < obs.size(); ++r) {
    for (int i = 0; i < d; ++i) x(static_cast<Eigen::Index>(r), i) = obs[r].vector[static_cast<std::size_t>(i)];
  }
  return algo_->act(x, masks, !stochastic_, rngs[0]);
}

ControllerFactory algorithm_factory(std::shared_ptr<const Algorithm> algo, const EnvConfig& cfg, bool stochastic) {
  check_fits(algo->spec(), cfg);
  return [algo, stochastic] { return std::make_unique<PolicyTeam>(algo, stochastic); };
}

ControllerFactory checkpoint_factory(const std::string& path, const EnvConfig& cfg, bool stochastic) {
  std::shared_ptr<const Algorithm> algo = load_algorithm(path);
  return algorithm_factory(std::move(algo), cfg, stochastic);
}

ControllerFactory level_factory(int level, const EnvConfig& cfg) {
  const PolicyContext ctx = PolicyContext::from(cfg);
  make_level(level, ctx);
  const std::vector<int> levels(cfg.archetypes_a.size(), level);
  return [levels, ctx] { return scripted_team(levels, ctx); };
}

ControllerFactory policy_factory(const std::string& source, const EnvConfig& cfg, bool stochastic) {
  if (source.rfind("level:", 0) == 0) {
    int k = -1;
    try {
      k = std::stoi(source.substr(6));
    } catch (const std::exception&) {
      throw ConfigError("policy", "bad level in '" + source + "'");
    }
    return level_factory(k, cfg);
  }
  return checkpoint_factory(source, cfg, stochastic);
}

std::unique_ptr<TeamController> checkpoint_controller(const std::string& path, const EnvConfig& cfg) {
  // sampling with a learned policy keeps its stochasticity, like the scripted levels
  return checkpoint_factory(path, cfg, true)();
}

nlohmann::json WinRateResult::to_json() const {
  return {{"episodes", episodes},   {"win_rate", win_rate},       {"loss_rate", loss_rate},
          {"draw_rate", draw_rate}, {"score", score},             {"mean_return", mean_return},
          {"std_return", std_return}};
}

WinRateResult evaluate_winrate(const ControllerFactory& policy, const EnvConfig& cfg, int opponent_level,
                               const EvalOptions& opt) {
  check_episodes(opt);
  cfg.validate();
  if (cfg.archetypes_b.empty()) throw ConfigError("mode", std::string("no opponent in mode ") + mode_name(cfg.mode));
  const ControllerFactory opp = [&] {
    EnvConfig b = cfg;
    b.archetypes_a = cfg.archetypes_b;
    return level_factory(opponent_level, b);
  }();
  struct Ep {
    int result = 0;  // 1 win, 0 draw, -1 loss
    double ret = 0;
  };
  const auto eps = parallel_map<Ep>(opt.episodes, opt.workers, [&](int i) {
    auto a = policy();
    auto b = opp();
    const EpisodeOutcome o = run_episode(cfg, opt.seed + static_cast<std::uint64_t>(i), *a, b.get());
    Ep e;
    e.result = !o.winner ? 0 : (*o.winner == Team::A ? 1 : -1);
    e.ret = o.return_a;
    return e;
  });
  WinRateResult r;
  r.episodes = opt.episodes;
  int w = 0, l = 0, d = 0;
  std::vector<double> rets;
  for (const Ep& e : eps) {
    (e.result > 0 ? w : e.result < 0 ? l : d)++;
    rets.push_back(e.ret);
  }
  const double n = opt.episodes;
  r.win_rate = w / n;
  r.loss_rate = l / n;
  // remainder, so the three rates add up to exactly one
  r.draw_rate = 1.0 - r.win_rate - r.loss_rate;
  r.score = (w + 0.5 * d) / n;
  std::tie(r.mean_return, r.std_return) = mean_std(rets);
  return r;
}

std::vector<double> subtask_outcomes(const ControllerFactory& policy, const EnvConfig& cfg, const EvalOptions& opt) {
  check_episodes(opt);
  cfg.validate();
  if (!is_subtask(cfg.mode)) throw ConfigError("mode", std::string(mode_name(cfg.mode)) + " is not a sub-task");
  return parallel_map<double>(opt.episodes, opt.workers, [&](int i) {
    auto a = policy();
    const EpisodeOutcome o = run_episode(cfg, opt.seed + static_cast<std::uint64_t>(i), *a, nullptr);
    return cfg.mode == Mode::SubDestroyTurret ? static_cast<double>(o.length) : static_cast<double>(o.team_a_gold);
  });
}

nlohmann::json SubtaskResult::to_json() const {
  return {{"episodes", episodes}, {"mean", mean}, {"std", std}, {"raw_mean", raw_mean}, {"raw_std", raw_std}};
}

SubtaskResult evaluate_subtask(const ControllerFactory& policy, const EnvConfig& cfg, const EvalOptions& opt) {
  const auto raw = subtask_outcomes(policy, cfg, opt);
  std::vector<double> scores;
  for (double x : raw) {
    SubtaskOutcome o;
    (cfg.mode == Mode::SubDestroyTurret ? o.frame_length : o.gold) = x;
    scores.push_back(subtask_score(cfg.mode, o, cfg.calibration));
  }
  SubtaskResult r;
  r.episodes = opt.episodes;
  std::tie(r.mean, r.std) = mean_std(scores);
  std::tie(r.raw_mean, r.raw_std) = mean_std(raw);
  return r;
}

SubtaskCalibration calibrate_subtasks(int random_level, int expert_level, const EvalOptions& opt) {
  SubtaskCalibration c;
  auto mean_of = [&](Mode m, int level) {
    const EnvConfig cfg = EnvConfig::defaults(m);
    return mean_std(subtask_outcomes(level_factory(level, cfg), cfg, opt)).first;
  };
  c.random_frame_length = mean_of(Mode::SubDestroyTurret, random_level);
  c.expert_frame_length = mean_of(Mode::SubDestroyTurret, expert_level);
  c.random_gain_gold = mean_of(Mode::SubGainGold, random_level);
  c.expert_gain_gold = mean_of(Mode::SubGainGold, expert_level);
  return c;
}

BenchmarkRow aggregate_row(std::string factor, std::string dataset, std::string algorithm, std::vector<double> values) {
  BenchmarkRow r{std::move(factor), std::move(dataset), std::move(algorithm), std::move(values)};
  std::tie(r.mean, r.std) = mean_std(r.values);
  return r;
}

std::vector<BenchmarkEntry> benchmark_manifest_from_json(const nlohmann::json& j) {
  if (!j.contains("entries") || !j["entries"].is_array()) throw ConfigError("entries", "manifest needs an entries array");
  std::vector<BenchmarkEntry> out;
  for (const auto& e : j["entries"]) {
    BenchmarkEntry b;
    try {
      b.factor = e.value("factor", std::string("default"));
      b.dataset = e.at("dataset").get<std::string>();
      b.algorithm = e.at("algorithm").get<std::string>();
      b.checkpoints = e.at("checkpoints").get<std::vector<std::string>>();
      b.opponent_level = e.value("opponent_level", 0);
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("entries", ex.what());
    }
    if (b.checkpoints.empty()) throw ConfigError("checkpoints", "entry " + b.dataset + "/" + b.algorithm + " is empty");
    out.push_back(std::move(b));
  }
  return out;
}

BenchmarkReport benchmark_report(const std::vector<BenchmarkEntry>& entries, const EvalOptions& opt) {
  BenchmarkReport rep;
  for (const auto& e : entries) {
    std::vector<double> vals;
    for (const auto& path : e.checkpoints) {
      std::shared_ptr<const Algorithm> algo = load_algorithm(path);
      const EnvConfig cfg = EnvConfig::defaults(algo->spec().mode);
      const auto f = algorithm_factory(algo, cfg);
      vals.push_back(is_subtask(cfg.mode) ? evaluate_subtask(f, cfg, opt).mean
                                          : evaluate_winrate(f, cfg, e.opponent_level, opt).score);
    }
    rep.rows.push_back(aggregate_row(e.factor, e.dataset, e.algorithm, std::move(vals)));
  }
  return rep;
}

std::string BenchmarkReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "factor,dataset,algorithm,seed_count,mean,std\n";
  for (const auto& r : rows) {
    os << r.factor << ',' << r.dataset << ',' << r.algorithm << ',' << r.values.size() << ',' << r.mean << ','
       << r.std << '\n';
  }
  return os.str();
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"factor", r.factor},
                  {"dataset", r.dataset},
                  {"algorithm", r.algorithm},
                  {"seed_count", r.values.size()},
                  {"mean", r.mean},
                  {"std", r.std},
                  {"values", r.values}});
  }
  return {{"rows", rs}};
}

}  // namespace mmoba
