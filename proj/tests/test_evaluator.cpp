#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "mmoba/evaluator.hpp"
#include "mmoba/sampler.hpp"

using namespace mmoba;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  auto d = fs::temp_directory_path() / "mmoba_test_eval";
  fs::create_directories(d);
  return d;
}

std::string untrained(AlgoId id, Mode mode, std::uint64_t seed, const std::string& name) {
  auto a = make_algorithm(fixtures::mode_spec(mode), fixtures::quick_config(id, mode, seed));
  const auto path = (scratch() / name).string();
  save_algorithm(path, *a);
  return path;
}

}  // namespace

TEST_CASE("win rate against the ladder") {
  const EnvConfig cfg = EnvConfig::defaults(Mode::Solo);
  EvalOptions opt;
  opt.seed = 77;

  SUBCASE("random weights lose to the top level") {
    const auto path = untrained(AlgoId::BC, Mode::Solo, 3, "random_bc.mmck");
    const auto before = file_hash(path);
    const auto r = evaluate_winrate(checkpoint_factory(path, cfg), cfg, 4, opt);
    MESSAGE("random vs L4 " << r.win_rate);
    CHECK(r.win_rate <= 0.05);
    CHECK(r.win_rate + r.loss_rate + r.draw_rate == 1.0);
    CHECK(file_hash(path) == before);
  }
  SUBCASE("scripted level through the adapter against itself") {
    for (int k : {1, 2, 3}) {
      const auto r = evaluate_winrate(policy_factory("level:" + std::to_string(k), cfg), cfg, k, opt);
      MESSAGE("L" << k << " self " << r.score);
      CHECK(r.score >= 0.4);
      CHECK(r.score <= 0.6);
    }
  }
  SUBCASE("repeatable, independent of workers") {
    const auto f = level_factory(2, cfg);
    opt.episodes = 40;
    const auto a = evaluate_winrate(f, cfg, 1, opt);
    opt.workers = 3;
    const auto b = evaluate_winrate(f, cfg, 1, opt);
    CHECK(a.to_json() == b.to_json());
  }
  SUBCASE("mode mismatch and bad sources") {
    const auto path = untrained(AlgoId::BC, Mode::Solo, 3, "solo_bc.mmck");
    CHECK_THROWS_AS(checkpoint_factory(path, EnvConfig::defaults(Mode::Trio)), Error);
    try {
      checkpoint_factory(path, EnvConfig::defaults(Mode::Trio));
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Schema);
    }
    CHECK_THROWS_AS(policy_factory("level:9", cfg), ConfigError);
    CHECK_THROWS_AS(policy_factory((scratch() / "nope.mmck").string(), cfg), Error);
  }
}

TEST_CASE("trio checkpoints act as a team") {
  const EnvConfig cfg = EnvConfig::defaults(Mode::Trio);
  for (AlgoId id : {AlgoId::CommCQL, AlgoId::MAICQ, AlgoId::IndBC}) {
    const auto path = untrained(id, Mode::Trio, 5, std::string(algo_name(id)) + "_trio.mmck");
    EvalOptions opt;
    opt.episodes = 4;
    const auto r = evaluate_winrate(checkpoint_factory(path, cfg, true), cfg, 1, opt);
    CHECK(r.episodes == 4);
  }
}

TEST_CASE("sub-task scores") {
  EvalOptions opt;
  opt.episodes = 40;
  opt.seed = 5;
  for (Mode m : {Mode::SubGainGold, Mode::SubDestroyTurret}) {
    EnvConfig cfg = EnvConfig::defaults(m);
    const auto expert = subtask_outcomes(level_factory(4, cfg), cfg, opt);
    const auto random = subtask_outcomes(level_factory(0, cfg), cfg, opt);
    double em = 0, rm = 0;
    for (double x : expert) em += x / expert.size();
    for (double x : random) rm += x / random.size();
    if (m == Mode::SubGainGold) {
      cfg.calibration.expert_gain_gold = em;
      cfg.calibration.random_gain_gold = rm;
    } else {
      cfg.calibration.expert_frame_length = em;
      cfg.calibration.random_frame_length = rm;
    }
    MESSAGE(std::string(mode_name(m)) << " L0 " << rm << " L4 " << em);
    CHECK(evaluate_subtask(level_factory(4, cfg), cfg, opt).mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(evaluate_subtask(level_factory(0, cfg), cfg, opt).mean == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  }
  // affine in the outcome: more gold never scores lower
  SubtaskCalibration cal;
  double prev = -1e9;
  for (double g = 0; g < 1000; g += 37) {
    const double s = subtask_score(Mode::SubGainGold, {0.0, g}, cal);
    CHECK(s > prev);
    prev = s;
  }
  CHECK_THROWS_AS(evaluate_subtask(level_factory(1, EnvConfig::defaults(Mode::Solo)), EnvConfig::defaults(Mode::Solo), opt),
                  ConfigError);
}

TEST_CASE("benchmark report") {
  std::vector<BenchmarkEntry> entries;
  for (AlgoId id : {AlgoId::BC, AlgoId::CQL})
    for (const char* ds : {"norm_poor", "norm_expert"}) {
      BenchmarkEntry e{"level", ds, algo_name(id), {}, 1};
      for (std::uint64_t s = 1; s <= 3; ++s)
        e.checkpoints.push_back(untrained(id, Mode::Solo, s, std::string(algo_name(id)) + ds + std::to_string(s) + ".mmck"));
      entries.push_back(e);
    }
  EvalOptions opt;
  opt.episodes = 6;
  const auto rep = benchmark_report(entries, opt);
  REQUIRE(rep.rows.size() == 4);
  for (const auto& r : rep.rows) CHECK(r.values.size() == 3);
  CHECK(rep.to_csv().rfind("factor,dataset,algorithm,seed_count,mean,std\n", 0) == 0);
  CHECK(benchmark_report(entries, opt).to_csv() == rep.to_csv());
  CHECK(rep.to_json()["rows"].size() == 4);

  auto same = entries[0];
  same.checkpoints.assign(3, same.checkpoints[0]);
  CHECK(benchmark_report({same}, opt).rows[0].std == 0.0);

  const auto row = aggregate_row("f", "d", "a", {1.0, 2.0, 3.0});
  CHECK(row.mean == 2.0);
  CHECK(row.std == doctest::Approx(std::sqrt(2.0 / 3.0)));

  nlohmann::json j = {{"entries", {{{"dataset", "d"}, {"algorithm", "bc"}, {"checkpoints", {"x"}}}}}};
  CHECK(benchmark_manifest_from_json(j).at(0).factor == "default");
  CHECK_THROWS_AS(benchmark_manifest_from_json(nlohmann::json::object()), ConfigError);
}

TEST_CASE("recipes can sample with a checkpoint") {
  const auto path = untrained(AlgoId::BC, Mode::Solo, 9, "sampler_bc.mmck");
  Recipe r;
  r.name = "ckpt";
  r.controlled_checkpoint = path;
  r.opponent_levels = {1};
  r.episodes = 3;
  r.base_seed = 4;
  const auto out = (scratch() / "ckpt.mmof").string();
  const auto h = run_recipe(r, out, 1);
  CHECK(h.episode_count == 3);
  const auto ep = sample_episode(r, 0);
  CHECK(ep.controlled_levels == std::vector<int>{-1});
  CHECK(h.generator_config.contains("controlled_checkpoint_hash"));
}
