#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "algo_kernels.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "mmoba/algos.hpp"
#include "mmoba/error.hpp"
#include "oracles.hpp"

using namespace mmoba;
using namespace fixtures;

namespace {

// Runs one train step of a fresh algorithm on `b`.
LossMap first_step(AlgoId id, const AlgoSpec& s, const Batch& b, std::uint64_t seed,
                   void (*tweak)(AlgoConfig&) = nullptr) {
  AlgoConfig c = quick_config(id, s.mode, seed);
  if (tweak) tweak(c);
  auto a = make_algorithm(s, c);
  return a->train_step(b);
}

}  // namespace

TEST_CASE("conservatism on the bandit set") {
  int cql = 0, qmix = 0, plain = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cql += bandit_gap(AlgoId::CQL, 10.0, seed) > 0;
    qmix += bandit_gap(AlgoId::QmixCql, 10.0, seed) > 0;
    plain += bandit_gap(AlgoId::CQL, 0.0, seed) > 0;
  }
  MESSAGE("cql " << cql << "/5, qmix_cql " << qmix << "/5, alpha=0 " << plain << "/5");
  CHECK(cql >= 4);
  CHECK(qmix >= 4);
}

TEST_CASE("loss kernel and mixer gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CHECK(oracles::kernel_grad_worst(seed) < 1e-3);
    CHECK(oracles::mixer_grad_worst(seed) < 1e-3);
  }
}

TEST_CASE("mixers are monotone in every local value") {
  Mixer fresh(6, 4, 8, 42);
  CHECK(oracles::mixer_min_slope(fresh, 6, 1000, 1) >= -1e-6);
  for (AlgoId id : {AlgoId::QmixCql, AlgoId::MAICQ}) {
    int state_dim = 0;
    auto algo = oracles::trained_mixer_owner(id, 30, 3, state_dim);
    REQUIRE(algo->mixer());
    CHECK(oracles::mixer_min_slope(*algo->mixer(), state_dim, 1000, 2) >= -1e-6);
  }
}

TEST_CASE("reduction identities") {
  const AlgoSpec s = mode_spec(Mode::Solo);
  const Batch b = random_batch(s, 16, 8);
  const double bc = first_step(AlgoId::BC, s, b, 5).at("bc_loss");

  const auto iql = first_step(AlgoId::IQL, s, b, 5, [](AlgoConfig& c) { c.iql_beta = 0.0; });
  CHECK(std::abs(iql.at("policy_loss") - bc) <= 1e-6);

  const auto td3 = first_step(AlgoId::TD3BC, s, b, 5, [](AlgoConfig& c) { c.td3bc_alpha = 0.0; });
  CHECK(td3.at("lambda") == 0.0);
  CHECK(std::abs(td3.at("bc_loss") - bc) <= 1e-6);

  const auto cql0 = first_step(AlgoId::CQL, s, b, 5, [](AlgoConfig& c) { c.cql_alpha = 0.0; });
  CHECK(cql0.at("cql_term") == 0.0);
  CHECK(cql0.at("total") == cql0.at("td_loss"));

  const auto om = first_step(AlgoId::OMAR, s, b, 5, [](AlgoConfig& c) { c.omar_coe = 0.0; });
  CHECK(std::abs(om.at("policy_loss") - om.at("aw_ce")) <= 1e-6);
  const auto om_flat = first_step(AlgoId::OMAR, s, b, 5, [](AlgoConfig& c) {
    c.omar_coe = 0.0;
    c.omar_beta = 0.0;
  });
  CHECK(std::abs(om_flat.at("policy_loss") - bc) <= 1e-6);

  // alpha = 0 also leaves parameters on the pure factored Q-learning path: same update as a
  // run whose penalty is computed but weighted zero
  const auto q1 = first_step(AlgoId::CQL, s, b, 5, [](AlgoConfig& c) { c.cql_alpha = 0.0; });
  CHECK(q1.at("td_loss") == cql0.at("td_loss"));
}

TEST_CASE("equal Q values give a penalty of ln k") {
  const AlgoSpec s = bandit_spec();
  Batch b = bandit_store(4).sample(4, *std::make_unique<CounterRng>(1));
  Mat z = Mat::Constant(b.rows(), 2, 0.7f), zn = z, d = Mat::Zero(b.rows(), 2);
  auto t = kernels::cql_loss(z, zn, b, s, 0.99, 10.0, d);
  CHECK(t.penalty == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("behaviour cloning") {
  const AlgoSpec s = mode_spec(Mode::Solo);
  SUBCASE("overfits a single transition") {
    auto eps = random_episodes(s, 1, 1, 3);
    auto store = TransitionStore::from_episodes(s, eps);
    AlgoConfig c = AlgoConfig::defaults(AlgoId::BC, Mode::Solo);
    c.max_steps = 500;
    c.batch_size = 8;
    auto a = make_algorithm(s, c);
    const auto last = train(*a, store);
    CHECK(last.at("bc_loss") <= 0.01);
  }
  SUBCASE("near-uniform start gives ln k per active head") {
    const Batch b = random_batch(s, 64, 4);
    double expect = 0;
    for (int r = 0; r < b.rows(); ++r)
      for (int h = 0; h < s.heads(); ++h) {
        if (!b.active[static_cast<std::size_t>(r * s.heads() + h)]) continue;
        int k = 0;
        for (int j = 0; j < s.action.head_sizes[static_cast<std::size_t>(h)]; ++j)
          k += b.legal[static_cast<std::size_t>(r * s.total() + s.action.offset(h) + j)];
        expect += std::log(static_cast<double>(k));
      }
    expect /= b.rows();
    CHECK(first_step(AlgoId::BC, s, b, 1).at("bc_loss") == doctest::Approx(expect).epsilon(1e-2));
  }
  SUBCASE("inactive heads carry no gradient") {
    Batch b = random_batch(s, 32, 6);
    Batch shuffled = b;
    CounterRng rng(2);
    for (int r = 0; r < b.rows(); ++r)
      for (int h = 0; h < s.heads(); ++h) {
        const auto k = static_cast<std::size_t>(r * s.heads() + h);
        if (!b.active[k]) shuffled.act[k] = rng.below(s.action.head_sizes[static_cast<std::size_t>(h)]);
      }
    AlgoConfig c = quick_config(AlgoId::BC, Mode::Solo, 1);
    auto a1 = make_algorithm(s, c), a2 = make_algorithm(s, c);
    a1->train_step(b);
    a2->train_step(shuffled);
    auto p1 = a1->all_params(), p2 = a2->all_params();
    bool same = true;
    for (std::size_t k = 0; k < p1.size(); ++k)
      same = same && std::equal(p1[k].value, p1[k].value + p1[k].size, p2[k].value);
    CHECK(same);
  }
}

TEST_CASE("IQL value tracks the mean at tau 0.5") {
  // one state, three actions with rewards 0, 1, 2 seen equally often, terminal
  AlgoSpec s = bandit_spec();
  s.action.head_sizes = {3};
  s.sub_action_table = {{1}, {1}, {1}};
  std::vector<EpisodeRecord> eps;
  for (int i = 0; i < 90; ++i) {
    EpisodeRecord ep;
    StepFrame f;
    HeroFrame h;
    h.obs = bandit_obs();
    h.legal = {{1, 1, 1}};
    h.action.head_indices = {i % 3};
    h.active = {1};
    h.zero_sum = i % 3;
    f.heroes.push_back(h);
    f.done = true;
    ep.frames.push_back(f);
    eps.push_back(ep);
  }
  AlgoConfig c = AlgoConfig::defaults(AlgoId::IQL, Mode::Solo);
  c.iql_tau = 0.5;
  c.max_steps = 6000;
  c.lr = 1e-3f;
  c.tau = 0.02f;
  c.batch_size = 64;
  auto a = make_algorithm(s, c);
  const auto last = train(*a, TransitionStore::from_episodes(s, eps));
  // v_loss at tau 0.5 is half the mean squared deviation from V; at the optimum V = mean(Q) = 1
  // and mean (Q - 1)^2 = 2/3.
  CHECK(last.at("v_loss") == doctest::Approx(0.5 * 2.0 / 3.0).epsilon(0.1));
}

TEST_CASE("TD3+BC critic matches a three-step chain") {
  AlgoSpec s = bandit_spec();
  s.obs_dim = 3;
  s.action.head_sizes = {1};
  s.sub_action_table = {{1}};
  std::vector<EpisodeRecord> eps(30);
  for (auto& ep : eps) {
    for (int t = 0; t < 3; ++t) {
      StepFrame f;
      HeroFrame h;
      h.obs = {0, 0, 0};
      h.obs[static_cast<std::size_t>(t)] = 1;
      h.legal = {{1}};
      h.action.head_indices = {0};
      h.active = {1};
      h.zero_sum = 1;
      f.heroes.push_back(h);
      f.done = t == 2;
      ep.frames.push_back(f);
    }
  }
  AlgoConfig c = AlgoConfig::defaults(AlgoId::TD3BC, Mode::Solo);
  c.max_steps = 4000;
  c.lr = 1e-3f;
  c.tau = 0.02f;
  c.batch_size = 32;
  c.hidden = 32;
  c.gamma = 0.99;
  auto a = make_algorithm(s, c);
  const auto last = train(*a, TransitionStore::from_episodes(s, eps));
  // the critic is internal; its squared error against y should be small relative to targets ~1..3
  CHECK(last.at("critic_loss") < 0.05);
  // lambda normalisation: lambda * mean|Q1| = alpha
  MESSAGE("lambda " << last.at("lambda") << " actor_q " << last.at("actor_q"));
  CHECK(std::abs(-last.at("actor_q")) == doctest::Approx(c.td3bc_alpha).epsilon(1e-4));
}

TEST_CASE("acting respects masks and ties") {
  const AlgoSpec s = mode_spec(Mode::Solo);
  AlgoConfig c = quick_config(AlgoId::CQL, Mode::Solo, 2);
  auto a = make_algorithm(s, c);
  CounterRng rng(4);
  int illegal = 0;
  for (int i = 0; i < 100000 / 20; ++i) {
    const Batch b = random_batch(s, 1, static_cast<std::uint64_t>(i));
    ActionMasks m;
    m.sub_action_active = s.sub_action_table;
    for (int h = 0; h < s.heads(); ++h) {
      const int off = s.action.offset(h);
      m.legal.emplace_back(b.legal.begin() + off, b.legal.begin() + off + s.action.head_sizes[static_cast<std::size_t>(h)]);
    }
    for (int rep = 0; rep < 20; ++rep) {
      const auto act = a->act(b.obs, std::span<const ActionMasks>(&m, 1), false, rng);
      illegal += !m.admits(act[0]);
    }
    const auto g1 = a->act(b.obs, std::span<const ActionMasks>(&m, 1), true, rng);
    const auto g2 = a->act(b.obs, std::span<const ActionMasks>(&m, 1), true, rng);
    CHECK(g1 == g2);
  }
  CHECK(illegal == 0);

  // all-equal scores: lowest legal index per head
  std::vector<float> eq(5, 0.0f);
  std::vector<std::uint8_t> m{0, 1, 1, 0, 1};
  CHECK(masked_argmax(eq, m) == 1);
}

TEST_CASE("in-sample critic targets") {
  const AlgoSpec s = mode_spec(Mode::Trio);
  for (AlgoId id : {AlgoId::IndICQ, AlgoId::MAICQ}) {
    AlgoConfig c = quick_config(id, Mode::Trio, 1);
    c.max_steps = 40;
    auto a = make_algorithm(s, c);
    const auto last = train(*a, TransitionStore::from_episodes(s, random_episodes(s, 3, 20, 2)));
    CHECK(last.at("ood_target_evals") == 0.0);
  }
  // beta_critic -> infinity: batch weights uniform, so the critic loss is the plain mean
  const Batch b = random_batch(s, 8, 1);
  const auto wide = first_step(AlgoId::IndICQ, s, b, 3, [](AlgoConfig& c) { c.icq_beta_critic = 1e12; });
  const auto cql0 = first_step(AlgoId::IndICQ, s, b, 3, [](AlgoConfig& c) { c.icq_beta_critic = 1e15; });
  CHECK(wide.at("critic_loss") == doctest::Approx(cql0.at("critic_loss")).epsilon(1e-6));
}

TEST_CASE("communication message") {
  CounterRng rng(3);
  Mat e(6, 5);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  const Mat x = comm_message_features(e, 3);
  // permutation of agents inside a timestep leaves the message unchanged
  Mat p = e;
  p.row(0) = e.row(2);
  p.row(2) = e.row(0);
  const Mat xp = comm_message_features(p, 3);
  CHECK(xp.rightCols(5) == x.rightCols(5));
  for (int a = 0; a < 3; ++a) CHECK(x.row(a).rightCols(5) == x.row(0).rightCols(5));
  // identical agents: message equals each encoding
  Mat same(3, 5);
  for (int a = 0; a < 3; ++a) same.row(a) = e.row(0);
  CHECK(comm_message_features(same, 3).row(1).rightCols(5) == e.row(0));
  // two zeroed agents: message is max(third, 0)
  Mat z = Mat::Zero(3, 5);
  z.row(1) = e.row(3);
  CHECK(comm_message_features(z, 3).row(0).rightCols(5) == Mat(e.row(3).cwiseMax(0.0f)));
}

TEST_CASE("shared parameters make agent order irrelevant") {
  const AlgoSpec s = mode_spec(Mode::Trio);
  const Batch b = random_batch(s, 12, 2);
  const Batch p = permute_agents(b, s, {2, 0, 1});
  for (AlgoId id : {AlgoId::IndBC, AlgoId::IndCQL, AlgoId::CommCQL, AlgoId::IndICQ, AlgoId::MAICQ, AlgoId::IndQmixCql}) {
    const auto l1 = first_step(id, s, b, 7);
    const auto l2 = first_step(id, s, p, 7);
    for (const auto& [k, v] : l1) {
      if (id == AlgoId::MAICQ && k != "ood_target_evals") continue;  // joint state order is part of the mixer input
      CHECK_MESSAGE(std::abs(v - l2.at(k)) <= 1e-6 * std::max(1.0, std::abs(v)), algo_name(id) << " " << k);
    }
  }
}

TEST_CASE("zeroth-order targets") {
  const AlgoSpec s = mode_spec(Mode::Trio);
  CounterRng rng(12);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const Batch b = random_batch(s, 1, static_cast<std::uint64_t>(i % 97));
    std::vector<float> q(static_cast<std::size_t>(s.total()));
    for (auto& v : q) v = static_cast<float>(rng.uniform(-1, 1));
    const auto a = zeroth_order_action(q, std::span<const std::uint8_t>(b.legal.data(), static_cast<std::size_t>(s.total())), s, 10, rng);
    ActionMasks m;
    for (int h = 0; h < s.heads(); ++h) {
      const int off = s.action.offset(h);
      m.legal.emplace_back(b.legal.begin() + off, b.legal.begin() + off + s.action.head_sizes[static_cast<std::size_t>(h)]);
    }
    StructuredAction sa;
    sa.head_indices = a;
    bad += !m.admits(sa);
  }
  CHECK(bad == 0);

  // flat scores: the first candidate wins, so a* is uniform over legal tuples
  AlgoSpec tiny = bandit_spec();
  tiny.action.head_names = {"button", "x"};
  tiny.action.head_sizes = {2, 3};
  tiny.sub_action_table = {{1, 1}, {1, 1}};
  std::vector<std::uint8_t> legal{1, 1, 1, 0, 1};
  std::vector<float> flat(5, 0.0f);
  std::map<std::pair<int, int>, int> counts;
  for (int i = 0; i < 8000; ++i) {
    auto a = zeroth_order_action(flat, legal, tiny, 10, rng);
    counts[{a[0], a[1]}]++;
  }
  CHECK(counts.size() == 4);
  double chi2 = 0;
  for (const auto& [k, v] : counts) chi2 += (v - 2000.0) * (v - 2000.0) / 2000.0;
  CHECK(chi2 < 16.27);  // 3 dof, p = 0.001
}

TEST_CASE("every algorithm trains, stays finite, and round-trips through a checkpoint") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "mmoba_test_algos";
  fs::create_directories(dir);
  for (Mode mode : {Mode::Solo, Mode::Trio}) {
    const AlgoSpec s = mode_spec(mode);
    const auto store = TransitionStore::from_episodes(s, random_episodes(s, 3, 20, 1));
    for (AlgoId id : all_algos()) {
      AlgoConfig c = quick_config(id, mode, 11);
      c.max_steps = 25;
      auto a = make_algorithm(s, c);
      std::ostringstream csv1, csv2;
      const auto last = train(*a, store, {&csv1, 1});
      for (const auto& [k, v] : last) CHECK_MESSAGE(std::isfinite(v), algo_name(id) << " " << k);
      bool finite = true;
      for (const auto& p : a->all_params())
        for (std::size_t i = 0; i < p.size; ++i) finite = finite && std::isfinite(p.value[i]);
      CHECK(finite);
      auto again = make_algorithm(s, c);
      train(*again, store, {&csv2, 1});
      CHECK_MESSAGE(csv1.str() == csv2.str(), algo_name(id));
      CHECK(csv1.str().find(",total,") != std::string::npos);

      const auto path = (dir / (std::string(algo_name(id)) + ".mmck")).string();
      save_algorithm(path, *a);
      auto back = load_algorithm(path);
      const Batch b = random_batch(s, 2, 3);
      CHECK(back->action_scores(b.obs) == a->action_scores(b.obs));
      CHECK(back->config().algo == id);
    }
  }
}

TEST_CASE("config validation") {
  AlgoConfig c;
  c.gamma = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_algo("dqn"), ConfigError);
  auto j = AlgoConfig::defaults(AlgoId::CQL, Mode::Trio).to_json();
  auto back = AlgoConfig::from_json(j, AlgoConfig{});
  CHECK(back.to_json() == j);
  CHECK(back.lr == doctest::Approx(1e-4));
  CHECK(!back.soft_target);
}
