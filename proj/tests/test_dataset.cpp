#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "mmoba/dataset.hpp"
#include "mmoba/sampler.hpp"

using namespace mmoba;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
  fs::path p = fs::temp_directory_path() / "mmoba_test_dataset";
  fs::create_directories(p);
  return p;
}

Recipe small_recipe(const std::string& name, Mode mode, int ctrl, std::vector<int> opp, int n, std::uint64_t seed) {
  Recipe r;
  r.name = name;
  r.mode = mode;
  r.controlled_level = ctrl;
  r.opponent_levels = std::move(opp);
  r.episodes = n;
  r.base_seed = seed;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Header JSON sits after magic(4) + version(4) + length(4).
std::string patch_header(const std::string& file, const std::string& from, const std::string& to) {
  REQUIRE(from.size() == to.size());
  std::string out = file;
  auto pos = out.find(from, 12);
  REQUIRE(pos != std::string::npos);
  out.replace(pos, from.size(), to);
  return out;
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Internal;
}

std::vector<EpisodeRecord> read_all(const std::string& path) {
  DatasetReader r(path);
  std::vector<EpisodeRecord> eps;
  EpisodeRecord ep;
  while (r.next(ep)) eps.push_back(ep);
  return eps;
}

}  // namespace

TEST_CASE("round trip keeps every field") {
  const auto path = (tmpdir() / "rt.mmof").string();
  for (Mode mode : {Mode::Solo, Mode::Trio, Mode::SubDestroyTurret, Mode::SubGainGold}) {
    Recipe r = small_recipe("rt", mode, 2, is_subtask(mode) ? std::vector<int>{} : std::vector<int>{1}, 10, 7);
    std::vector<EpisodeRecord> direct;
    for (int i = 0; i < 10; ++i) direct.push_back(sample_episode(r, i));
    auto h = run_recipe(r, path, 2);
    CHECK(h.episode_count == 10);
    auto back = read_all(path);
    REQUIRE(back.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(back[i] == direct[i]);
    DatasetReader rd(path);
    CHECK(rd.header().to_json() == h.to_json());
    CHECK(rd.header().obs_dim == obs_dim(mode));
    auto idx = rd.build_index();
    REQUIRE(idx.size() == 10);
    CHECK(rd.read_at(idx[7]) == direct[7]);
    auto rep = validate_dataset(path, 2);
    CHECK(rep.ok());
    CHECK(rep.episodes == 10);
  }
}

TEST_CASE("win rate in the header counts draws as half") {
  const auto path = (tmpdir() / "wr.mmof").string();
  Recipe r = small_recipe("wr", Mode::Solo, 3, {1}, 20, 11);
  auto h = run_recipe(r, path, 1);
  double s = 0;
  for (const auto& ep : read_all(path)) s += !ep.winner ? 0.5 : (*ep.winner == Team::A ? 1.0 : 0.0);
  REQUIRE(h.win_rate);
  CHECK(*h.win_rate == doctest::Approx(s / 20).epsilon(1e-12));
}

TEST_CASE("corruption is reported with its kind") {
  const auto dir = tmpdir();
  const auto good = (dir / "good.mmof").string();
  Recipe r = small_recipe("c", Mode::Solo, 1, {1}, 4, 3);
  run_recipe(r, good, 1);
  const std::string bytes = slurp(good);

  SUBCASE("missing file") { CHECK(kind_of([&] { DatasetReader x((dir / "nope.mmof").string()); }) == ErrorKind::Io); }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    spit(dir / "bad.mmof", b);
    CHECK(kind_of([&] { DatasetReader x((dir / "bad.mmof").string()); }) == ErrorKind::BadMagic);
  }
  SUBCASE("version mismatch") {
    std::string b = bytes;
    b[4] = 9;
    spit(dir / "ver.mmof", b);
    CHECK(kind_of([&] { DatasetReader x((dir / "ver.mmof").string()); }) == ErrorKind::VersionMismatch);
  }
  SUBCASE("truncation names the episode") {
    // find the start of episode 2 from the index, cut a few bytes into it
    DatasetReader rd(good);
    auto idx = rd.build_index();
    spit(dir / "trunc.mmof", bytes.substr(0, idx[2] + 40));
    std::string msg;
    try {
      read_all((dir / "trunc.mmof").string());
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Truncated);
      msg = e.what();
    }
    CHECK(msg.find("truncated in episode 2") != std::string::npos);
  }
  SUBCASE("count mismatch") {
    spit(dir / "count.mmof", patch_header(bytes, "\"episode_count\":4", "\"episode_count\":5"));
    CHECK(kind_of([&] { read_all((dir / "count.mmof").string()); }) == ErrorKind::CountMismatch);
    spit(dir / "count.mmof", patch_header(bytes, "\"episode_count\":4", "\"episode_count\":3"));
    CHECK(kind_of([&] { read_all((dir / "count.mmof").string()); }) == ErrorKind::CountMismatch);
  }
  SUBCASE("config hash mismatch") {
    spit(dir / "cfg.mmof", patch_header(bytes, "\"episodes\":4", "\"episodes\":8"));
    CHECK(kind_of([&] { DatasetReader x((dir / "cfg.mmof").string()); }) == ErrorKind::HashMismatch);
  }
  SUBCASE("body tamper") {
    std::string b = bytes;
    b[b.size() - 30] ^= 0x01;
    spit(dir / "body.mmof", b);
    auto k = kind_of([&] { read_all((dir / "body.mmof").string()); });
    CHECK((k == ErrorKind::HashMismatch || k == ErrorKind::Schema));
  }
}

TEST_CASE("mix takes equal shares and is deterministic") {
  const auto dir = tmpdir();
  std::vector<std::string> parts;
  for (int k = 0; k < 3; ++k) {
    parts.push_back((dir / ("part" + std::to_string(k) + ".mmof")).string());
    run_recipe(small_recipe("p" + std::to_string(k), Mode::Solo, k, {1}, 100 + 10 * k, 100 * k), parts.back(), 1);
  }
  const auto out1 = (dir / "mix1.mmof").string(), out2 = (dir / "mix2.mmof").string();
  auto h = mix_datasets(parts, out1, 5);
  mix_datasets(parts, out2, 5);
  CHECK(h.episode_count == 300);
  CHECK(h.recipe == "mixed");
  CHECK(file_hash(out1) == file_hash(out2));
  int counts[3] = {0, 0, 0};
  for (const auto& ep : read_all(out1)) counts[ep.controlled_levels.at(0)]++;
  CHECK(counts[0] == 100);
  CHECK(counts[1] == 100);
  CHECK(counts[2] == 100);

  // mean of the mix equals the mean of equal-sized source means
  std::vector<std::string> eq;
  for (int k = 0; k < 2; ++k) {
    eq.push_back((dir / ("eq" + std::to_string(k) + ".mmof")).string());
    run_recipe(small_recipe("e" + std::to_string(k), Mode::Solo, 1 + 2 * k, {1}, 30, 900 + k), eq.back(), 1);
  }
  mix_datasets(eq, (dir / "eqmix.mmof").string(), 1);
  const double m = dataset_stats((dir / "eqmix.mmof").string()).mean;
  const double m0 = dataset_stats(eq[0]).mean, m1 = dataset_stats(eq[1]).mean;
  CHECK(std::abs(m - 0.5 * (m0 + m1)) < 1e-9);

  const auto trio = (dir / "trio.mmof").string();
  run_recipe(small_recipe("t", Mode::Trio, 1, {1}, 3, 1), trio, 1);
  CHECK(kind_of([&] { mix_datasets({parts[0], trio}, (dir / "bad_mix.mmof").string(), 1); }) == ErrorKind::Schema);
}

TEST_CASE("stats oracle") {
  std::vector<double> v{1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile_sorted(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile_sorted(v, 1.0) == doctest::Approx(4));

  const auto path = (tmpdir() / "stats.mmof").string();
  run_recipe(small_recipe("s", Mode::Trio, 2, {1}, 12, 77), path, 1);
  auto st = dataset_stats(path);
  std::vector<double> ret;
  for (const auto& ep : read_all(path)) {
    double s = 0;
    for (const auto& f : ep.frames)
      for (const auto& h : f.heroes) s += h.zero_sum;
    ret.push_back(s);
  }
  REQUIRE(st.returns.size() == ret.size());
  double mean = std::accumulate(ret.begin(), ret.end(), 0.0) / ret.size();
  double var = 0;
  for (double x : ret) var += (x - mean) * (x - mean);
  CHECK(st.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(st.std == doctest::Approx(std::sqrt(var / ret.size())).epsilon(1e-12));
  CHECK(st.count == 12);
}

TEST_CASE("zero-sum returns of self-play average out") {
  // both sides identical: per-tick zero-sum rewards cancel in expectation
  const auto path = (tmpdir() / "self.mmof").string();
  run_recipe(small_recipe("self", Mode::Solo, 2, {2}, 200, 4242), path, 1);
  auto st = dataset_stats(path);
  CHECK(st.win_rate >= 0.40);
  CHECK(st.win_rate <= 0.60);
}

TEST_CASE("sampler determinism and seed isolation") {
  const auto dir = tmpdir();
  Recipe r = small_recipe("d", Mode::Trio, 2, {1}, 8, 99);
  run_recipe(r, (dir / "d1.mmof").string(), 1);
  run_recipe(r, (dir / "d2.mmof").string(), 3);
  CHECK(file_hash((dir / "d1.mmof").string()) == file_hash((dir / "d2.mmof").string()));
  // episode i depends only on base_seed + i
  Recipe shifted = r;
  shifted.base_seed = 102;
  CHECK(sample_episode(shifted, 0) == sample_episode(r, 3));
  CHECK(!(sample_episode(r, 0) == sample_episode(r, 1)));
}

TEST_CASE("stronger controlled level wins more") {
  const auto dir = tmpdir();
  auto h31 = run_recipe(small_recipe("a", Mode::Solo, 3, {1}, 60, 1), (dir / "l31.mmof").string(), 1);
  auto h13 = run_recipe(small_recipe("b", Mode::Solo, 1, {3}, 60, 1), (dir / "l13.mmof").string(), 1);
  CHECK(*h31.win_rate > *h13.win_rate);
}

TEST_CASE("recipe taxonomy") {
  auto m = standard_suite_manifest(1);
  auto has = [&](const std::string& p) {
    return std::any_of(m.begin(), m.end(), [&](const SuiteEntry& e) { return e.path == p; });
  };
  for (const char* mode : {"solo", "trio"})
    for (const char* n : {"norm_poor", "norm_medium", "norm_expert", "norm_mixed", "hard_poor", "hard_medium",
                          "hard_expert", "hard_mixed", "norm_multi_level", "hard_multi_level", "norm_general",
                          "hard_general"})
      CHECK(has(std::string(mode) + "/" + n + ".mmof"));
  CHECK(has("trio/norm_mixed_partner.mmof"));
  CHECK(kind_of([] { Recipe::from_json({{"name", "x"}, {"mode", "solo"}, {"opponent_levels", {7}}}); }) ==
        ErrorKind::Config);
}
