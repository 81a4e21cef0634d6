#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mmoba/cli.hpp"
#include "mmoba/dataset.hpp"

using namespace mmoba;
namespace fs = std::filesystem;

namespace {

const fs::path& dir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / "mmoba_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string at(const std::string& name) { return (dir() / name).string(); }

int run(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "mmoba");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream cap, err;
  auto* old = std::cout.rdbuf(cap.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  std::cerr.rdbuf(old_err);
  if (out) *out = cap.str() + err.str();
  return rc;
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const std::string& small_dataset() {
  static const std::string path = [] {
    write(at("r.json"),
          R"({"name":"norm_medium","mode":"solo","controlled_level":1,"opponent_levels":[1],"episodes":6,"base_seed":3})");
    REQUIRE(run({"sample", "--recipe", at("r.json"), "--out", at("d.mmof"), "--workers", "2"}) == 0);
    return at("d.mmof");
  }();
  return path;
}

}  // namespace

TEST_CASE("help and usage errors") {
  std::string text;
  CHECK(run({"--help"}, &text) == kExitOk);
  for (const char* sub : {"sample", "train", "eval", "ladder", "dataset"}) CHECK(text.find(sub) != std::string::npos);
  CHECK(run({"train", "--help"}, &text) == kExitOk);
  for (const char* flag : {"--algo", "--dataset", "--seed", "--out", "--config", "--steps", "--lr"})
    CHECK(text.find(flag) != std::string::npos);
  CHECK(run({"train", "--bogus"}) == kExitUsage);
  CHECK(run({}) == kExitUsage);
  CHECK(run({"dataset", "mix", "only_one.mmof", "--out", at("x.mmof")}) == kExitUsage);
}

TEST_CASE("sample, train, eval") {
  const std::string data = small_dataset();
  CHECK(fs::exists(data + ".manifest.json"));
  std::string log;
  REQUIRE(run({"train", "--algo", "qmix_cql", "--dataset", data, "--seed", "1", "--out", at("ckpt"), "--steps", "30",
               "--hidden", "16", "--log-every", "10"},
              &log) == kExitOk);
  CHECK(fs::exists(at("ckpt/model.mmck")));
  CHECK(fs::exists(at("ckpt/manifest.json")));
  std::ifstream csv(at("ckpt/losses.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,loss_name,value");

  const auto manifest = nlohmann::json::parse(std::ifstream(at("ckpt/manifest.json")));
  CHECK(manifest["seed"] == 1);
  CHECK(manifest["config"]["hidden"] == 16);
  CHECK(manifest["outputs"]["model.mmck"] == file_hash(at("ckpt/model.mmck")));

  // the config file is overridden by flags
  write(at("cfg.json"), R"({"algo":"bc","max_steps":5,"hidden":8})");
  REQUIRE(run({"train", "--config", at("cfg.json"), "--dataset", data, "--out", at("ckpt2"), "--hidden", "12"}) == 0);
  const auto m2 = nlohmann::json::parse(std::ifstream(at("ckpt2/manifest.json")));
  CHECK(m2["config"]["algo"] == "bc");
  CHECK(m2["config"]["max_steps"] == 5);
  CHECK(m2["config"]["hidden"] == 12);

  REQUIRE(run({"eval", "--ckpt", at("ckpt/model.mmck"), "--episodes", "4", "--out", at("ev.json")}) == 0);
  const auto ev = nlohmann::json::parse(std::ifstream(at("ev.json")));
  CHECK(ev["episodes"] == 4);
  const double total = ev["win_rate"].get<double>() + ev["loss_rate"].get<double>() + ev["draw_rate"].get<double>();
  CHECK(total == 1.0);
  REQUIRE(run({"eval", "--ckpt", at("ckpt/model.mmck"), "--episodes", "4", "--out", at("ev2.json")}) == 0);
  CHECK(nlohmann::json::parse(std::ifstream(at("ev2.json"))) == ev);

  REQUIRE(run({"eval", "--ckpt", "level:2", "--mode", "destroy_turret", "--episodes", "3", "--out", at("st.json")}) == 0);
  CHECK(nlohmann::json::parse(std::ifstream(at("st.json"))).contains("raw_mean"));
}

TEST_CASE("error categories map to exit codes") {
  std::string err;
  CHECK(run({"eval", "--ckpt", at("missing.bin"), "--out", at("never.json")}, &err) == kExitMissingFile);
  CHECK(err.rfind("error: io: ", 0) == 0);
  CHECK(std::count(err.begin(), err.end(), '\n') == 1);
  CHECK(!fs::exists(at("never.json")));
  CHECK(!fs::exists(at("never.json.manifest.json")));

  write(at("garbage.mmof"), "garbage bytes");
  CHECK(run({"dataset", "stats", at("garbage.mmof")}) == kExitCorrupt);

  // format version bumped in place
  const std::string data = small_dataset();
  fs::copy_file(data, at("v2.mmof"), fs::copy_options::overwrite_existing);
  {
    std::fstream f(at("v2.mmof"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v = 9;
    f.write(&v, 1);
  }
  CHECK(run({"dataset", "validate", at("v2.mmof")}) == kExitSchema);

  CHECK(run({"train", "--algo", "dqn", "--dataset", data, "--out", at("nope")}) == kExitConfig);
  write(at("bad_recipe.json"), R"({"name":"x","mode":"solo","controlled_level":7,"opponent_levels":[1],"episodes":2})");
  CHECK(run({"sample", "--recipe", at("bad_recipe.json"), "--out", at("bad.mmof")}) == kExitConfig);
  CHECK(run({"eval", "--ckpt", "level:1", "--mode", "trio", "--config", at("missing_cfg.json")}) == kExitMissingFile);

  CHECK(exit_code_for(ErrorKind::HashMismatch) == kExitCorrupt);
  CHECK(exit_code_for(ErrorKind::Schema) == kExitSchema);
  CHECK(exit_code_for(ErrorKind::Internal) == kExitOther);
}

TEST_CASE("dataset subcommands") {
  const std::string data = small_dataset();
  write(at("r2.json"),
        R"({"name":"norm_expert","mode":"solo","controlled_level":2,"opponent_levels":[1],"episodes":6,"base_seed":50})");
  REQUIRE(run({"sample", "--recipe", at("r2.json"), "--out", at("e.mmof")}) == 0);
  REQUIRE(run({"dataset", "mix", data, at("e.mmof"), "--out", at("m1.mmof"), "--seed", "9"}) == 0);
  REQUIRE(run({"dataset", "mix", data, at("e.mmof"), "--out", at("m2.mmof"), "--seed", "9"}) == 0);
  CHECK(file_hash(at("m1.mmof")) == file_hash(at("m2.mmof")));
  CHECK(fs::exists(at("m1.mmof.manifest.json")));

  std::string out;
  REQUIRE(run({"dataset", "stats", at("m1.mmof"), "--format", "csv"}, &out) == 0);
  CHECK(out.rfind("count,mean,std,min,q1,median,q3,max,win_rate\n", 0) == 0);
  REQUIRE(run({"dataset", "validate", at("m1.mmof"), "--out", at("val.json")}) == 0);
  CHECK(nlohmann::json::parse(std::ifstream(at("val.json")))["ok"] == true);

  // same recipe and seed twice: identical files
  REQUIRE(run({"sample", "--recipe", at("r2.json"), "--out", at("e2.mmof"), "--workers", "3"}) == 0);
  CHECK(file_hash(at("e.mmof")) == file_hash(at("e2.mmof")));
}

TEST_CASE("ladder command") {
  REQUIRE(run({"ladder", "--episodes", "2", "--seed", "4", "--out", at("lad")}) == 0);
  CHECK(fs::exists(at("lad/ladder.csv")));
  CHECK(fs::exists(at("lad/ladder.json")));
  CHECK(fs::exists(at("lad/manifest.json")));
}
