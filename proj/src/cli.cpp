#include "mmoba/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmoba/algos.hpp"
#include "mmoba/dataset.hpp"
#include "mmoba/evaluator.hpp"
#include "mmoba/parallel.hpp"
#include "mmoba/sampler.hpp"

namespace mmoba {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return kExitMissingFile;
    case ErrorKind::Schema:
    case ErrorKind::VersionMismatch: return kExitSchema;
    case ErrorKind::BadMagic:
    case ErrorKind::Truncated:
    case ErrorKind::CountMismatch:
    case ErrorKind::HashMismatch:
    case ErrorKind::Checkpoint:
    case ErrorKind::IllegalAction: return kExitCorrupt;
    case ErrorKind::Config: return kExitConfig;
    case ErrorKind::Internal: return kExitOther;
  }
  return kExitOther;
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "no such file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config", path + ": " + e.what());
  }
}

// Write to a sibling temp file, then rename, so readers never see half a file.
void write_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed on " + path);
  }
  fs::rename(tmp, path);
}

void write_manifest(const std::string& path, const std::string& command, const json& config, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["formats"] = {{"mmof", kMmofVersion}, {"mmck", 1}};
  m["seed"] = seed;
  m["config"] = config;
  m["config_hash"] = config_hash(config);
  json outs = json::object();
  for (const auto& o : outputs) outs[fs::path(o).filename().string()] = file_hash(o);
  m["outputs"] = outs;
  write_file(path, m.dump(2) + "\n");
}

void log(const std::string& line) { std::cerr << line << '\n'; }

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string recipe, out, config;
  std::uint64_t seed = 0;
  int episodes = 0, workers = 0, main_episodes = 512, subtask_episodes = 64;
  bool suite = false;
  CLI::Option *seed_opt = nullptr, *episodes_opt = nullptr;
};

int cmd_sample(const SampleArgs& a) {
  if (a.suite) {
    const auto headers = standard_suite(a.seed, a.out, a.workers, a.main_episodes, a.subtask_episodes);
    const auto entries = standard_suite_manifest(a.seed, a.main_episodes, a.subtask_episodes);
    std::vector<std::string> outs;
    for (const auto& e : entries) outs.push_back((fs::path(a.out) / e.path).string());
    json cfg = {{"suite", true}, {"main_episodes", a.main_episodes}, {"subtask_episodes", a.subtask_episodes}};
    json files = json::object();
    for (const auto& o : outs) files[fs::relative(o, a.out).string()] = file_hash(o);
    json m = {{"command", "sample"}, {"version", kVersion}, {"seed", a.seed}, {"config", cfg},
              {"config_hash", config_hash(cfg)}, {"outputs", files}};
    write_file((fs::path(a.out) / "manifest.json").string(), m.dump(2) + "\n");
    log("sample: wrote " + std::to_string(headers.size()) + " datasets under " + a.out);
    return kExitOk;
  }
  if (a.recipe.empty()) throw ConfigError("recipe", "--recipe or --suite is required");
  Recipe r = Recipe::from_json(read_json_file(a.recipe));
  if (a.seed_opt->count()) r.base_seed = a.seed;
  if (a.episodes_opt->count()) r.episodes = a.episodes;
  r.validate();
  const DatasetHeader h = run_recipe(r, a.out, a.workers);
  write_manifest(a.out + ".manifest.json", "sample", r.to_json(), r.base_seed, {a.out});
  std::ostringstream os;
  os << "sample: " << r.name << " " << h.episode_count << " episodes";
  if (h.win_rate) os << ", win rate " << *h.win_rate;
  log(os.str());
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string algo, dataset, out, config;
  std::uint64_t seed = 0;
  int steps = 0, batch = 0, hidden = 0, log_every = 100;
  double lr = 0, alpha = 0;
  CLI::Option *algo_opt, *seed_opt, *steps_opt, *batch_opt, *hidden_opt, *lr_opt, *alpha_opt;
};

int cmd_train(const TrainArgs& a) {
  json file = a.config.empty() ? json::object() : read_json_file(a.config);
  std::string algo_name_s = file.value("algo", std::string());
  if (a.algo_opt->count()) algo_name_s = a.algo;
  if (algo_name_s.empty()) throw ConfigError("algo", "--algo is required");
  const AlgoId id = parse_algo(algo_name_s);
  TransitionStore store = TransitionStore::load(a.dataset);
  AlgoConfig cfg = AlgoConfig::from_json(file, AlgoConfig::defaults(id, store.spec().mode));
  cfg.algo = id;
  if (a.seed_opt->count()) cfg.seed = a.seed;
  if (a.steps_opt->count()) cfg.max_steps = a.steps;
  if (a.batch_opt->count()) cfg.batch_size = a.batch;
  if (a.hidden_opt->count()) cfg.hidden = a.hidden;
  if (a.lr_opt->count()) cfg.lr = static_cast<float>(a.lr);
  if (a.alpha_opt->count()) cfg.cql_alpha = a.alpha;
  cfg.validate();

  auto algorithm = make_algorithm(store.spec(), cfg);
  std::ostringstream csv;
  csv << "step,loss_name,value\n";
  log("train: " + std::string(algo_name(id)) + " on " + a.dataset + ", " + std::to_string(cfg.max_steps) + " steps");
  const LossMap last = train(*algorithm, store, {&csv, a.log_every});

  fs::create_directories(a.out);
  const std::string ckpt = (fs::path(a.out) / "model.mmck").string();
  const std::string losses = (fs::path(a.out) / "losses.csv").string();
  save_algorithm(ckpt, *algorithm);
  write_file(losses, csv.str());
  json mc = cfg.to_json();
  mc["dataset"] = fs::path(a.dataset).filename().string();
  mc["dataset_hash"] = file_hash(a.dataset);
  write_manifest((fs::path(a.out) / "manifest.json").string(), "train", mc, cfg.seed, {ckpt, losses});
  std::ostringstream os;
  os << "train: done, total loss " << last.at("total");
  log(os.str());
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt, mode = "solo", out, config, benchmark;
  int opponent = 1, episodes = 150, workers = 0;
  std::uint64_t seed = 0;
  bool stochastic = false;
  CLI::Option *mode_opt, *opponent_opt, *episodes_opt, *seed_opt;
};

int cmd_eval(const EvalArgs& a) {
  json file = a.config.empty() ? json::object() : read_json_file(a.config);
  EvalOptions opt;
  opt.episodes = a.episodes_opt->count() ? a.episodes : file.value("episodes", a.episodes);
  opt.seed = a.seed_opt->count() ? a.seed : file.value("seed", a.seed);
  opt.workers = a.workers;
  if (!a.benchmark.empty()) {
    const auto entries = benchmark_manifest_from_json(read_json_file(a.benchmark));
    for (const auto& e : entries)
      for (const auto& c : e.checkpoints)
        if (!fs::exists(c)) throw Error(ErrorKind::Io, "no such file: " + c);
    const BenchmarkReport rep = benchmark_report(entries, opt);
    if (a.out.empty()) {
      std::cout << rep.to_csv();
      return kExitOk;
    }
    const std::string csv = a.out + ".csv", js = a.out + ".json";
    write_file(csv, rep.to_csv());
    write_file(js, rep.to_json().dump(2) + "\n");
    write_manifest(a.out + ".manifest.json", "eval", {{"benchmark", read_json_file(a.benchmark)}, {"episodes", opt.episodes}},
                   opt.seed, {csv, js});
    return kExitOk;
  }
  if (a.ckpt.empty()) throw ConfigError("ckpt", "--ckpt or --benchmark is required");
  // mode comes from the checkpoint unless the source is a scripted level
  Mode mode = parse_mode(a.mode_opt->count() ? a.mode : file.value("mode", a.mode));
  if (a.ckpt.rfind("level:", 0) != 0) mode = load_algorithm(a.ckpt)->spec().mode;
  EnvConfig cfg = EnvConfig::defaults(mode);
  if (file.contains("calibration")) {
    const auto& c = file["calibration"];
    cfg.calibration.random_frame_length = c.value("random_frame_length", cfg.calibration.random_frame_length);
    cfg.calibration.expert_frame_length = c.value("expert_frame_length", cfg.calibration.expert_frame_length);
    cfg.calibration.random_gain_gold = c.value("random_gain_gold", cfg.calibration.random_gain_gold);
    cfg.calibration.expert_gain_gold = c.value("expert_gain_gold", cfg.calibration.expert_gain_gold);
  }
  const bool stochastic = a.stochastic || file.value("stochastic", false);
  const ControllerFactory f = policy_factory(a.ckpt, cfg, stochastic);
  json result;
  if (is_subtask(mode)) {
    result = evaluate_subtask(f, cfg, opt).to_json();
  } else {
    const int opp = a.opponent_opt->count() ? a.opponent : file.value("opponent", a.opponent);
    result = evaluate_winrate(f, cfg, opp, opt).to_json();
    result["opponent_level"] = opp;
  }
  result["mode"] = mode_name(mode);
  result["policy"] = a.ckpt.rfind("level:", 0) == 0 ? a.ckpt : fs::path(a.ckpt).filename().string();
  result["seed"] = opt.seed;
  emit(a.out, result.dump(2) + "\n");
  if (!a.out.empty()) {
    json mc = {{"episodes", opt.episodes}, {"stochastic", stochastic}, {"mode", mode_name(mode)}};
    if (a.ckpt.rfind("level:", 0) != 0) mc["checkpoint_hash"] = file_hash(a.ckpt);
    write_manifest(a.out + ".manifest.json", "eval", mc, opt.seed, {a.out});
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ladder

struct LadderArgs {
  int episodes = 300, workers = 0;
  std::uint64_t seed = 0;
  std::string mode = "solo", out;
};

int cmd_ladder(const LadderArgs& a) {
  DuelOptions d;
  d.mode = parse_mode(a.mode);
  d.workers = a.workers;
  const LadderReport rep = ladder_report(a.episodes, a.seed, d);
  if (a.out.empty()) {
    std::cout << rep.to_csv();
    return kExitOk;
  }
  const std::string csv = (fs::path(a.out) / "ladder.csv").string(), js = (fs::path(a.out) / "ladder.json").string();
  write_file(csv, rep.to_csv());
  write_file(js, rep.to_json());
  write_manifest((fs::path(a.out) / "manifest.json").string(), "ladder",
                 {{"episodes_per_pair", a.episodes}, {"mode", a.mode}}, a.seed, {csv, js});
  return kExitOk;
}

// ---------------------------------------------------------------- dataset

struct DatasetArgs {
  std::string file, out, format = "json";
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;
  int workers = 0;
};

int cmd_stats(const DatasetArgs& a) {
  const DatasetStats s = dataset_stats(a.file);
  emit(a.out, a.format == "csv" ? s.to_csv() : s.to_json().dump(2) + "\n");
  return kExitOk;
}

int cmd_validate(const DatasetArgs& a) {
  const ValidationReport r = validate_dataset(a.file, a.workers);
  json j = {{"episodes", r.episodes}, {"frames", r.frames}, {"illegal_actions", r.illegal_actions},
            {"problems", r.problems}, {"ok", r.ok()}};
  emit(a.out, j.dump(2) + "\n");
  if (!r.ok()) {
    const std::string first = r.problems.empty() ? "illegal stored actions" : r.problems.front();
    std::cerr << "error: invalid_dataset: " << first << '\n';
    return kExitCorrupt;
  }
  return kExitOk;
}

int cmd_mix(const DatasetArgs& a) {
  const DatasetHeader h = mix_datasets(a.inputs, a.out, a.seed);
  json cfg = {{"inputs", json::array()}};
  for (const auto& i : a.inputs) cfg["inputs"].push_back({{"file", fs::path(i).filename().string()}, {"hash", file_hash(i)}});
  write_manifest(a.out + ".manifest.json", "dataset mix", cfg, a.seed, {a.out});
  log("dataset mix: " + std::to_string(h.episode_count) + " episodes");
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Offline RL benchmark on a small MOBA: sampling, training, evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  const int default_w = default_workers();

  SampleArgs sa;
  sa.workers = default_w;
  auto* sample = app.add_subcommand("sample", "Generate a dataset from a recipe, or the whole standard suite");
  sample->add_option("--recipe", sa.recipe, "Recipe JSON file");
  sample->add_option("--out", sa.out, "Output .mmof file (directory with --suite)")->required();
  sa.seed_opt = sample->add_option("--seed", sa.seed, "Base seed (overrides the recipe)");
  sa.episodes_opt = sample->add_option("--episodes", sa.episodes, "Episode count (overrides the recipe)");
  sample->add_option("--workers", sa.workers, "Worker threads (default MMOF_WORKERS or all cores)");
  sample->add_flag("--suite", sa.suite, "Generate the standard dataset taxonomy");
  sample->add_option("--main-episodes", sa.main_episodes, "Suite: episodes per main dataset");
  sample->add_option("--subtask-episodes", sa.subtask_episodes, "Suite: episodes per sub-task dataset");

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train an offline algorithm on a dataset");
  ta.algo_opt = trainc->add_option("--algo", ta.algo, "bc, cql, qmix_cql, iql, td3bc, ind_bc, ind_cql, comm_cql, ind_icq, maicq, omar, ind_qmix_cql");
  trainc->add_option("--dataset", ta.dataset, "Input .mmof")->required();
  trainc->add_option("--out", ta.out, "Output directory (model.mmck, losses.csv, manifest.json)")->required();
  trainc->add_option("--config", ta.config, "JSON file with algorithm hyperparameters; flags win");
  ta.seed_opt = trainc->add_option("--seed", ta.seed, "Training seed");
  ta.steps_opt = trainc->add_option("--steps", ta.steps, "Gradient steps");
  ta.batch_opt = trainc->add_option("--batch-size", ta.batch, "Timesteps per batch");
  ta.hidden_opt = trainc->add_option("--hidden", ta.hidden, "Hidden width");
  ta.lr_opt = trainc->add_option("--lr", ta.lr, "Learning rate");
  ta.alpha_opt = trainc->add_option("--cql-alpha", ta.alpha, "CQL penalty weight");
  trainc->add_option("--log-every", ta.log_every, "Loss CSV interval in steps");

  EvalArgs ea;
  ea.workers = default_w;
  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint (or level:K) against the ladder or on a sub-task");
  evalc->add_option("--ckpt", ea.ckpt, "Checkpoint file, or level:K for a scripted level");
  evalc->add_option("--benchmark", ea.benchmark, "Benchmark manifest JSON; writes <out>.csv and <out>.json");
  ea.mode_opt = evalc->add_option("--mode", ea.mode, "Mode for level:K sources (solo, trio, destroy_turret, gain_gold)");
  ea.opponent_opt = evalc->add_option("--opponent", ea.opponent, "Opponent level");
  ea.episodes_opt = evalc->add_option("--episodes", ea.episodes, "Evaluation episodes");
  ea.seed_opt = evalc->add_option("--seed", ea.seed, "Evaluation seed");
  evalc->add_option("--workers", ea.workers, "Worker threads");
  evalc->add_flag("--stochastic", ea.stochastic, "Sample actions instead of argmax");
  evalc->add_option("--config", ea.config, "JSON file with evaluation settings; flags win");
  evalc->add_option("--out", ea.out, "Result JSON file (stdout if omitted)");

  LadderArgs la;
  la.workers = default_w;
  auto* ladder = app.add_subcommand("ladder", "Round-robin win rates of the scripted levels");
  ladder->add_option("--episodes", la.episodes, "Episodes per pair");
  ladder->add_option("--seed", la.seed, "Base seed");
  ladder->add_option("--mode", la.mode, "solo or trio");
  ladder->add_option("--workers", la.workers, "Worker threads");
  ladder->add_option("--out", la.out, "Output directory (stdout CSV if omitted)");

  DatasetArgs da;
  da.workers = default_w;
  auto* dataset = app.add_subcommand("dataset", "Inspect, check or mix datasets");
  dataset->require_subcommand(1);
  auto* stats = dataset->add_subcommand("stats", "Return statistics");
  stats->add_option("file", da.file, "Dataset")->required();
  stats->add_option("--format", da.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  stats->add_option("--out", da.out, "Output file (stdout if omitted)");
  auto* validate = dataset->add_subcommand("validate", "Full integrity and legality scan");
  validate->add_option("file", da.file, "Dataset")->required();
  validate->add_option("--workers", da.workers, "Worker threads");
  validate->add_option("--out", da.out, "Report file (stdout if omitted)");
  auto* mix = dataset->add_subcommand("mix", "Equal-count mixture of datasets");
  mix->add_option("inputs", da.inputs, "Input datasets")->required()->expected(2, -1);
  mix->add_option("--out", da.out, "Output .mmof")->required();
  mix->add_option("--seed", da.seed, "Shuffle seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sample->parsed()) return cmd_sample(sa);
    if (trainc->parsed()) return cmd_train(ta);
    if (evalc->parsed()) return cmd_eval(ea);
    if (ladder->parsed()) return cmd_ladder(la);
    if (stats->parsed()) return cmd_stats(da);
    if (validate->parsed()) return cmd_validate(da);
    if (mix->parsed()) return cmd_mix(da);
  } catch (const Error& e) {
    std::cerr << "error: " << error_kind_name(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitUsage;
}

}  // namespace mmoba
