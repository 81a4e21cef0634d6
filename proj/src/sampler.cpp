#include "mmoba/sampler.hpp"

#include <filesystem>

#include "mmoba/parallel.hpp"

namespace mmoba {

namespace fs = std::filesystem;

EnvConfig Recipe::env_config() const {
  EnvConfig cfg = EnvConfig::defaults(mode);
  if (max_steps > 0) cfg.max_steps = max_steps;
  return cfg;
}

void Recipe::validate() const {
  if (name.empty()) throw ConfigError("name", "recipe needs a name");
  if (episodes < 1) throw ConfigError("episodes", "must be >= 1");
  auto check_level = [](int k, const char* field) {
    if (k < 0 || k >= kNumLevels) throw ConfigError(field, "level must lie in [0, 4], got " + std::to_string(k));
  };
  if (controlled_checkpoint.empty()) check_level(controlled_level, "controlled_level");
  for (int k : opponent_levels) check_level(k, "opponent_levels");
  if (is_subtask(mode)) {
    if (!opponent_levels.empty()) throw ConfigError("opponent_levels", "sub-task recipes have no opponent");
  } else if (opponent_levels.empty()) {
    throw ConfigError("opponent_levels", "competitive recipes need at least one opponent level");
  }
  if (teammate_level) {
    if (!is_trio_layout(mode)) throw ConfigError("teammate_level", "teammate override needs a Trio mode");
    check_level(*teammate_level, "teammate_level");
  }
  if (shared_level && !controlled_checkpoint.empty()) {
    throw ConfigError("shared_level", "cannot share a level with a checkpoint-controlled team");
  }
  env_config().validate();
}

nlohmann::json Recipe::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["mode"] = mode_name(mode);
  j["controlled_level"] = controlled_level;
  j["controlled_checkpoint"] = controlled_checkpoint;
  j["opponent_levels"] = opponent_levels;
  j["shared_level"] = shared_level;
  j["teammate_level"] = teammate_level ? nlohmann::json(*teammate_level) : nlohmann::json(nullptr);
  j["episodes"] = episodes;
  j["base_seed"] = base_seed;
  j["max_steps"] = max_steps;
  return j;
}

Recipe Recipe::from_json(const nlohmann::json& j) {
  Recipe r;
  try {
    r.name = j.at("name").get<std::string>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.controlled_level = j.value("controlled_level", 1);
    r.controlled_checkpoint = j.value("controlled_checkpoint", std::string());
    r.opponent_levels = j.value("opponent_levels", std::vector<int>{});
    r.shared_level = j.value("shared_level", false);
    if (j.contains("teammate_level") && !j.at("teammate_level").is_null()) {
      r.teammate_level = j.at("teammate_level").get<int>();
    }
    r.episodes = j.value("episodes", 512);
    r.base_seed = j.value("base_seed", std::uint64_t{0});
    r.max_steps = j.value("max_steps", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("recipe", e.what());
  }
  r.validate();
  return r;
}

EpisodeRecord sample_episode(const Recipe& recipe, int index) {
  const EnvConfig cfg = recipe.env_config();
  const PolicyContext ctx = PolicyContext::from(cfg);
  const std::uint64_t seed = recipe.base_seed + static_cast<std::uint64_t>(index);
  CounterRng rng(mix_seed(seed, 0x5a3));
  const auto na = cfg.archetypes_a.size(), nb = cfg.archetypes_b.size();

  int ctrl = recipe.controlled_level;
  int opp = -1;
  if (!recipe.opponent_levels.empty()) {
    const auto n = static_cast<int>(recipe.opponent_levels.size());
    opp = recipe.opponent_levels[static_cast<std::size_t>(n == 1 ? 0 : rng.below(n))];
    if (recipe.shared_level) ctrl = opp;
  }
  const bool from_ckpt = !recipe.controlled_checkpoint.empty();
  std::vector<int> levels_a(na, from_ckpt ? -1 : ctrl), levels_b(nb, opp);
  if (recipe.teammate_level) {
    levels_a[static_cast<std::size_t>(rng.below(static_cast<int>(na)))] = *recipe.teammate_level;
    if (nb > 0) levels_b[static_cast<std::size_t>(rng.below(static_cast<int>(nb)))] = *recipe.teammate_level;
  }

  std::unique_ptr<TeamController> team_a;
  if (from_ckpt) {
    team_a = checkpoint_controller(recipe.controlled_checkpoint, cfg);
  } else {
    team_a = scripted_team(levels_a, ctx);
  }
  std::unique_ptr<TeamController> team_b = nb > 0 ? scripted_team(levels_b, ctx) : nullptr;

  EpisodeRecord ep;
  ep.seed = seed;
  ep.controlled_levels = levels_a;
  ep.opponent_levels = levels_b;
  ep.archetypes_a = cfg.archetypes_a;
  ep.archetypes_b = cfg.archetypes_b;
  const auto table = sub_action_table(cfg.mode);
  const auto& items = reward_item_names(cfg.mode);
  auto hook = [&](const StepResult& pre, const std::vector<StructuredAction>& joint, const StepResult& post) {
    StepFrame f;
    f.done = post.done;
    for (std::size_t i = 0; i < na; ++i) {
      HeroFrame hf;
      hf.obs = pre.observations[i].vector;
      hf.legal = pre.masks[i].legal;
      hf.action = joint[i];
      hf.active = table[static_cast<std::size_t>(joint[i].head_indices[0])];
      const auto& rv = post.rewards[i];
      for (const auto& name : items) hf.reward_items.push_back(rv.items.at(name));
      hf.weighted = rv.weighted;
      hf.zero_sum = rv.zero_sum;
      f.heroes.push_back(std::move(hf));
    }
    ep.frames.push_back(std::move(f));
  };
  const EpisodeOutcome out = run_episode(cfg, seed, *team_a, team_b.get(), hook);
  ep.winner = out.winner;
  ep.length = out.length;
  if (cfg.mode == Mode::SubDestroyTurret) ep.subtask_frame_length = out.length;
  if (cfg.mode == Mode::SubGainGold) ep.subtask_gold = out.team_a_gold;
  return ep;
}

DatasetHeader run_recipe(const Recipe& recipe, const std::string& out_path, int workers) {
  recipe.validate();
  const EnvConfig cfg = recipe.env_config();
  nlohmann::json gen = recipe.to_json();
  gen["env"] = {{"grid_width", cfg.grid_width},   {"grid_height", cfg.grid_height},
                {"max_steps", cfg.max_steps},     {"reward_weights", cfg.reward_weights},
                {"crit_chance", cfg.crit_chance}, {"archetypes_a", cfg.archetypes_a},
                {"archetypes_b", cfg.archetypes_b}};
  if (!recipe.controlled_checkpoint.empty()) gen["controlled_checkpoint_hash"] = file_hash(recipe.controlled_checkpoint);
  DatasetWriter writer(out_path, DatasetHeader::make(cfg.mode, static_cast<int>(cfg.archetypes_a.size()),
                                                     recipe.name, std::move(gen)));
  ordered_parallel<EpisodeRecord>(
      recipe.episodes, workers, [&](int i) { return sample_episode(recipe, i); },
      [&](int, EpisodeRecord&& ep) { writer.write(ep); });
  return writer.finish();
}

std::vector<SuiteEntry> standard_suite_manifest(std::uint64_t seed, int main_episodes, int subtask_episodes) {
  std::vector<SuiteEntry> out;
  std::uint64_t next_seed = seed;
  auto add = [&](const std::string& dir, Recipe r) {
    r.base_seed = next_seed;
    next_seed += 1000003;
    out.push_back({dir + "/" + r.name + ".mmof", r.name, {}, r});
  };
  auto add_mix = [&](const std::string& dir, const std::string& name, std::vector<std::string> parts) {
    for (auto& p : parts) p = dir + "/" + p + ".mmof";
    out.push_back({dir + "/" + name + ".mmof", name, std::move(parts), std::nullopt});
  };

  for (Mode mode : {Mode::Solo, Mode::Trio}) {
    const std::string dir = mode_name(mode);
    // norm: opponent level 1; hard: opponent level 3. poor/medium/expert sit one level below/equal/above.
    for (auto [tag, opp] : {std::pair{"norm", 1}, std::pair{"hard", 3}}) {
      const std::string t = tag;
      const char* grades[] = {"poor", "medium", "expert"};
      for (int g = 0; g < 3; ++g) {
        Recipe r;
        r.name = t + "_" + grades[g];
        r.mode = mode;
        r.controlled_level = opp - 1 + g;
        r.opponent_levels = {opp};
        r.episodes = main_episodes;
        add(dir, r);
      }
      add_mix(dir, t + "_mixed", {t + "_poor", t + "_medium", t + "_expert"});
      Recipe ml;
      ml.name = t + "_multi_level";
      ml.mode = mode;
      ml.opponent_levels = t == "norm" ? std::vector<int>{0, 1, 2} : std::vector<int>{2, 3, 4};
      ml.shared_level = true;
      ml.episodes = main_episodes;
      add(dir, ml);
      Recipe gen;
      gen.name = t + "_general";
      gen.mode = mode;
      gen.controlled_level = opp;
      gen.opponent_levels = {0, 2, 4};
      gen.episodes = main_episodes;
      add(dir, gen);
    }
    if (mode == Mode::Trio) {
      for (auto [name, level] : {std::pair{"norm_stupid_partner", 0}, std::pair{"norm_expert_partner", 3}}) {
        Recipe r;
        r.name = name;
        r.mode = mode;
        r.controlled_level = 1;
        r.opponent_levels = {1};
        r.teammate_level = level;
        r.episodes = main_episodes;
        add(dir, r);
      }
      add_mix(dir, "norm_mixed_partner", {"norm_stupid_partner", "norm_expert_partner"});
    }
  }
  for (Mode mode : {Mode::SubDestroyTurret, Mode::SubGainGold}) {
    const std::string dir = "subtask";
    const std::string t = mode_name(mode);
    for (auto [grade, level] : {std::pair{"medium", 2}, std::pair{"expert", 4}}) {
      Recipe r;
      r.name = t + "_" + grade;
      r.mode = mode;
      r.controlled_level = level;
      r.episodes = subtask_episodes;
      add(dir, r);
    }
    add_mix(dir, t + "_mixed", {t + "_medium", t + "_expert"});
  }
  return out;
}

std::vector<DatasetHeader> standard_suite(std::uint64_t seed, const std::string& dir, int workers, int main_episodes,
                                          int subtask_episodes) {
  std::vector<DatasetHeader> headers;
  for (const auto& e : standard_suite_manifest(seed, main_episodes, subtask_episodes)) {
    const std::string path = (fs::path(dir) / e.path).string();
    if (e.spec) {
      headers.push_back(run_recipe(*e.spec, path, workers));
    } else {
      std::vector<std::string> parts;
      for (const auto& p : e.mixed_from) parts.push_back((fs::path(dir) / p).string());
      DatasetHeader h = mix_datasets(parts, path, seed);
      headers.push_back(h);
    }
  }
  return headers;
}

}  // namespace mmoba
