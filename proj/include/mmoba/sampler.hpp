#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmoba/dataset.hpp"
#include "mmoba/ladder.hpp"

namespace mmoba {

struct Recipe {
  std::string name;
  Mode mode = Mode::Solo;
  int controlled_level = 1;
  std::string controlled_checkpoint;  // overrides controlled_level when set
  // One entry: fixed opponent. Several: one drawn per episode. Empty for sub-tasks.
  std::vector<int> opponent_levels;
  // Multi-level recipes: both sides play the drawn level.
  bool shared_level = false;
  // Heterogeneous teams (Trio): one random hero per team is forced to this level.
  std::optional<int> teammate_level;
  int episodes = 512;
  std::uint64_t base_seed = 0;
  int max_steps = 0;  // 0 keeps the mode default

  EnvConfig env_config() const;
  void validate() const;
  nlohmann::json to_json() const;
  static Recipe from_json(const nlohmann::json& j);
};

// Runs the recipe with up to `workers` episodes in flight and writes them in index order.
DatasetHeader run_recipe(const Recipe& recipe, const std::string& out_path, int workers);

// Plays and records one episode of a recipe (controlled heroes = team A).
EpisodeRecord sample_episode(const Recipe& recipe, int index);

struct SuiteEntry {
  std::string path;      // relative to the suite directory
  std::string recipe;    // taxonomy label
  std::vector<std::string> mixed_from;  // non-empty for mixtures
  std::optional<Recipe> spec;
};

// The desk-scale taxonomy. `main_episodes` and `subtask_episodes` default to 512 and 64.
std::vector<SuiteEntry> standard_suite_manifest(std::uint64_t seed, int main_episodes = 512, int subtask_episodes = 64);

// Generates every entry of the manifest under `dir`; returns the written headers in manifest order.
std::vector<DatasetHeader> standard_suite(std::uint64_t seed, const std::string& dir, int workers,
                                          int main_episodes = 512, int subtask_episodes = 64);

// Controller built from a trained checkpoint (defined with the evaluator).
std::unique_ptr<TeamController> checkpoint_controller(const std::string& path, const EnvConfig& cfg);

}  // namespace mmoba
