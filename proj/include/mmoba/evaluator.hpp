#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmoba/algos.hpp"
#include "mmoba/ladder.hpp"

namespace mmoba {

// Drives a team from a trained algorithm; one row per hero. Greedy unless `stochastic`.
class PolicyTeam : public TeamController {
 public:
  PolicyTeam(std::shared_ptr<const Algorithm> algo, bool stochastic);
  std::vector<StructuredAction> act_team(std::span<const Observation> obs, std::span<const ActionMasks> masks,
                                         std::span<CounterRng> rngs) override;

 private:
  std::shared_ptr<const Algorithm> algo_;
  bool stochastic_;
};

// Builds a fresh controller per episode; the underlying policy is shared read-only.
using ControllerFactory = std::function<std::unique_ptr<TeamController>()>;

// Loads a checkpoint once. Throws Schema when its mode layout does not fit `cfg`.
ControllerFactory checkpoint_factory(const std::string& path, const EnvConfig& cfg, bool stochastic = false);
ControllerFactory algorithm_factory(std::shared_ptr<const Algorithm> algo, const EnvConfig& cfg,
                                    bool stochastic = false);
// Scripted level-k team behind the same interface as a checkpoint.
ControllerFactory level_factory(int level, const EnvConfig& cfg);

// "level:K" selects the scripted level, anything else is a checkpoint path.
ControllerFactory policy_factory(const std::string& source, const EnvConfig& cfg, bool stochastic = false);

struct EvalOptions {
  int episodes = 150;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct WinRateResult {
  int episodes = 0;
  double win_rate = 0, loss_rate = 0, draw_rate = 0;
  double score = 0;  // wins + 0.5 draws, per episode
  double mean_return = 0, std_return = 0;
  nlohmann::json to_json() const;
};

// Evaluated policy plays team A against a scripted level on seeds seed..seed+n-1.
WinRateResult evaluate_winrate(const ControllerFactory& policy, const EnvConfig& cfg, int opponent_level,
                               const EvalOptions& opt = {});

struct SubtaskResult {
  int episodes = 0;
  double mean = 0, std = 0;          // normalised score
  double raw_mean = 0, raw_std = 0;  // frame length or gold
  nlohmann::json to_json() const;
};

SubtaskResult evaluate_subtask(const ControllerFactory& policy, const EnvConfig& cfg, const EvalOptions& opt = {});

// Raw sub-task outcomes (frame length or team gold) per episode.
std::vector<double> subtask_outcomes(const ControllerFactory& policy, const EnvConfig& cfg, const EvalOptions& opt);

// Calibration endpoints from a weak and a strong scripted level.
SubtaskCalibration calibrate_subtasks(int random_level, int expert_level, const EvalOptions& opt);

struct BenchmarkEntry {
  std::string factor, dataset, algorithm;
  std::vector<std::string> checkpoints;  // one per training seed
  int opponent_level = 0;                // ignored for sub-task checkpoints
};

struct BenchmarkRow {
  std::string factor, dataset, algorithm;
  std::vector<double> values;
  double mean = 0, std = 0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::string to_csv() const;  // factor,dataset,algorithm,seed_count,mean,std
  nlohmann::json to_json() const;
};

std::vector<BenchmarkEntry> benchmark_manifest_from_json(const nlohmann::json& j);
// Mean and population std over the values of each row.
BenchmarkRow aggregate_row(std::string factor, std::string dataset, std::string algorithm, std::vector<double> values);
BenchmarkReport benchmark_report(const std::vector<BenchmarkEntry>& entries, const EvalOptions& opt = {});

}  // namespace mmoba
