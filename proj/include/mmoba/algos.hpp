#pragma once

#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmoba/dataset.hpp"
#include "mmoba/env.hpp"
#include "mmoba/nn.hpp"

namespace mmoba {

// Shapes every network of an algorithm is built from.
struct AlgoSpec {
  Mode mode = Mode::Solo;
  int obs_dim = 0;
  ActionSpec action;
  std::vector<std::vector<std::uint8_t>> sub_action_table;  // [button][head]
  int n_agents = 1;

  static AlgoSpec from_header(const DatasetHeader& h);
  int heads() const { return action.num_heads(); }
  int total() const { return action.total_size(); }
  nlohmann::json to_json() const;
  static AlgoSpec from_json(const nlohmann::json& j);
};

enum class AlgoId { BC, CQL, QmixCql, IQL, TD3BC, IndBC, IndCQL, CommCQL, IndICQ, MAICQ, OMAR, IndQmixCql };
const char* algo_name(AlgoId id);
AlgoId parse_algo(const std::string& name);
std::vector<AlgoId> all_algos();

struct AlgoConfig {
  AlgoId algo = AlgoId::BC;
  int batch_size = 128;  // timesteps per batch (each carries n_agents rows)
  double gamma = 0.99;
  int max_steps = 50000;
  double cql_alpha = 10.0;
  double td3bc_alpha = 2.5;
  double iql_tau = 0.7;
  double iql_beta = 3.0;
  double icq_beta_critic = 1000.0;
  double icq_beta_policy = 0.1;
  double omar_coe = 0.5;
  double omar_beta = 3.0;  // advantage-weighted BC temperature for the OMAR policy
  int omar_candidates = 10;
  double weight_clip = 100.0;
  float gumbel_temperature = 1.0f;
  bool td3bc_bc_mse = false;  // BC term as MSE on relaxed one-hots instead of CE
  float lr = 3e-4f;
  int hidden = 128;
  int mixer_embed = 32;
  bool soft_target = true;
  float tau = 0.005f;
  int hard_period = 2000;
  std::uint64_t seed = 0;

  // Mode-dependent defaults: Solo lr 3e-4 + soft targets, Trio lr 1e-4 + hard targets.
  static AlgoConfig defaults(AlgoId algo, Mode mode);
  void validate() const;
  nlohmann::json to_json() const;
  // Overlays the keys present in `j` onto `base`.
  static AlgoConfig from_json(const nlohmann::json& j, AlgoConfig base);
};

// Rows are ordered [timestep][agent]; agents of one timestep are contiguous.
struct Batch {
  int timesteps = 0;
  int agents = 1;
  Mat obs, next_obs;
  std::vector<std::uint8_t> legal, next_legal;    // rows x total
  std::vector<int> act, next_act;                 // rows x heads
  std::vector<std::uint8_t> active, next_active;  // rows x heads
  std::vector<float> reward;                      // per-agent zero-sum reward
  std::vector<float> done;                        // 1 on terminal transitions
  int rows() const { return timesteps * agents; }
};

// Whole dataset in memory as flat transition arrays.
class TransitionStore {
 public:
  static TransitionStore load(const std::string& path);
  static TransitionStore from_episodes(const AlgoSpec& spec, const std::vector<EpisodeRecord>& episodes);
  const AlgoSpec& spec() const { return spec_; }
  std::size_t size() const { return done_.size(); }
  Batch sample(int timesteps, CounterRng& rng) const;
  Batch gather(std::span<const std::size_t> index) const;

 private:
  AlgoSpec spec_;
  std::vector<float> obs_;
  std::vector<std::uint8_t> legal_, active_;
  std::vector<int> act_;
  std::vector<float> reward_;
  std::vector<std::uint8_t> done_;
  std::vector<std::int64_t> next_;  // -1 at terminals
};

using LossMap = std::map<std::string, double>;

// Monotonic QMIX-style mixer: hypernetworks conditioned on a state produce non-negative weights.
class Mixer {
 public:
  Mixer() = default;
  Mixer(int state_dim, int n_locals, int embed, std::uint64_t seed);
  struct Tape {
    Mat state, locals, w1raw, b1, z, hid, w2raw;
    MlpTape vt;
  };
  // rows x 1
  Mat forward(const Mat& state, const Mat& locals, Tape* tape = nullptr) const;
  // Returns dL/dlocals; accumulates hypernetwork gradients.
  Mat backward(const Tape& tape, const Mat& dqtot);
  void params(std::vector<ParamRef>& out);
  int n_locals() const { return n_; }

 private:
  int n_ = 0, e_ = 0;
  Mlp w1_, b1_, w2_, v_;
};

class Algorithm {
 public:
  Algorithm(AlgoSpec spec, AlgoConfig cfg);
  virtual ~Algorithm() = default;
  Algorithm(const Algorithm&) = delete;
  Algorithm& operator=(const Algorithm&) = delete;

  virtual LossMap train_step(const Batch& batch) = 0;
  // Per-row head scores used for acting (Q values or logits), rows x total. Rows of one call are
  // the agents of a single timestep; only communicating algorithms look across rows.
  virtual Mat action_scores(const Mat& obs) const = 0;
  // Exposed for property tests; null when the algorithm has none.
  virtual const Mixer* mixer() const { return nullptr; }

  std::vector<StructuredAction> act(const Mat& obs, std::span<const ActionMasks> masks, bool greedy,
                                    CounterRng& rng) const;

  const AlgoSpec& spec() const { return spec_; }
  const AlgoConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }
  // Online then target parameters, in a fixed order (checkpoint layout).
  std::vector<ParamRef> all_params() const { return saved_; }

 protected:
  // Called by subclasses once their networks exist; targets are hard-copied from online.
  void register_params(std::vector<ParamRef> online, std::vector<ParamRef> target_online,
                       std::vector<ParamRef> target);
  void begin_step();
  void end_step();

  AlgoSpec spec_;
  AlgoConfig cfg_;
  Adam opt_;
  TargetSchedule sched_;
  CounterRng rng_;
  std::int64_t step_ = 0;
  std::vector<ParamRef> online_, target_online_, target_, saved_;
};

std::unique_ptr<Algorithm> make_algorithm(const AlgoSpec& spec, const AlgoConfig& cfg);
void save_algorithm(const std::string& path, const Algorithm& algo);
std::unique_ptr<Algorithm> load_algorithm(const std::string& path);

// Algorithms that need the agents of a timestep together (joint batches, team acting).
bool needs_joint_batch(AlgoId id);

struct TrainLog {
  std::ostream* csv = nullptr;  // "step,loss_name,value"
  int every = 1;
};
// Runs cfg.max_steps steps with batches drawn from a seed-determined stream. Returns the last loss map.
LossMap train(Algorithm& algo, const TransitionStore& data, const TrainLog& log = {});

// Communication features: each row's encoding followed by the elementwise max over its timestep's agents.
Mat comm_message_features(const Mat& encodings, int agents);

// Zeroth-order target: best of m uniformly sampled legal head tuples under `scores` (one row).
std::vector<int> zeroth_order_action(std::span<const float> scores, std::span<const std::uint8_t> legal,
                                     const AlgoSpec& spec, int m, CounterRng& rng);

}  // namespace mmoba
