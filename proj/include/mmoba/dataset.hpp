#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmoba/env.hpp"

namespace mmoba {

inline constexpr std::uint32_t kMmofVersion = 1;

struct DatasetHeader {
  std::uint32_t format_version = kMmofVersion;
  Mode mode = Mode::Solo;
  ActionSpec action_spec;
  int obs_dim = 0;
  int n_heroes_controlled = 0;
  std::string recipe;
  nlohmann::json generator_config = nlohmann::json::object();
  std::string config_hash;  // fnv1a64 of generator_config.dump(), hex
  std::optional<double> win_rate;  // draws count 0.5
  std::uint64_t episode_count = 0;
  std::vector<std::string> reward_items;
  std::vector<std::vector<std::uint8_t>> sub_action_table;
  std::string body_hash;  // fnv1a64 over the episode section, hex

  // Fills the derived fields from a mode and a generator config.
  static DatasetHeader make(Mode mode, int n_controlled, std::string recipe, nlohmann::json generator_config);
  nlohmann::json to_json() const;
  static DatasetHeader from_json(const nlohmann::json& j);
};

std::string hex64(std::uint64_t v);
std::string config_hash(const nlohmann::json& config);

struct HeroFrame {
  std::vector<float> obs;
  std::vector<std::vector<std::uint8_t>> legal;  // [head][index]
  StructuredAction action;
  std::vector<std::uint8_t> active;  // sub_action_active row for the chosen button
  std::vector<double> reward_items;  // in header.reward_items order
  double weighted = 0.0;
  double zero_sum = 0.0;
  friend bool operator==(const HeroFrame&, const HeroFrame&) = default;
};

struct StepFrame {
  std::vector<HeroFrame> heroes;  // controlled heroes only
  bool done = false;
  friend bool operator==(const StepFrame&, const StepFrame&) = default;
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::vector<int> controlled_levels;
  std::vector<int> opponent_levels;
  std::vector<int> archetypes_a;
  std::vector<int> archetypes_b;
  std::optional<Team> winner;
  int length = 0;
  std::optional<double> subtask_frame_length;
  std::optional<double> subtask_gold;
  std::vector<StepFrame> frames;
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

// Streams episodes to `<path>.body.tmp`, then assembles the final file on finish().
class DatasetWriter {
 public:
  DatasetWriter(std::string path, DatasetHeader header);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const EpisodeRecord& episode);
  // Writes the header (episode count, win rate, body hash) and the body. Returns the final header.
  DatasetHeader finish();

 private:
  std::string path_;
  std::string body_path_;
  DatasetHeader header_;
  std::ofstream body_;
  std::uint64_t body_hash_;
  std::uint64_t count_ = 0;
  double score_sum_ = 0.0;
  bool finished_ = false;
};

// Sequential reader; never holds more than one episode in memory.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  const DatasetHeader& header() const { return header_; }
  // False at the clean end of the body. Checks episode count and body hash there.
  bool next(EpisodeRecord& out);
  // Byte offsets of every episode block (one scan, no decoding).
  std::vector<std::uint64_t> build_index();
  EpisodeRecord read_at(std::uint64_t offset);
  void rewind();

 private:
  std::string path_;
  std::ifstream in_;
  DatasetHeader header_;
  std::uint64_t body_start_ = 0;
  std::uint64_t file_size_ = 0;
  std::uint64_t index_ = 0;
  std::uint64_t hash_ = 0;
};

// Encodes one episode block body (without its length prefix).
std::string encode_episode(const EpisodeRecord& ep, const DatasetHeader& h);
EpisodeRecord decode_episode(const std::string& block, const DatasetHeader& h, std::uint64_t index);

struct ValidationReport {
  std::uint64_t episodes = 0;
  std::uint64_t frames = 0;
  std::uint64_t illegal_actions = 0;
  std::vector<std::string> problems;
  bool ok() const { return problems.empty() && illegal_actions == 0; }
};

// Full scan: masks admit stored actions, shapes match the header, last frame done.
ValidationReport validate_dataset(const std::string& path, int workers = 1);

// Equal-count mixture: the first min(count) episodes of each input, shuffled with `seed`.
DatasetHeader mix_datasets(const std::vector<std::string>& inputs, const std::string& out_path, std::uint64_t seed);

struct DatasetStats {
  std::vector<double> returns;  // sum over frames and controlled heroes of zero_sum
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double win_rate = 0.0;
  std::uint64_t count = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Linear-interpolated quantile (type 7) of a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double q);
DatasetStats dataset_stats(const std::string& path);

// Hash of a whole file's bytes, hex.
std::string file_hash(const std::string& path);

}  // namespace mmoba
