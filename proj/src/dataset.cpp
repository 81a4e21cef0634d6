#include "mmoba/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "mmoba/ladder.hpp"
#include "mmoba/parallel.hpp"

namespace mmoba {

static_assert(std::endian::native == std::endian::little, "the .mmof codec assumes a little-endian host");

namespace fs = std::filesystem;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const nlohmann::json& config) {
  const std::string s = config.dump();
  return hex64(fnv1a64(s.data(), s.size()));
}

DatasetHeader DatasetHeader::make(Mode mode, int n_controlled, std::string recipe, nlohmann::json generator_config) {
  DatasetHeader h;
  h.mode = mode;
  h.action_spec = ActionSpec::for_mode(mode);
  h.obs_dim = mmoba::obs_dim(mode);
  h.n_heroes_controlled = n_controlled;
  h.recipe = std::move(recipe);
  h.generator_config = std::move(generator_config);
  h.config_hash = mmoba::config_hash(h.generator_config);
  h.reward_items = reward_item_names(mode);
  h.sub_action_table = mmoba::sub_action_table(mode);
  return h;
}

nlohmann::json DatasetHeader::to_json() const {
  nlohmann::json j;
  j["format_version"] = format_version;
  j["mode"] = mode_name(mode);
  j["action_spec"] = {{"head_names", action_spec.head_names}, {"head_sizes", action_spec.head_sizes}};
  j["obs_dim"] = obs_dim;
  j["n_heroes_controlled"] = n_heroes_controlled;
  j["recipe"] = recipe;
  j["generator_config"] = generator_config;
  j["config_hash"] = config_hash;
  j["win_rate"] = win_rate ? nlohmann::json(*win_rate) : nlohmann::json(nullptr);
  j["draw_convention"] = "draw counts 0.5";
  j["episode_count"] = episode_count;
  j["reward_items"] = reward_items;
  j["sub_action_table"] = sub_action_table;
  j["body_hash"] = body_hash;
  return j;
}

DatasetHeader DatasetHeader::from_json(const nlohmann::json& j) {
  DatasetHeader h;
  try {
    h.format_version = j.at("format_version").get<std::uint32_t>();
    h.mode = parse_mode(j.at("mode").get<std::string>());
    h.action_spec.head_names = j.at("action_spec").at("head_names").get<std::vector<std::string>>();
    h.action_spec.head_sizes = j.at("action_spec").at("head_sizes").get<std::vector<int>>();
    h.obs_dim = j.at("obs_dim").get<int>();
    h.n_heroes_controlled = j.at("n_heroes_controlled").get<int>();
    h.recipe = j.at("recipe").get<std::string>();
    h.generator_config = j.at("generator_config");
    h.config_hash = j.at("config_hash").get<std::string>();
    if (!j.at("win_rate").is_null()) h.win_rate = j.at("win_rate").get<double>();
    h.episode_count = j.at("episode_count").get<std::uint64_t>();
    h.reward_items = j.at("reward_items").get<std::vector<std::string>>();
    h.sub_action_table = j.at("sub_action_table").get<std::vector<std::vector<std::uint8_t>>>();
    h.body_hash = j.at("body_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("dataset header: ") + e.what());
  } catch (const ConfigError& e) {
    throw Error(ErrorKind::Schema, std::string("dataset header: ") + e.what());
  }
  if (h.action_spec.head_names.size() != h.action_spec.head_sizes.size() || h.obs_dim <= 0 ||
      h.n_heroes_controlled <= 0 || h.action_spec.head_sizes.size() > 8) {
    throw Error(ErrorKind::Schema, "dataset header: inconsistent action spec or dimensions");
  }
  return h;
}

// ---------------------------------------------------------------- codec

namespace {

class Out {
 public:
  template <class T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    s.append(b, sizeof(T));
  }
  std::string s;
};

class In {
 public:
  In(const std::string& s, std::uint64_t index) : s_(s), index_(index) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > s_.size()) {
      throw Error(ErrorKind::Truncated, "episode " + std::to_string(index_) + ": block ends early");
    }
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool at_end() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
  std::uint64_t index_;
};

void put_ints(Out& o, const std::vector<int>& v) {
  o.put<std::uint8_t>(static_cast<std::uint8_t>(v.size()));
  for (int x : v) o.put<std::int8_t>(static_cast<std::int8_t>(x));
}

std::vector<int> get_ints(In& in) {
  std::vector<int> v(in.get<std::uint8_t>());
  for (auto& x : v) x = in.get<std::int8_t>();
  return v;
}

}  // namespace

std::string encode_episode(const EpisodeRecord& ep, const DatasetHeader& h) {
  Out o;
  o.put<std::uint64_t>(ep.seed);
  put_ints(o, ep.controlled_levels);
  put_ints(o, ep.opponent_levels);
  put_ints(o, ep.archetypes_a);
  put_ints(o, ep.archetypes_b);
  o.put<std::int8_t>(ep.winner ? static_cast<std::int8_t>(*ep.winner == Team::A ? 0 : 1) : std::int8_t{-1});
  o.put<std::uint32_t>(static_cast<std::uint32_t>(ep.length));
  std::uint8_t flags = (ep.subtask_frame_length ? 1 : 0) | (ep.subtask_gold ? 2 : 0);
  o.put<std::uint8_t>(flags);
  o.put<double>(ep.subtask_frame_length.value_or(0.0));
  o.put<double>(ep.subtask_gold.value_or(0.0));
  o.put<std::uint32_t>(static_cast<std::uint32_t>(ep.frames.size()));

  const auto& sizes = h.action_spec.head_sizes;
  const int total = h.action_spec.total_size();
  const std::size_t heroes = static_cast<std::size_t>(h.n_heroes_controlled);
  for (const auto& f : ep.frames) {
    if (f.heroes.size() != heroes) throw Error(ErrorKind::Schema, "frame hero count differs from header");
    for (const auto& hf : f.heroes) {
      if (hf.obs.size() != static_cast<std::size_t>(h.obs_dim) || hf.legal.size() != sizes.size() ||
          hf.action.head_indices.size() != sizes.size() || hf.active.size() != sizes.size() ||
          hf.reward_items.size() != h.reward_items.size()) {
        throw Error(ErrorKind::Schema, "frame shape differs from header");
      }
      for (float x : hf.obs) o.put<float>(x);
      std::vector<std::uint8_t> bits(static_cast<std::size_t>((total + 7) / 8), 0);
      int bit = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        for (int i = 0; i < sizes[k]; ++i, ++bit) {
          if (hf.legal[k][static_cast<std::size_t>(i)]) bits[static_cast<std::size_t>(bit / 8)] |= std::uint8_t(1u << (bit % 8));
        }
      }
      for (auto b : bits) o.put<std::uint8_t>(b);
      for (int a : hf.action.head_indices) o.put<std::uint16_t>(static_cast<std::uint16_t>(a));
      std::uint8_t act = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) act |= static_cast<std::uint8_t>((hf.active[k] ? 1u : 0u) << k);
      o.put<std::uint8_t>(act);
      for (double r : hf.reward_items) o.put<double>(r);
      o.put<double>(hf.weighted);
      o.put<double>(hf.zero_sum);
    }
    o.put<std::uint8_t>(f.done ? 1 : 0);
  }
  return std::move(o.s);
}

EpisodeRecord decode_episode(const std::string& block, const DatasetHeader& h, std::uint64_t index) {
  In in(block, index);
  EpisodeRecord ep;
  ep.seed = in.get<std::uint64_t>();
  ep.controlled_levels = get_ints(in);
  ep.opponent_levels = get_ints(in);
  ep.archetypes_a = get_ints(in);
  ep.archetypes_b = get_ints(in);
  const auto w = in.get<std::int8_t>();
  if (w == 0) ep.winner = Team::A;
  if (w == 1) ep.winner = Team::B;
  ep.length = static_cast<int>(in.get<std::uint32_t>());
  const auto flags = in.get<std::uint8_t>();
  const double fl = in.get<double>();
  const double gold = in.get<double>();
  if (flags & 1) ep.subtask_frame_length = fl;
  if (flags & 2) ep.subtask_gold = gold;
  const auto n_frames = in.get<std::uint32_t>();

  const auto& sizes = h.action_spec.head_sizes;
  const int total = h.action_spec.total_size();
  ep.frames.resize(n_frames);
  for (auto& f : ep.frames) {
    f.heroes.resize(static_cast<std::size_t>(h.n_heroes_controlled));
    for (auto& hf : f.heroes) {
      hf.obs.resize(static_cast<std::size_t>(h.obs_dim));
      for (auto& x : hf.obs) x = in.get<float>();
      std::vector<std::uint8_t> bits(static_cast<std::size_t>((total + 7) / 8));
      for (auto& b : bits) b = in.get<std::uint8_t>();
      hf.legal.resize(sizes.size());
      int bit = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        hf.legal[k].resize(static_cast<std::size_t>(sizes[k]));
        for (auto& l : hf.legal[k]) {
          l = (bits[static_cast<std::size_t>(bit / 8)] >> (bit % 8)) & 1u;
          ++bit;
        }
      }
      hf.action.head_indices.resize(sizes.size());
      for (auto& a : hf.action.head_indices) a = in.get<std::uint16_t>();
      const auto act = in.get<std::uint8_t>();
      hf.active.resize(sizes.size());
      for (std::size_t k = 0; k < sizes.size(); ++k) hf.active[k] = (act >> k) & 1u;
      hf.reward_items.resize(h.reward_items.size());
      for (auto& r : hf.reward_items) r = in.get<double>();
      hf.weighted = in.get<double>();
      hf.zero_sum = in.get<double>();
    }
    f.done = in.get<std::uint8_t>() != 0;
  }
  if (!in.at_end()) throw Error(ErrorKind::Schema, "episode " + std::to_string(index) + ": trailing bytes in block");
  return ep;
}

// ---------------------------------------------------------------- writer

DatasetWriter::DatasetWriter(std::string path, DatasetHeader header)
    : path_(std::move(path)), body_path_(path_ + ".body.tmp"), header_(std::move(header)),
      body_hash_(fnv1a64(nullptr, 0)) {
  if (const auto dir = fs::path(path_).parent_path(); !dir.empty()) fs::create_directories(dir);
  body_.open(body_path_, std::ios::binary | std::ios::trunc);
  if (!body_) throw Error(ErrorKind::Io, "cannot open " + body_path_ + " for writing");
}

DatasetWriter::~DatasetWriter() {
  if (!finished_) {
    body_.close();
    std::error_code ec;
    fs::remove(body_path_, ec);
  }
}

void DatasetWriter::write(const EpisodeRecord& episode) {
  const std::string block = encode_episode(episode, header_);
  const auto len = static_cast<std::uint64_t>(block.size());
  char lb[8];
  std::memcpy(lb, &len, 8);
  body_.write(lb, 8);
  body_.write(block.data(), static_cast<std::streamsize>(block.size()));
  if (!body_) throw Error(ErrorKind::Io, "write failed on " + body_path_);
  body_hash_ = fnv1a64(lb, 8, body_hash_);
  body_hash_ = fnv1a64(block.data(), block.size(), body_hash_);
  ++count_;
  score_sum_ += score_for(episode.winner, Team::A);
}

DatasetHeader DatasetWriter::finish() {
  body_.close();
  header_.episode_count = count_;
  header_.body_hash = hex64(body_hash_);
  if (header_.n_heroes_controlled > 0 && !is_subtask(header_.mode) && count_ > 0) {
    header_.win_rate = score_sum_ / static_cast<double>(count_);
  } else {
    header_.win_rate.reset();
  }
  const std::string hj = header_.to_json().dump();
  const std::string tmp = path_ + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp + " for writing");
    out.write("MMOF", 4);
    const std::uint32_t version = header_.format_version;
    const auto hlen = static_cast<std::uint32_t>(hj.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hj.data(), static_cast<std::streamsize>(hj.size()));
    std::ifstream body(body_path_, std::ios::binary);
    out << body.rdbuf();
    if (!out) throw Error(ErrorKind::Io, "write failed on " + tmp);
  }
  fs::rename(tmp, path_);
  fs::remove(body_path_);
  finished_ = true;
  return header_;
}

// ---------------------------------------------------------------- reader

DatasetReader::DatasetReader(const std::string& path) : path_(path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "no such file: " + path);
  in_.open(path, std::ios::binary);
  if (!in_) throw Error(ErrorKind::Io, "cannot open " + path);
  file_size_ = fs::file_size(path);
  char magic[4] = {};
  in_.read(magic, 4);
  if (in_.gcount() < 4 || std::memcmp(magic, "MMOF", 4) != 0) {
    throw Error(ErrorKind::BadMagic, path + ": not an .mmof file");
  }
  std::uint32_t version = 0, hlen = 0;
  in_.read(reinterpret_cast<char*>(&version), 4);
  in_.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in_) throw Error(ErrorKind::Truncated, path + ": header ends early");
  if (version != kMmofVersion) {
    throw Error(ErrorKind::VersionMismatch,
                path + ": format version " + std::to_string(version) + ", expected " + std::to_string(kMmofVersion));
  }
  if (12ull + hlen > file_size_) throw Error(ErrorKind::Truncated, path + ": header ends early");
  std::string hj(hlen, '\0');
  in_.read(hj.data(), hlen);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(hj);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, path + ": header is not valid JSON");
  }
  header_ = DatasetHeader::from_json(j);
  if (config_hash(header_.generator_config) != header_.config_hash) {
    throw Error(ErrorKind::HashMismatch, path + ": generator config does not match its recorded hash");
  }
  body_start_ = 12ull + hlen;
  rewind();
}

void DatasetReader::rewind() {
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(body_start_));
  index_ = 0;
  hash_ = fnv1a64(nullptr, 0);
}

bool DatasetReader::next(EpisodeRecord& out) {
  const auto pos = static_cast<std::uint64_t>(in_.tellg());
  if (pos == file_size_) {
    if (index_ != header_.episode_count) {
      throw Error(ErrorKind::CountMismatch, path_ + ": header lists " + std::to_string(header_.episode_count) +
                                                " episodes, body has " + std::to_string(index_));
    }
    if (hex64(hash_) != header_.body_hash) throw Error(ErrorKind::HashMismatch, path_ + ": body hash mismatch");
    return false;
  }
  if (index_ >= header_.episode_count) {
    throw Error(ErrorKind::CountMismatch, path_ + ": body has more than the " +
                                              std::to_string(header_.episode_count) + " episodes in the header");
  }
  if (pos + 8 > file_size_) {
    throw Error(ErrorKind::Truncated, path_ + ": truncated in episode " + std::to_string(index_));
  }
  char lb[8];
  in_.read(lb, 8);
  std::uint64_t len;
  std::memcpy(&len, lb, 8);
  if (pos + 8 + len > file_size_) {
    throw Error(ErrorKind::Truncated, path_ + ": truncated in episode " + std::to_string(index_));
  }
  std::string block(len, '\0');
  in_.read(block.data(), static_cast<std::streamsize>(len));
  hash_ = fnv1a64(lb, 8, hash_);
  hash_ = fnv1a64(block.data(), block.size(), hash_);
  out = decode_episode(block, header_, index_);
  ++index_;
  return true;
}

std::vector<std::uint64_t> DatasetReader::build_index() {
  std::vector<std::uint64_t> offsets;
  std::uint64_t pos = body_start_;
  in_.clear();
  while (pos < file_size_) {
    if (pos + 8 > file_size_) throw Error(ErrorKind::Truncated, path_ + ": truncated in episode " + std::to_string(offsets.size()));
    in_.seekg(static_cast<std::streamoff>(pos));
    std::uint64_t len;
    in_.read(reinterpret_cast<char*>(&len), 8);
    if (pos + 8 + len > file_size_) {
      throw Error(ErrorKind::Truncated, path_ + ": truncated in episode " + std::to_string(offsets.size()));
    }
    offsets.push_back(pos);
    pos += 8 + len;
  }
  if (offsets.size() != header_.episode_count) {
    throw Error(ErrorKind::CountMismatch, path_ + ": header lists " + std::to_string(header_.episode_count) +
                                              " episodes, body has " + std::to_string(offsets.size()));
  }
  rewind();
  return offsets;
}

EpisodeRecord DatasetReader::read_at(std::uint64_t offset) {
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(offset));
  std::uint64_t len;
  in_.read(reinterpret_cast<char*>(&len), 8);
  std::string block(len, '\0');
  in_.read(block.data(), static_cast<std::streamsize>(len));
  if (!in_) throw Error(ErrorKind::Truncated, path_ + ": truncated block at offset " + std::to_string(offset));
  // Index is not known here; report the offset instead.
  return decode_episode(block, header_, offset);
}

// ---------------------------------------------------------------- validate / mix / stats

namespace {

void check_episode(const EpisodeRecord& ep, const DatasetHeader& h, std::uint64_t i, ValidationReport& rep) {
  const std::string tag = "episode " + std::to_string(i) + ": ";
  if (ep.frames.empty()) rep.problems.push_back(tag + "no frames");
  if (static_cast<int>(ep.frames.size()) != ep.length) rep.problems.push_back(tag + "length differs from frame count");
  if (!ep.frames.empty() && !ep.frames.back().done) rep.problems.push_back(tag + "last frame not marked done");
  for (std::size_t t = 0; t < ep.frames.size(); ++t) {
    if (t + 1 < ep.frames.size() && ep.frames[t].done) rep.problems.push_back(tag + "done before the last frame");
    for (const auto& hf : ep.frames[t].heroes) {
      ++rep.frames;
      ActionMasks m;
      m.legal = hf.legal;
      if (!m.admits(hf.action)) ++rep.illegal_actions;
      const auto btn = static_cast<std::size_t>(hf.action.head_indices[0]);
      if (btn >= h.sub_action_table.size() || h.sub_action_table[btn] != hf.active) {
        rep.problems.push_back(tag + "stored sub-action row does not match the button");
      }
      for (float x : hf.obs) {
        if (!(x >= -1.0f && x <= 1.0f)) {
          rep.problems.push_back(tag + "observation feature outside [-1, 1]");
          break;
        }
      }
    }
  }
}

}  // namespace

ValidationReport validate_dataset(const std::string& path, int workers) {
  DatasetReader reader(path);
  const DatasetHeader h = reader.header();
  // Sequential pass first: it checks the count and body hash.
  EpisodeRecord ep;
  std::uint64_t n = 0;
  while (reader.next(ep)) ++n;
  const auto offsets = reader.build_index();
  auto parts = parallel_map<ValidationReport>(static_cast<int>(n), workers, [&](int i) {
    DatasetReader local(path);
    ValidationReport r;
    check_episode(local.read_at(offsets[static_cast<std::size_t>(i)]), h, static_cast<std::uint64_t>(i), r);
    return r;
  });
  ValidationReport rep;
  rep.episodes = n;
  for (auto& p : parts) {
    rep.frames += p.frames;
    rep.illegal_actions += p.illegal_actions;
    rep.problems.insert(rep.problems.end(), p.problems.begin(), p.problems.end());
  }
  return rep;
}

DatasetHeader mix_datasets(const std::vector<std::string>& inputs, const std::string& out_path, std::uint64_t seed) {
  if (inputs.empty()) throw ConfigError("inputs", "need at least one dataset to mix");
  std::vector<std::unique_ptr<DatasetReader>> readers;
  std::vector<std::vector<std::uint64_t>> index;
  for (const auto& p : inputs) {
    readers.push_back(std::make_unique<DatasetReader>(p));
    const auto& a = readers.front()->header();
    const auto& b = readers.back()->header();
    if (a.mode != b.mode || !(a.action_spec == b.action_spec) || a.obs_dim != b.obs_dim ||
        a.n_heroes_controlled != b.n_heroes_controlled || a.reward_items != b.reward_items) {
      throw Error(ErrorKind::Schema, "cannot mix " + inputs.front() + " with " + p + ": mode, action spec or obs_dim differ");
    }
    index.push_back(readers.back()->build_index());
  }
  std::size_t per = index.front().size();
  for (const auto& ix : index) per = std::min(per, ix.size());

  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < per; ++i) order.emplace_back(k, i);
  }
  CounterRng rng(mix_seed(seed, 0x6d6978));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(static_cast<int>(i)));
    std::swap(order[i - 1], order[j]);
  }

  nlohmann::json sources = nlohmann::json::array();
  for (const auto& r : readers) {
    sources.push_back({{"recipe", r->header().recipe}, {"config_hash", r->header().config_hash},
                       {"body_hash", r->header().body_hash}});
  }
  nlohmann::json gen = {{"mix", {{"sources", sources}, {"per_source", per}, {"seed", seed}}}};
  DatasetHeader h = DatasetHeader::make(readers.front()->header().mode, readers.front()->header().n_heroes_controlled,
                                        "mixed", std::move(gen));
  DatasetWriter w(out_path, h);
  for (const auto& [k, i] : order) w.write(readers[k]->read_at(index[k][i]));
  return w.finish();
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

DatasetStats dataset_stats(const std::string& path) {
  DatasetReader reader(path);
  DatasetStats s;
  EpisodeRecord ep;
  double score = 0.0;
  while (reader.next(ep)) {
    double ret = 0.0;
    for (const auto& f : ep.frames) {
      for (const auto& hf : f.heroes) ret += hf.zero_sum;
    }
    s.returns.push_back(ret);
    score += score_for(ep.winner, Team::A);
  }
  s.count = s.returns.size();
  if (s.count == 0) return s;
  const double n = static_cast<double>(s.count);
  double sum = 0.0;
  for (double r : s.returns) sum += r;
  s.mean = sum / n;
  double var = 0.0;
  for (double r : s.returns) var += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(var / n);
  auto sorted = s.returns;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  s.win_rate = score / n;
  return s;
}

nlohmann::json DatasetStats::to_json() const {
  return {{"count", count}, {"mean", mean}, {"std", std},       {"min", min},           {"q1", q1},
          {"median", median}, {"q3", q3},   {"max", max},       {"win_rate", win_rate}, {"returns", returns}};
}

std::string DatasetStats::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "count,mean,std,min,q1,median,q3,max,win_rate\n"
     << count << ',' << mean << ',' << std << ',' << min << ',' << q1 << ',' << median << ',' << q3 << ',' << max
     << ',' << win_rate << '\n';
  return os.str();
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::uint64_t h = fnv1a64(nullptr, 0);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return hex64(h);
}

}  // namespace mmoba
