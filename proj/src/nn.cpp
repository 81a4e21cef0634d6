#include "mmoba/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmoba/error.hpp"

namespace mmoba {

namespace fs = std::filesystem;

void zero_grad(std::span<const ParamRef> params) {
  for (const auto& p : params) std::fill(p.grad, p.grad + p.size, 0.0f);
}

Linear::Linear(int in, int out) : w(Mat::Zero(in, out)), gw(Mat::Zero(in, out)), b(RowVec::Zero(out)), gb(RowVec::Zero(out)) {}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * w;
  y.rowwise() += b;
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  gw.noalias() += x.transpose() * dy;
  gb += dy.colwise().sum();
  return dy * w.transpose();
}

void Linear::params(std::vector<ParamRef>& out) {
  out.push_back({w.data(), gw.data(), static_cast<std::size_t>(w.size())});
  out.push_back({b.data(), gb.data(), static_cast<std::size_t>(b.size())});
}

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed, bool relu_out, float out_scale)
    : widths_(std::move(widths)), relu_out_(relu_out) {
  if (widths_.size() < 2) throw Error(ErrorKind::Internal, "mlp needs at least two widths");
  CounterRng rng(mix_seed(seed, 0x6d6c70));
  const std::size_t n = widths_.size() - 1;
  for (std::size_t l = 0; l < n; ++l) {
    Linear lin(widths_[l], widths_[l + 1]);
    const bool last = l + 1 == n;
    const double bound = (last && out_scale > 0) ? out_scale : std::sqrt(6.0 / widths_[l]);
    for (Eigen::Index i = 0; i < lin.w.size(); ++i) lin.w.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    layers_.push_back(std::move(lin));
  }
}

Mat Mlp::forward(const Mat& x, MlpTape* tape) const {
  if (x.cols() != widths_.front()) throw Error(ErrorKind::Internal, "mlp input width mismatch");
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Mat h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Mat z = layers_[l].forward(h);
    const bool act = l + 1 < layers_.size() || relu_out_;
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(z);
    }
    h = act ? Mat(z.cwiseMax(0.0f)) : std::move(z);
  }
  return h;
}

Mat Mlp::backward(const MlpTape& tape, const Mat& dy) {
  Mat d = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const bool act = l + 1 < layers_.size() || relu_out_;
    if (act) d = d.cwiseProduct((tape.pre[l].array() > 0.0f).cast<float>().matrix());
    d = layers_[l].backward(tape.inputs[l], d);
  }
  return d;
}

void Mlp::params(std::vector<ParamRef>& out) {
  for (auto& l : layers_) l.params(out);
}

std::vector<ParamRef> Mlp::params() {
  std::vector<ParamRef> out;
  params(out);
  return out;
}

void Adam::step(std::span<const ParamRef> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size, 0.0f);
      v_.emplace_back(p.size, 0.0f);
    }
  }
  if (m_.size() != params.size()) throw Error(ErrorKind::Internal, "adam parameter list changed");
  ++t_;
  const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
  const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < p.size; ++i) {
      const float g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g * g;
      const float mh = m[i] / c1, vh = v[i] / c2;
      p.value[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

void soft_update(std::span<const ParamRef> target, std::span<const ParamRef> online, float tau) {
  for (std::size_t k = 0; k < target.size(); ++k) {
    for (std::size_t i = 0; i < target[k].size; ++i) {
      target[k].value[i] = (1.0f - tau) * target[k].value[i] + tau * online[k].value[i];
    }
  }
}

void hard_update(std::span<const ParamRef> target, std::span<const ParamRef> online) {
  for (std::size_t k = 0; k < target.size(); ++k) {
    std::memcpy(target[k].value, online[k].value, target[k].size * sizeof(float));
  }
}

bool TargetSchedule::apply(std::int64_t step, std::span<const ParamRef> target, std::span<const ParamRef> online) const {
  if (soft) {
    soft_update(target, online, tau);
    return true;
  }
  if (period > 0 && step % period == 0) {
    hard_update(target, online);
    return true;
  }
  return false;
}

std::vector<float> masked_logits(std::span<const float> logits, std::span<const std::uint8_t> mask) {
  std::vector<float> out(logits.begin(), logits.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask[i]) out[i] = kMaskedLogit;
  return out;
}

int masked_argmax(std::span<const float> logits, std::span<const std::uint8_t> mask) {
  int best = -1;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    if (best < 0 || logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  if (best < 0) throw Error(ErrorKind::Internal, "no legal entry in action mask");
  return best;
}

std::vector<double> masked_softmax(std::span<const float> logits, std::span<const std::uint8_t> mask) {
  std::vector<double> p(logits.size(), 0.0);
  double mx = -1e300;
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) {
      mx = std::max(mx, static_cast<double>(logits[i]));
      any = true;
    }
  if (!any) throw Error(ErrorKind::Internal, "no legal entry in action mask");
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) s += p[i] = std::exp(static_cast<double>(logits[i]) - mx);
  for (double& x : p) x /= s;
  return p;
}

int masked_sample(std::span<const float> logits, std::span<const std::uint8_t> mask, CounterRng& rng) {
  const auto p = masked_softmax(logits, mask);
  double u = rng.uniform(), acc = 0;
  int last = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    last = static_cast<int>(i);
    acc += p[i];
    if (u < acc) return last;
  }
  return last;
}

double logsumexp(std::span<const double> x) {
  double mx = -1e300;
  for (double v : x) mx = std::max(mx, v);
  double s = 0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

double logsumexp(std::span<const float> x) {
  std::vector<double> d(x.begin(), x.end());
  return logsumexp(std::span<const double>(d));
}

GumbelSample gumbel_softmax(std::span<const float> logits, std::span<const std::uint8_t> mask, float temperature,
                            CounterRng& rng) {
  if (!(temperature > 0)) throw Error(ErrorKind::Internal, "gumbel temperature must be positive");
  std::vector<float> z(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double g = rng.gumbel();  // drawn for every entry so the stream does not depend on the mask
    z[i] = static_cast<float>((logits[i] + g) / temperature);
  }
  GumbelSample s;
  const auto p = masked_softmax(z, mask);
  s.y.assign(p.begin(), p.end());
  s.hard = masked_argmax(z, mask);
  return s;
}

std::vector<float> gumbel_softmax_backward(const GumbelSample& s, std::span<const float> dy, float temperature) {
  double dot = 0;
  for (std::size_t i = 0; i < s.y.size(); ++i) dot += static_cast<double>(s.y[i]) * dy[i];
  std::vector<float> d(s.y.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(s.y[i] * (dy[i] - dot) / temperature);
  return d;
}

double expectile_loss(std::span<const double> u, double tau) {
  double s = 0;
  for (double x : u) s += std::abs(tau - (x < 0 ? 1.0 : 0.0)) * x * x;
  return u.empty() ? 0.0 : s / static_cast<double>(u.size());
}

std::vector<double> expectile_grad(std::span<const double> u, double tau) {
  std::vector<double> g(u.size());
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) g[i] = 2.0 * std::abs(tau - (u[i] < 0 ? 1.0 : 0.0)) * u[i] / n;
  return g;
}

namespace {

std::uint64_t blobs_hash(std::span<const ParamRef> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) h = fnv1a64(p.value, p.size * sizeof(float), h);
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& arch, std::span<const ParamRef> params) {
  nlohmann::json j;
  j["arch"] = arch;
  std::vector<std::uint64_t> sizes;
  for (const auto& p : params) sizes.push_back(p.size);
  j["blob_sizes"] = sizes;
  j["param_hash"] = hex(blobs_hash(params));
  const std::string text = j.dump();
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp + " for writing");
    const std::uint32_t ver = kCheckpointVersion, len = static_cast<std::uint32_t>(text.size());
    out.write("MMCK", 4);
    out.write(reinterpret_cast<const char*>(&ver), 4);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) out.write(reinterpret_cast<const char*>(p.value), static_cast<std::streamsize>(p.size * sizeof(float)));
    if (!out) throw Error(ErrorKind::Io, "write failed on " + tmp);
  }
  fs::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "no such file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MMCK", 4) != 0) throw Error(ErrorKind::BadMagic, path + ": not a checkpoint");
  std::uint32_t ver = 0, len = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in) throw Error(ErrorKind::Truncated, path + ": checkpoint header ends early");
  if (ver != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, path + ": checkpoint version " + std::to_string(ver) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw Error(ErrorKind::Truncated, path + ": checkpoint header ends early");
  CheckpointData d;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    d.arch = j.at("arch");
    for (auto n : j.at("blob_sizes").get<std::vector<std::uint64_t>>()) {
      std::vector<float> b(n);
      in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(n * sizeof(float)));
      if (!in) throw Error(ErrorKind::Truncated, path + ": checkpoint parameters end early");
      d.blobs.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Checkpoint, path + ": bad checkpoint header: " + e.what());
  }
  if (in.peek() != std::ifstream::traits_type::eof()) throw Error(ErrorKind::Checkpoint, path + ": trailing bytes");
  std::vector<ParamRef> refs;
  for (auto& b : d.blobs) refs.push_back({b.data(), nullptr, b.size()});
  if (hex(blobs_hash(refs)) != j.value("param_hash", std::string())) {
    throw Error(ErrorKind::HashMismatch, path + ": parameter hash mismatch");
  }
  return d;
}

void restore_params(const CheckpointData& data, std::span<const ParamRef> params) {
  if (data.blobs.size() != params.size()) throw Error(ErrorKind::Checkpoint, "checkpoint parameter count differs");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (data.blobs[k].size() != params[k].size) throw Error(ErrorKind::Checkpoint, "checkpoint parameter shape differs");
    std::memcpy(params[k].value, data.blobs[k].data(), params[k].size * sizeof(float));
  }
}

}  // namespace mmoba
