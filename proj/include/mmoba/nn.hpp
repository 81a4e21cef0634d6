#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmoba/rng.hpp"

namespace mmoba {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<float, 1, Eigen::Dynamic>;

inline constexpr float kMaskedLogit = -1e9f;

// A flat view of one parameter tensor and its gradient buffer.
struct ParamRef {
  float* value;
  float* grad;
  std::size_t size;
};

void zero_grad(std::span<const ParamRef> params);

// Y = X W + b, W is in x out.
struct Linear {
  Mat w, gw;
  RowVec b, gb;

  Linear() = default;
  Linear(int in, int out);
  int in() const { return static_cast<int>(w.rows()); }
  int out() const { return static_cast<int>(w.cols()); }
  Mat forward(const Mat& x) const;
  // Accumulates gw/gb, returns dX.
  Mat backward(const Mat& x, const Mat& dy);
  void params(std::vector<ParamRef>& out);
};

struct MlpTape {
  std::vector<Mat> inputs;  // input of each layer
  std::vector<Mat> pre;     // pre-activation of each layer
};

// ReLU between layers; the last layer is linear unless relu_out.
class Mlp {
 public:
  Mlp() = default;
  // Hidden layers He-uniform; output layer uniform(-out_scale, out_scale), or He-uniform when out_scale <= 0.
  Mlp(std::vector<int> widths, std::uint64_t seed, bool relu_out = false, float out_scale = 3e-3f);

  Mat forward(const Mat& x, MlpTape* tape = nullptr) const;
  // Accumulates parameter gradients, returns dX.
  Mat backward(const MlpTape& tape, const Mat& dy);
  void params(std::vector<ParamRef>& out);
  std::vector<ParamRef> params();

  const std::vector<int>& widths() const { return widths_; }
  bool relu_out() const { return relu_out_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<int> widths_;
  bool relu_out_ = false;
  std::vector<Linear> layers_;
};

struct AdamConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(std::span<const ParamRef> params);
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// target <- (1 - tau) target + tau online
void soft_update(std::span<const ParamRef> target, std::span<const ParamRef> online, float tau);
void hard_update(std::span<const ParamRef> target, std::span<const ParamRef> online);

struct TargetSchedule {
  bool soft = true;
  float tau = 0.005f;
  int period = 2000;
  // Applies the update that belongs to training step `step` (1-based). Returns true if anything was copied.
  bool apply(std::int64_t step, std::span<const ParamRef> target, std::span<const ParamRef> online) const;
};

// Masked categorical helpers over one head's logits.
std::vector<float> masked_logits(std::span<const float> logits, std::span<const std::uint8_t> mask);
// Lowest index wins ties. Throws Internal if nothing is legal.
int masked_argmax(std::span<const float> logits, std::span<const std::uint8_t> mask);
int masked_sample(std::span<const float> logits, std::span<const std::uint8_t> mask, CounterRng& rng);
// Softmax restricted to legal entries (illegal get exactly 0).
std::vector<double> masked_softmax(std::span<const float> logits, std::span<const std::uint8_t> mask);

double logsumexp(std::span<const double> x);
double logsumexp(std::span<const float> x);

struct GumbelSample {
  std::vector<float> y;  // relaxed one-hot, sums to 1
  int hard = 0;          // argmax of y
};
// Masked entries get exactly 0 weight.
GumbelSample gumbel_softmax(std::span<const float> logits, std::span<const std::uint8_t> mask, float temperature,
                            CounterRng& rng);
// dL/dlogits given dL/dy for a sample drawn by gumbel_softmax.
std::vector<float> gumbel_softmax_backward(const GumbelSample& s, std::span<const float> dy, float temperature);

// mean_i |tau - 1(u_i < 0)| u_i^2
double expectile_loss(std::span<const double> u, double tau);
// d loss / d u_i
std::vector<double> expectile_grad(std::span<const double> u, double tau);

// Checkpoints: "MMCK", u32 version, u32 json length, json, then raw float32 blobs in param order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const nlohmann::json& arch, std::span<const ParamRef> params);
struct CheckpointData {
  nlohmann::json arch;
  std::vector<std::vector<float>> blobs;
};
CheckpointData load_checkpoint(const std::string& path);
// Copies blobs into params; sizes must match exactly.
void restore_params(const CheckpointData& data, std::span<const ParamRef> params);

}  // namespace mmoba
