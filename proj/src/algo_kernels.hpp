#pragma once

// Loss pieces shared by the algorithm implementations.

#include <memory>
#include <span>
#include <vector>

#include "mmoba/algos.hpp"

namespace mmoba::kernels {

inline constexpr std::uint64_t kTagEncoder = 0x10, kTagPolicy = 0x20, kTagQ = 0x30, kTagV = 0x40,
                               kTagCritic1 = 0x50, kTagCritic2 = 0x60, kTagMixer = 0x70;

Mlp make_encoder(const AlgoSpec& s, const AlgoConfig& c, int in_width = -1);
Mlp make_head(const AlgoConfig& c, int in, int out, std::uint64_t tag);
std::vector<ParamRef> collect(std::initializer_list<Mlp*> nets);

// Per-row head choices: actions, which heads count, and the legal masks of that state.
struct HeadView {
  const int* act;
  const std::uint8_t* active;
  const std::uint8_t* legal;
};
inline HeadView data_view(const Batch& b) { return {b.act.data(), b.active.data(), b.legal.data()}; }

// (1/rows) Σ_r w_r Σ_{h active} CE(masked softmax(L_h), a_h). Adds grad_scale * gradient into dL.
double weighted_ce(const Mat& L, const AlgoSpec& s, HeadView v, std::span<const double> w, Mat* dL,
                   double grad_scale = 1.0);

// Mean over active heads of Z(r, off_h + a_h), and its gradient.
double mean_active(const Mat& Z, int r, const AlgoSpec& s, const int* act, const std::uint8_t* active);
void mean_active_grad(Mat& dZ, int r, const AlgoSpec& s, const int* act, const std::uint8_t* active, double g);

// Max over legal entries of one head segment; 0 if nothing is legal.
double masked_max(const float* z, const std::uint8_t* legal, int n);

struct CqlTerms {
  double td = 0, penalty = 0;
};
// Factored per-head CQL: per row the mean over active heads of
// (Q_h(a_h) - y_h)^2 + alpha (logsumexp_legal Q_h - Q_h(a_h)), averaged over rows.
CqlTerms cql_loss(const Mat& Z, const Mat& Zt_next, const Batch& b, const AlgoSpec& s, double gamma, double alpha,
                  Mat& dZ);
// (1/rows) Σ_r Σ_{h active} (logsumexp_legal Q_h - Q_h(a_h)); adds alpha * gradient.
double cql_penalty_sum(const Mat& Z, const Batch& b, const AlgoSpec& s, double alpha, Mat& dZ);

std::unique_ptr<Algorithm> make_icq(const AlgoSpec& s, const AlgoConfig& c, bool ctde);
std::unique_ptr<Algorithm> make_comm_cql(const AlgoSpec& s, const AlgoConfig& c);
std::unique_ptr<Algorithm> make_omar(const AlgoSpec& s, const AlgoConfig& c);

}  // namespace mmoba::kernels
