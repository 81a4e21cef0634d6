#pragma once

// Reference computations shared by the unit tests and the acceptance runner.

#include <cmath>
#include <vector>

#include "algo_kernels.hpp"
#include "fixtures.hpp"
#include "mmoba/algos.hpp"
#include "mmoba/nn.hpp"

namespace oracles {

using namespace mmoba;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

inline Mat random_mat(int r, int c, std::uint64_t seed) {
  CounterRng rng(seed);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  return m;
}

// Double-precision re-implementation of the forward pass, used as the finite-difference oracle.
struct RefNet {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::RowVectorXd> b;
  explicit RefNet(const Mlp& net) {
    for (const auto& l : net.layers()) {
      w.push_back(l.w.cast<double>());
      b.push_back(l.b.cast<double>());
    }
  }
  double total(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < w.size(); ++l) {
      Eigen::MatrixXd z = h * w[l];
      z.rowwise() += b[l];
      h = l + 1 < w.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return h.sum();
  }
};

// Worst relative error of backprop vs central differences on a {4, 8, 3} net, every weight and input.
inline double mlp_grad_worst(std::uint64_t seed) {
  const double h = 1e-3;
  Mlp net({4, 8, 3}, seed, false, -1);
  Mat x = random_mat(5, 4, seed + 100);
  MlpTape tape;
  Mat y = net.forward(x, &tape);
  auto ps = net.params();
  zero_grad(ps);
  Mat dx = net.backward(tape, Mat::Ones(y.rows(), y.cols()));
  RefNet ref(net);
  Eigen::MatrixXd xd = x.cast<double>();
  double worst = 0;
  auto probe = [&](double& slot, double analytic) {
    const double keep = slot;
    slot = keep + h;
    const double up = ref.total(xd);
    slot = keep - h;
    const double dn = ref.total(xd);
    slot = keep;
    worst = std::max(worst, rel_err(analytic, (up - dn) / (2 * h)));
  };
  for (std::size_t l = 0; l < ref.w.size(); ++l) {
    const auto& lin = net.layers()[l];
    for (Eigen::Index i = 0; i < lin.w.rows(); ++i)
      for (Eigen::Index j = 0; j < lin.w.cols(); ++j) probe(ref.w[l](i, j), lin.gw(i, j));
    for (Eigen::Index j = 0; j < lin.b.size(); ++j) probe(ref.b[l](j), lin.gb(j));
  }
  for (Eigen::Index i = 0; i < xd.rows(); ++i)
    for (Eigen::Index j = 0; j < xd.cols(); ++j) probe(xd(i, j), dx(i, j));
  return worst;
}

// Loss kernels (behaviour-cloning CE, CQL loss, CQL penalty sum) against central differences in the scores.
inline double kernel_grad_worst(std::uint64_t seed) {
  const AlgoSpec s = fixtures::mode_spec(Mode::Solo);
  const Batch b = fixtures::random_batch(s, 6, seed);
  CounterRng rng(mix_seed(seed, 5));
  Mat z(b.rows(), s.total()), zn(b.rows(), s.total());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    zn.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  }
  std::vector<double> w(static_cast<std::size_t>(b.rows()));
  for (auto& x : w) x = rng.uniform(0.2, 2.0);
  auto check = [&](auto loss, const Mat& analytic) {
    double worst = 0;
    Mat zz = z;
    for (Eigen::Index i = 0; i < zz.size(); ++i) {
      const float keep = zz.data()[i];
      zz.data()[i] = keep + 1e-3f;
      const double up = loss(zz);
      zz.data()[i] = keep - 1e-3f;
      const double dn = loss(zz);
      zz.data()[i] = keep;
      const double h = static_cast<double>(keep + 1e-3f) - static_cast<double>(keep - 1e-3f);
      worst = std::max(worst, rel_err(analytic.data()[i], (up - dn) / h));
    }
    return worst;
  };
  double worst = 0;
  Mat d = Mat::Zero(z.rows(), z.cols());
  kernels::weighted_ce(z, s, kernels::data_view(b), w, &d);
  worst = std::max(worst, check([&](const Mat& m) { return kernels::weighted_ce(m, s, kernels::data_view(b), w, nullptr); }, d));

  d.setZero();
  kernels::cql_loss(z, zn, b, s, 0.99, 10.0, d);
  worst = std::max(worst, check(
                              [&](const Mat& m) {
                                Mat scratch = Mat::Zero(m.rows(), m.cols());
                                auto t = kernels::cql_loss(m, zn, b, s, 0.99, 10.0, scratch);
                                return t.td + 10.0 * t.penalty;
                              },
                              d));

  d.setZero();
  kernels::cql_penalty_sum(z, b, s, 10.0, d);
  worst = std::max(worst, check(
                              [&](const Mat& m) {
                                Mat scratch = Mat::Zero(m.rows(), m.cols());
                                return 10.0 * kernels::cql_penalty_sum(m, b, s, 10.0, scratch);
                              },
                              d));
  return worst;
}

// Mixer backward (locals and every hypernetwork weight) against a double-precision re-evaluation.
inline double mixer_grad_worst(std::uint64_t seed) {
  const int S = 6, H = 4, E = 8;
  Mixer mx(S, H, E, seed);
  CounterRng rng(mix_seed(seed, 9));
  Mat st(3, S), loc(3, H);
  for (Eigen::Index i = 0; i < st.size(); ++i) st.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  for (Eigen::Index i = 0; i < loc.size(); ++i) loc.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  std::vector<ParamRef> ps;
  mx.params(ps);
  zero_grad(ps);
  Mixer::Tape tape;
  mx.forward(st, loc, &tape);
  const Mat dloc = mx.backward(tape, Mat::Ones(3, 1));
  // parameter blobs in order: w1 (W, b), b1 (W, b), w2 (W, b), v (W1, b1, W2, b2)
  std::vector<std::vector<double>> pd;
  for (const auto& p : ps) pd.emplace_back(p.value, p.value + p.size);
  auto lin = [](const std::vector<double>& W, const std::vector<double>& B, const double* x, int in, int out, int j) {
    double acc = B[static_cast<std::size_t>(j)];
    for (int i = 0; i < in; ++i) acc += x[i] * W[static_cast<std::size_t>(i * out + j)];
    return acc;
  };
  auto total = [&](const std::vector<std::vector<double>>& P, const std::vector<double>& L) {
    double sum = 0;
    for (int r = 0; r < 3; ++r) {
      std::vector<double> x(S);
      for (int i = 0; i < S; ++i) x[static_cast<std::size_t>(i)] = st(r, i);
      double out = P[9][0];
      for (int e = 0; e < E; ++e) out += std::max(0.0, lin(P[6], P[7], x.data(), S, E, e)) * P[8][static_cast<std::size_t>(e)];
      for (int e = 0; e < E; ++e) {
        double z = lin(P[2], P[3], x.data(), S, E, e);
        for (int h = 0; h < H; ++h)
          z += L[static_cast<std::size_t>(r * H + h)] * std::abs(lin(P[0], P[1], x.data(), S, H * E, h * E + e));
        const double hid = z > 0 ? z : std::expm1(z);
        out += hid * std::abs(lin(P[4], P[5], x.data(), S, E, e));
      }
      sum += out;
    }
    return sum;
  };
  auto signs = [&](const std::vector<std::vector<double>>& P) {
    std::vector<bool> out;
    for (int r = 0; r < 3; ++r) {
      std::vector<double> x(S);
      for (int i = 0; i < S; ++i) x[static_cast<std::size_t>(i)] = st(r, i);
      for (int j = 0; j < H * E; ++j) out.push_back(lin(P[0], P[1], x.data(), S, H * E, j) > 0);
      for (int e = 0; e < E; ++e) out.push_back(lin(P[4], P[5], x.data(), S, E, e) > 0);
    }
    return out;
  };
  std::vector<double> ld(loc.data(), loc.data() + loc.size());
  double worst = 0;
  const double h = 1e-4;
  for (std::size_t i = 0; i < ld.size(); ++i) {
    auto up = ld, dn = ld;
    up[i] += h;
    dn[i] -= h;
    worst = std::max(worst, rel_err(dloc.data()[i], (total(pd, up) - total(pd, dn)) / (2 * h)));
  }
  for (std::size_t k = 0; k < pd.size(); ++k)
    for (std::size_t i = 0; i < pd[k].size(); ++i) {
      auto up = pd, dn = pd;
      up[k][i] += h;
      dn[k][i] -= h;
      // |w| is not differentiable at 0; a probe that flips a hyper weight's sign measures nothing useful
      if (signs(up) != signs(dn)) continue;
      worst = std::max(worst, rel_err(ps[k].grad[i], (total(up, ld) - total(dn, ld)) / (2 * h)));
    }
  return worst;
}

// Randomised finite-difference probes of dQtot/dQ_local; returns the smallest slope seen.
inline double mixer_min_slope(const Mixer& mx, int state_dim, int probes, std::uint64_t seed) {
  CounterRng rng(seed);
  double lo = 1e300;
  for (int p = 0; p < probes; ++p) {
    Mat st(1, state_dim), loc(1, mx.n_locals());
    for (Eigen::Index i = 0; i < st.size(); ++i) st.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    for (Eigen::Index i = 0; i < loc.size(); ++i) loc.data()[i] = static_cast<float>(rng.uniform(-3, 3));
    const int h = rng.below(mx.n_locals());
    Mat up = loc, dn = loc;
    up(0, h) += 1e-2f;
    dn(0, h) -= 1e-2f;
    const double slope = (static_cast<double>(mx.forward(st, up)(0, 0)) - mx.forward(st, dn)(0, 0)) /
                         (static_cast<double>(up(0, h)) - dn(0, h));
    lo = std::min(lo, slope);
  }
  return lo;
}

// Trains the algorithm's mixer briefly on random data and returns it with its state width.
inline std::unique_ptr<Algorithm> trained_mixer_owner(AlgoId id, int steps, std::uint64_t seed, int& state_dim) {
  const AlgoSpec s = fixtures::mode_spec(id == AlgoId::MAICQ ? Mode::Trio : Mode::Solo);
  AlgoConfig c = fixtures::quick_config(id, s.mode, seed);
  c.max_steps = steps;
  auto algo = make_algorithm(s, c);
  train(*algo, TransitionStore::from_episodes(s, fixtures::random_episodes(s, 3, 20, seed + 1)));
  state_dim = id == AlgoId::MAICQ ? s.obs_dim * s.n_agents : s.obs_dim;
  return algo;
}

// |argmin of the expectile loss found by gradient descent - argmin on a 1e-4 grid|.
inline double expectile_argmin_gap(const std::vector<double>& data, double tau) {
  auto loss_at = [&](double v) {
    std::vector<double> u;
    for (double x : data) u.push_back(x - v);
    return expectile_loss(u, tau);
  };
  double lo = *std::min_element(data.begin(), data.end()), hi = *std::max_element(data.begin(), data.end());
  double best = lo, best_l = loss_at(lo);
  for (double v = lo; v <= hi; v += 1e-4) {
    const double l = loss_at(v);
    if (l < best_l) {
      best_l = l;
      best = v;
    }
  }
  double v = 0;
  for (int it = 0; it < 20000; ++it) {
    std::vector<double> u;
    for (double x : data) u.push_back(x - v);
    double g = 0;
    for (double d : expectile_grad(u, tau)) g -= d;  // d/dv of loss(x - v)
    v -= 0.5 * g;
  }
  return std::abs(v - best);
}

}  // namespace oracles
