#include <cmath>

#include "algo_kernels.hpp"
#include "mmoba/algos.hpp"
#include "mmoba/error.hpp"

namespace mmoba {

using namespace kernels;

std::vector<int> zeroth_order_action(std::span<const float> scores, std::span<const std::uint8_t> legal,
                                     const AlgoSpec& s, int m, CounterRng& rng) {
  std::vector<int> best, cand(static_cast<std::size_t>(s.heads()));
  double best_score = 0;
  for (int c = 0; c < m; ++c) {
    for (int h = 0; h < s.heads(); ++h) {
      const int off = s.action.offset(h), n = s.action.head_sizes[static_cast<std::size_t>(h)];
      int count = 0;
      for (int j = 0; j < n; ++j) count += legal[static_cast<std::size_t>(off + j)] ? 1 : 0;
      if (count == 0) throw Error(ErrorKind::Internal, "no legal entry in action mask");
      int pick = rng.below(count);
      for (int j = 0; j < n; ++j) {
        if (!legal[static_cast<std::size_t>(off + j)]) continue;
        if (pick-- == 0) {
          cand[static_cast<std::size_t>(h)] = j;
          break;
        }
      }
    }
    const auto& row = s.sub_action_table[static_cast<std::size_t>(cand[0])];
    double score = 0;
    int n_active = 0;
    for (int h = 0; h < s.heads(); ++h) {
      if (!row[static_cast<std::size_t>(h)]) continue;
      score += scores[static_cast<std::size_t>(s.action.offset(h) + cand[static_cast<std::size_t>(h)])];
      ++n_active;
    }
    score /= std::max(n_active, 1);
    if (best.empty() || score > best_score) {
      best = cand;
      best_score = score;
    }
  }
  return best;
}

namespace {

std::vector<double> batch_softmax(const std::vector<double>& x, double beta) {
  double mx = -1e300;
  for (double v : x) mx = std::max(mx, v / beta);
  std::vector<double> w(x.size());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] = std::exp(x[i] / beta - mx);
  for (double& v : w) v /= s;
  return w;
}

// Rows of one timestep laid side by side: T x (agents * width).
Mat joint_rows(const Mat& rows, int agents) {
  const Eigen::Index t = rows.rows() / agents;
  return Eigen::Map<const Mat>(rows.data(), t, rows.cols() * agents);
}

// ---------------------------------------------------------------- ICQ / MAICQ

class IcqAlgo final : public Algorithm {
 public:
  IcqAlgo(const AlgoSpec& s, const AlgoConfig& c, bool ctde)
      : Algorithm(s, c),
        ctde_(ctde),
        enc_(make_encoder(s, c)),
        pi_(make_head(c, c.hidden, s.total(), kTagPolicy)),
        q_(make_head(c, c.hidden, s.total(), kTagQ)),
        enc_t_(enc_),
        q_t_(q_) {
    auto on = collect({&enc_, &pi_, &q_});
    auto ton = collect({&enc_, &q_});
    auto tg = collect({&enc_t_, &q_t_});
    if (ctde_) {
      mix_ = Mixer(s.obs_dim * s.n_agents, s.n_agents, c.mixer_embed, mix_seed(c.seed, kTagMixer));
      mix_t_ = mix_;
      mix_.params(on);
      mix_.params(ton);
      mix_t_.params(tg);
    }
    register_params(on, ton, tg);
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    const int rows = b.rows(), heads = spec_.heads();
    MlpTape te, tp, tq;
    const Mat f = enc_.forward(b.obs, &te);
    const Mat l = pi_.forward(f, &tp);
    const Mat z = q_.forward(f, &tq);
    const Mat zt = q_t_.forward(enc_t_.forward(b.obs));
    const Mat ztn = q_t_.forward(enc_t_.forward(b.next_obs));

    std::vector<double> q(static_cast<std::size_t>(rows)), qt(q.size()), qtn(q.size());
    for (int r = 0; r < rows; ++r) {
      q[static_cast<std::size_t>(r)] = mean_active(z, r, spec_, b.act.data(), b.active.data());
      qt[static_cast<std::size_t>(r)] = mean_active(zt, r, spec_, b.act.data(), b.active.data());
      // in-sample successor value: only the stored next action is ever read
      double v = 0;
      int cnt = 0;
      for (int h = 0; h < heads; ++h) {
        const std::size_t k = static_cast<std::size_t>(r * heads + h);
        if (!b.next_active[k]) continue;
        v += read_target(ztn, b, r, h, b.next_act[k]);
        ++cnt;
      }
      qtn[static_cast<std::size_t>(r)] = v / std::max(cnt, 1);
    }

    Mat dz = Mat::Zero(z.rows(), z.cols()), dl = Mat::Zero(l.rows(), l.cols());
    double closs = 0;
    std::vector<double> wp(static_cast<std::size_t>(rows));
    if (!ctde_) {
      double mean_qt = 0;
      for (double v : qt) mean_qt += v / rows;
      std::vector<double> adv(qt.size());
      for (std::size_t r = 0; r < adv.size(); ++r) adv[r] = qt[r] - mean_qt;
      const auto wc = batch_softmax(adv, cfg_.icq_beta_critic);
      for (int r = 0; r < rows; ++r) {
        const std::size_t i = static_cast<std::size_t>(r);
        const double y = b.reward[i] + cfg_.gamma * (1.0 - b.done[i]) * qtn[i];
        const double e = q[i] - y;
        closs += wc[i] * e * e;
        mean_active_grad(dz, r, spec_, b.act.data(), b.active.data(), 2.0 * wc[i] * e);
        wp[i] = std::min(std::exp(adv[i] / cfg_.icq_beta_policy), cfg_.weight_clip);
      }
    } else {
      const int n = b.agents, T = b.timesteps;
      Mat loc(T, n), loct(T, n), loctn(T, n);
      for (int t = 0; t < T; ++t)
        for (int a = 0; a < n; ++a) {
          const std::size_t i = static_cast<std::size_t>(t * n + a);
          loc(t, a) = static_cast<float>(q[i]);
          loct(t, a) = static_cast<float>(qt[i]);
          loctn(t, a) = static_cast<float>(qtn[i]);
        }
      Mixer::Tape mt;
      const Mat qtot = mix_.forward(joint_rows(b.obs, n), loc, &mt);
      const Mat qtot_t = mix_t_.forward(joint_rows(b.obs, n), loct);
      const Mat qtot_tn = mix_t_.forward(joint_rows(b.next_obs, n), loctn);
      double mean_t = 0;
      for (int t = 0; t < T; ++t) mean_t += qtot_t(t, 0) / T;
      std::vector<double> adv(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) adv[static_cast<std::size_t>(t)] = qtot_t(t, 0) - mean_t;
      const auto wc = batch_softmax(adv, cfg_.icq_beta_critic);
      Mat dq(T, 1);
      for (int t = 0; t < T; ++t) {
        double rew = 0;
        for (int a = 0; a < n; ++a) rew += b.reward[static_cast<std::size_t>(t * n + a)] / n;
        const double y = rew + cfg_.gamma * (1.0 - b.done[static_cast<std::size_t>(t * n)]) * qtot_tn(t, 0);
        const double e = qtot(t, 0) - y;
        closs += wc[static_cast<std::size_t>(t)] * e * e;
        dq(t, 0) = static_cast<float>(2.0 * wc[static_cast<std::size_t>(t)] * e);
        const double w = std::min(std::exp(adv[static_cast<std::size_t>(t)] / cfg_.icq_beta_policy), cfg_.weight_clip);
        for (int a = 0; a < n; ++a) wp[static_cast<std::size_t>(t * n + a)] = w;
      }
      const Mat dloc = mix_.backward(mt, dq);
      for (int t = 0; t < T; ++t)
        for (int a = 0; a < n; ++a) mean_active_grad(dz, t * n + a, spec_, b.act.data(), b.active.data(), dloc(t, a));
    }
    const double ploss = weighted_ce(l, spec_, data_view(b), wp, &dl);
    double wmean = 0;
    for (double w : wp) wmean += w / rows;
    Mat df = pi_.backward(tp, dl);
    df += q_.backward(tq, dz);
    enc_.backward(te, df);
    end_step();
    return {{"critic_loss", closs},
            {"policy_loss", ploss},
            {"mean_weight", wmean},
            {"ood_target_evals", static_cast<double>(ood_reads_)},
            {"total", closs + ploss}};
  }

  Mat action_scores(const Mat& obs) const override { return pi_.forward(enc_.forward(obs)); }
  const Mixer* mixer() const override { return ctde_ ? &mix_ : nullptr; }

 private:
  // Every critic-target read goes through here; reads of anything but the stored action are counted.
  double read_target(const Mat& ztn, const Batch& b, int r, int h, int idx) {
    if (idx != b.next_act[static_cast<std::size_t>(r * spec_.heads() + h)]) ++ood_reads_;
    return ztn(r, spec_.action.offset(h) + idx);
  }

  bool ctde_;
  Mlp enc_, pi_, q_, enc_t_, q_t_;
  Mixer mix_, mix_t_;
  std::int64_t ood_reads_ = 0;
};

// ---------------------------------------------------------------- COMM+CQL

class CommCqlAlgo final : public Algorithm {
 public:
  CommCqlAlgo(const AlgoSpec& s, const AlgoConfig& c)
      : Algorithm(s, c),
        enc_(make_encoder(s, c)),
        q_(make_head(c, 2 * c.hidden, s.total(), kTagQ)),
        enc_t_(enc_),
        q_t_(q_) {
    auto on = collect({&enc_, &q_});
    register_params(on, on, collect({&enc_t_, &q_t_}));
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    const int hid = cfg_.hidden, n = b.agents;
    MlpTape te, tq;
    const Mat e = enc_.forward(b.obs, &te);
    std::vector<int> who;
    const Mat x = with_message(e, n, &who);
    const Mat z = q_.forward(x, &tq);
    const Mat zn = q_t_.forward(with_message(enc_t_.forward(b.next_obs), n, nullptr));
    Mat dz = Mat::Zero(z.rows(), z.cols());
    const auto t = cql_loss(z, zn, b, spec_, cfg_.gamma, cfg_.cql_alpha, dz);
    const Mat dx = q_.backward(tq, dz);
    Mat de = dx.leftCols(hid);
    // the message is a max: its gradient goes to the agent that supplied each component
    const Eigen::Index T = e.rows() / n;
    for (Eigen::Index tt = 0; tt < T; ++tt)
      for (int k = 0; k < hid; ++k) {
        float g = 0;
        for (int a = 0; a < n; ++a) g += dx(tt * n + a, hid + k);
        de(tt * n + who[static_cast<std::size_t>(tt * hid + k)], k) += g;
      }
    enc_.backward(te, de);
    end_step();
    const double term = cfg_.cql_alpha * t.penalty;
    return {{"td_loss", t.td}, {"cql_penalty", t.penalty}, {"cql_term", term}, {"total", t.td + term}};
  }

  Mat action_scores(const Mat& obs) const override {
    return q_.forward(with_message(enc_.forward(obs), spec_.n_agents, nullptr));
  }

  // Elementwise max over the agents of each timestep, concatenated to every agent's features.
  static Mat with_message(const Mat& e, int n, std::vector<int>* who) {
    const Eigen::Index T = e.rows() / n, hid = e.cols();
    if (T * n != e.rows()) throw Error(ErrorKind::Internal, "communication needs whole timesteps");
    Mat x(e.rows(), 2 * hid);
    x.leftCols(hid) = e;
    if (who) who->assign(static_cast<std::size_t>(T * hid), 0);
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index k = 0; k < hid; ++k) {
        int best = 0;
        for (int a = 1; a < n; ++a)
          if (e(t * n + a, k) > e(t * n + best, k)) best = a;
        if (who) (*who)[static_cast<std::size_t>(t * hid + k)] = best;
        const float m = e(t * n + best, k);
        for (int a = 0; a < n; ++a) x(t * n + a, hid + k) = m;
      }
    return x;
  }

 private:
  Mlp enc_, q_, enc_t_, q_t_;
};

// ---------------------------------------------------------------- OMAR (discrete)

class OmarAlgo final : public Algorithm {
 public:
  OmarAlgo(const AlgoSpec& s, const AlgoConfig& c)
      : Algorithm(s, c),
        enc_(make_encoder(s, c)),
        pi_(make_head(c, c.hidden, s.total(), kTagPolicy)),
        q_(make_head(c, c.hidden, s.total(), kTagQ)),
        enc_t_(enc_),
        q_t_(q_) {
    auto on = collect({&enc_, &pi_, &q_});
    register_params(on, collect({&enc_, &q_}), collect({&enc_t_, &q_t_}));
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    const int rows = b.rows(), heads = spec_.heads(), total = spec_.total();
    MlpTape te, tp, tq;
    const Mat f = enc_.forward(b.obs, &te);
    const Mat l = pi_.forward(f, &tp);
    const Mat z = q_.forward(f, &tq);
    const Mat zn = q_t_.forward(enc_t_.forward(b.next_obs));
    Mat dz = Mat::Zero(z.rows(), z.cols()), dl = Mat::Zero(l.rows(), l.cols());
    const auto t = cql_loss(z, zn, b, spec_, cfg_.gamma, cfg_.cql_alpha, dz);

    // advantage of the data action against the current policy, per active head
    std::vector<double> w(static_cast<std::size_t>(rows));
    std::vector<int> star(static_cast<std::size_t>(rows * heads));
    std::vector<std::uint8_t> star_active(star.size());
    for (int r = 0; r < rows; ++r) {
      double adv = 0;
      int cnt = 0;
      for (int h = 0; h < heads; ++h) {
        const std::size_t k = static_cast<std::size_t>(r * heads + h);
        if (!b.active[k]) continue;
        const int off = spec_.action.offset(h), n = spec_.action.head_sizes[static_cast<std::size_t>(h)];
        const auto p = masked_softmax(std::span<const float>(l.row(r).data() + off, static_cast<std::size_t>(n)),
                                      std::span<const std::uint8_t>(&b.legal[static_cast<std::size_t>(r * total + off)], static_cast<std::size_t>(n)));
        double v = 0;
        for (int j = 0; j < n; ++j) v += p[static_cast<std::size_t>(j)] * z(r, off + j);
        adv += z(r, off + b.act[k]) - v;
        ++cnt;
      }
      adv /= std::max(cnt, 1);
      w[static_cast<std::size_t>(r)] = std::min(std::exp(cfg_.omar_beta * adv), cfg_.weight_clip);
      const auto a = zeroth_order_action(std::span<const float>(z.row(r).data(), static_cast<std::size_t>(total)),
                                         std::span<const std::uint8_t>(&b.legal[static_cast<std::size_t>(r * total)], static_cast<std::size_t>(total)),
                                         spec_, cfg_.omar_candidates, rng_);
      const auto& row = spec_.sub_action_table[static_cast<std::size_t>(a[0])];
      for (int h = 0; h < heads; ++h) {
        star[static_cast<std::size_t>(r * heads + h)] = a[static_cast<std::size_t>(h)];
        star_active[static_cast<std::size_t>(r * heads + h)] = row[static_cast<std::size_t>(h)];
      }
    }
    const double coe = cfg_.omar_coe;
    const double aw = weighted_ce(l, spec_, data_view(b), w, &dl, 1.0 - coe);
    const std::vector<double> ones(static_cast<std::size_t>(rows), 1.0);
    const double zo = weighted_ce(l, spec_, HeadView{star.data(), star_active.data(), b.legal.data()}, ones, &dl, coe);
    const double ploss = (1.0 - coe) * aw + coe * zo;
    Mat df = pi_.backward(tp, dl);
    df += q_.backward(tq, dz);
    enc_.backward(te, df);
    end_step();
    const double term = cfg_.cql_alpha * t.penalty;
    return {{"td_loss", t.td}, {"cql_penalty", t.penalty}, {"cql_term", term}, {"aw_ce", aw},
            {"zo_ce", zo},     {"policy_loss", ploss},     {"total", t.td + term + ploss}};
  }

  Mat action_scores(const Mat& obs) const override { return pi_.forward(enc_.forward(obs)); }

 private:
  Mlp enc_, pi_, q_, enc_t_, q_t_;
};

}  // namespace

Mat comm_message_features(const Mat& encodings, int agents) {
  return CommCqlAlgo::with_message(encodings, agents, nullptr);
}

namespace kernels {

std::unique_ptr<Algorithm> make_icq(const AlgoSpec& s, const AlgoConfig& c, bool ctde) {
  return std::make_unique<IcqAlgo>(s, c, ctde);
}
std::unique_ptr<Algorithm> make_comm_cql(const AlgoSpec& s, const AlgoConfig& c) {
  return std::make_unique<CommCqlAlgo>(s, c);
}
std::unique_ptr<Algorithm> make_omar(const AlgoSpec& s, const AlgoConfig& c) { return std::make_unique<OmarAlgo>(s, c); }

}  // namespace kernels

}  // namespace mmoba
