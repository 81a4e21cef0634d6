#include <cmath>
#include <cstdio>

#include "algo_kernels.hpp"
#include "mmoba/algos.hpp"
#include "mmoba/error.hpp"

namespace mmoba {

using namespace kernels;

namespace {

struct AlgoName {
  AlgoId id;
  const char* name;
};
constexpr AlgoName kAlgoNames[] = {
    {AlgoId::BC, "bc"},           {AlgoId::CQL, "cql"},         {AlgoId::QmixCql, "qmix_cql"},
    {AlgoId::IQL, "iql"},         {AlgoId::TD3BC, "td3bc"},     {AlgoId::IndBC, "ind_bc"},
    {AlgoId::IndCQL, "ind_cql"},  {AlgoId::CommCQL, "comm_cql"}, {AlgoId::IndICQ, "ind_icq"},
    {AlgoId::MAICQ, "maicq"},     {AlgoId::OMAR, "omar"},       {AlgoId::IndQmixCql, "ind_qmix_cql"},
};

}  // namespace

const char* algo_name(AlgoId id) {
  for (const auto& a : kAlgoNames)
    if (a.id == id) return a.name;
  return "unknown";
}

AlgoId parse_algo(const std::string& name) {
  for (const auto& a : kAlgoNames)
    if (name == a.name) return a.id;
  throw ConfigError("algo", "unknown algorithm '" + name + "'");
}

std::vector<AlgoId> all_algos() {
  std::vector<AlgoId> out;
  for (const auto& a : kAlgoNames) out.push_back(a.id);
  return out;
}

bool needs_joint_batch(AlgoId id) { return id == AlgoId::CommCQL || id == AlgoId::MAICQ; }

AlgoConfig AlgoConfig::defaults(AlgoId algo, Mode mode) {
  AlgoConfig c;
  c.algo = algo;
  if (is_trio_layout(mode)) {
    c.lr = 1e-4f;
    c.soft_target = false;
  }
  return c;
}

void AlgoConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(gamma > 0 && gamma <= 1)) throw ConfigError("gamma", "must lie in (0, 1]");
  if (max_steps < 0) throw ConfigError("max_steps", "must be >= 0");
  if (cql_alpha < 0) throw ConfigError("cql_alpha", "must be >= 0");
  if (td3bc_alpha < 0) throw ConfigError("td3bc_alpha", "must be >= 0");
  if (!(iql_tau > 0 && iql_tau < 1)) throw ConfigError("iql_tau", "must lie in (0, 1)");
  if (!(icq_beta_critic > 0)) throw ConfigError("icq_beta_critic", "must be positive");
  if (!(icq_beta_policy > 0)) throw ConfigError("icq_beta_policy", "must be positive");
  if (omar_coe < 0 || omar_coe > 1) throw ConfigError("omar_coe", "must lie in [0, 1]");
  if (omar_candidates < 1) throw ConfigError("omar_candidates", "must be >= 1");
  if (!(weight_clip > 0)) throw ConfigError("weight_clip", "must be positive");
  if (!(gumbel_temperature > 0)) throw ConfigError("gumbel_temperature", "must be positive");
  if (!(lr > 0)) throw ConfigError("lr", "must be positive");
  if (hidden < 1) throw ConfigError("hidden", "must be >= 1");
  if (mixer_embed < 1) throw ConfigError("mixer_embed", "must be >= 1");
  if (tau < 0 || tau > 1) throw ConfigError("tau", "must lie in [0, 1]");
  if (hard_period < 1) throw ConfigError("hard_period", "must be >= 1");
}

nlohmann::json AlgoConfig::to_json() const {
  return {{"algo", algo_name(algo)},
          {"batch_size", batch_size},
          {"gamma", gamma},
          {"max_steps", max_steps},
          {"cql_alpha", cql_alpha},
          {"td3bc_alpha", td3bc_alpha},
          {"iql_tau", iql_tau},
          {"iql_beta", iql_beta},
          {"icq_beta_critic", icq_beta_critic},
          {"icq_beta_policy", icq_beta_policy},
          {"omar_coe", omar_coe},
          {"omar_beta", omar_beta},
          {"omar_candidates", omar_candidates},
          {"weight_clip", weight_clip},
          {"gumbel_temperature", gumbel_temperature},
          {"td3bc_bc_mse", td3bc_bc_mse},
          {"lr", lr},
          {"hidden", hidden},
          {"mixer_embed", mixer_embed},
          {"soft_target", soft_target},
          {"tau", tau},
          {"hard_period", hard_period},
          {"seed", seed}};
}

AlgoConfig AlgoConfig::from_json(const nlohmann::json& j, AlgoConfig c) {
  try {
    if (j.contains("algo")) c.algo = parse_algo(j.at("algo").get<std::string>());
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("batch_size", c.batch_size);
    take("gamma", c.gamma);
    take("max_steps", c.max_steps);
    take("cql_alpha", c.cql_alpha);
    take("td3bc_alpha", c.td3bc_alpha);
    take("iql_tau", c.iql_tau);
    take("iql_beta", c.iql_beta);
    take("icq_beta_critic", c.icq_beta_critic);
    take("icq_beta_policy", c.icq_beta_policy);
    take("omar_coe", c.omar_coe);
    take("omar_beta", c.omar_beta);
    take("omar_candidates", c.omar_candidates);
    take("weight_clip", c.weight_clip);
    take("gumbel_temperature", c.gumbel_temperature);
    take("td3bc_bc_mse", c.td3bc_bc_mse);
    take("lr", c.lr);
    take("hidden", c.hidden);
    take("mixer_embed", c.mixer_embed);
    take("soft_target", c.soft_target);
    take("tau", c.tau);
    take("hard_period", c.hard_period);
    take("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("algo_config", e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- kernels

namespace kernels {

Mlp make_encoder(const AlgoSpec& s, const AlgoConfig& c, int in_width) {
  return Mlp({in_width > 0 ? in_width : s.obs_dim, c.hidden, c.hidden}, mix_seed(c.seed, kTagEncoder), true);
}

Mlp make_head(const AlgoConfig& c, int in, int out, std::uint64_t tag) {
  return Mlp({in, out}, mix_seed(c.seed, tag), false, 3e-3f);
}

std::vector<ParamRef> collect(std::initializer_list<Mlp*> nets) {
  std::vector<ParamRef> out;
  for (Mlp* n : nets) n->params(out);
  return out;
}

double weighted_ce(const Mat& L, const AlgoSpec& s, HeadView v, std::span<const double> w, Mat* dL, double grad_scale) {
  const int rows = static_cast<int>(L.rows()), heads = s.heads(), total = s.total();
  double sum = 0;
  for (int r = 0; r < rows; ++r) {
    const double wr = w[static_cast<std::size_t>(r)];
    for (int h = 0; h < heads; ++h) {
      if (!v.active[r * heads + h]) continue;
      const int off = s.action.offset(h), n = s.action.head_sizes[static_cast<std::size_t>(h)];
      const int a = v.act[r * heads + h];
      std::span<const float> z(L.row(r).data() + off, static_cast<std::size_t>(n));
      std::span<const std::uint8_t> m(v.legal + static_cast<std::ptrdiff_t>(r) * total + off, static_cast<std::size_t>(n));
      const auto p = masked_softmax(z, m);
      sum += wr * -std::log(std::max(p[static_cast<std::size_t>(a)], 1e-30));
      if (dL) {
        const double g = grad_scale * wr / rows;
        for (int j = 0; j < n; ++j) {
          if (!m[static_cast<std::size_t>(j)]) continue;
          (*dL)(r, off + j) += static_cast<float>(g * (p[static_cast<std::size_t>(j)] - (j == a ? 1.0 : 0.0)));
        }
      }
    }
  }
  return sum / rows;
}

namespace {
int count_active(int r, const AlgoSpec& s, const std::uint8_t* active) {
  int c = 0;
  for (int h = 0; h < s.heads(); ++h) c += active[r * s.heads() + h] ? 1 : 0;
  return std::max(c, 1);
}
}  // namespace

double mean_active(const Mat& Z, int r, const AlgoSpec& s, const int* act, const std::uint8_t* active) {
  double q = 0;
  for (int h = 0; h < s.heads(); ++h)
    if (active[r * s.heads() + h]) q += Z(r, s.action.offset(h) + act[r * s.heads() + h]);
  return q / count_active(r, s, active);
}

void mean_active_grad(Mat& dZ, int r, const AlgoSpec& s, const int* act, const std::uint8_t* active, double g) {
  const double gc = g / count_active(r, s, active);
  for (int h = 0; h < s.heads(); ++h)
    if (active[r * s.heads() + h]) dZ(r, s.action.offset(h) + act[r * s.heads() + h]) += static_cast<float>(gc);
}

double masked_max(const float* z, const std::uint8_t* legal, int n) {
  bool any = false;
  double m = 0;
  for (int j = 0; j < n; ++j) {
    if (!legal[j]) continue;
    if (!any || z[j] > m) m = z[j];
    any = true;
  }
  return any ? m : 0.0;
}

namespace {

// logsumexp over legal entries and the softmax over them.
double legal_lse(const float* z, const std::uint8_t* legal, int n, std::vector<double>& p) {
  p.assign(static_cast<std::size_t>(n), 0.0);
  double mx = -1e300;
  for (int j = 0; j < n; ++j)
    if (legal[j]) mx = std::max(mx, static_cast<double>(z[j]));
  double sum = 0;
  for (int j = 0; j < n; ++j)
    if (legal[j]) sum += p[static_cast<std::size_t>(j)] = std::exp(z[j] - mx);
  for (double& x : p) x /= sum;
  return mx + std::log(sum);
}

}  // namespace

CqlTerms cql_loss(const Mat& Z, const Mat& Zt_next, const Batch& b, const AlgoSpec& s, double gamma, double alpha,
                  Mat& dZ) {
  const int rows = b.rows(), heads = s.heads(), total = s.total();
  CqlTerms t;
  std::vector<double> p;
  for (int r = 0; r < rows; ++r) {
    const double cnt = count_active(r, s, b.active.data());
    const double notdone = 1.0 - b.done[static_cast<std::size_t>(r)];
    for (int h = 0; h < heads; ++h) {
      if (!b.active[static_cast<std::size_t>(r * heads + h)]) continue;
      const int off = s.action.offset(h), n = s.action.head_sizes[static_cast<std::size_t>(h)];
      const int a = b.act[static_cast<std::size_t>(r * heads + h)];
      const double qa = Z(r, off + a);
      double y = b.reward[static_cast<std::size_t>(r)];
      if (notdone > 0) {
        y += gamma * notdone * masked_max(Zt_next.row(r).data() + off, &b.next_legal[static_cast<std::size_t>(r * total + off)], n);
      }
      const double td = qa - y;
      t.td += td * td / cnt;
      dZ(r, off + a) += static_cast<float>(2.0 * td / cnt / rows);
      const double lse = legal_lse(Z.row(r).data() + off, &b.legal[static_cast<std::size_t>(r * total + off)], n, p);
      t.penalty += (lse - qa) / cnt;
      if (alpha != 0) {
        for (int j = 0; j < n; ++j) dZ(r, off + j) += static_cast<float>(alpha * p[static_cast<std::size_t>(j)] / cnt / rows);
        dZ(r, off + a) -= static_cast<float>(alpha / cnt / rows);
      }
    }
  }
  t.td /= rows;
  t.penalty /= rows;
  return t;
}

double cql_penalty_sum(const Mat& Z, const Batch& b, const AlgoSpec& s, double alpha, Mat& dZ) {
  const int rows = b.rows(), heads = s.heads(), total = s.total();
  double pen = 0;
  std::vector<double> p;
  for (int r = 0; r < rows; ++r) {
    for (int h = 0; h < heads; ++h) {
      if (!b.active[static_cast<std::size_t>(r * heads + h)]) continue;
      const int off = s.action.offset(h), n = s.action.head_sizes[static_cast<std::size_t>(h)];
      const int a = b.act[static_cast<std::size_t>(r * heads + h)];
      const double lse = legal_lse(Z.row(r).data() + off, &b.legal[static_cast<std::size_t>(r * total + off)], n, p);
      pen += lse - Z(r, off + a);
      if (alpha != 0) {
        for (int j = 0; j < n; ++j) dZ(r, off + j) += static_cast<float>(alpha * p[static_cast<std::size_t>(j)] / rows);
        dZ(r, off + a) -= static_cast<float>(alpha / rows);
      }
    }
  }
  return pen / rows;
}

}  // namespace kernels

// ---------------------------------------------------------------- mixer

Mixer::Mixer(int state_dim, int n_locals, int embed, std::uint64_t seed)
    : n_(n_locals),
      e_(embed),
      w1_({state_dim, n_locals * embed}, mix_seed(seed, 1), false, -1),
      b1_({state_dim, embed}, mix_seed(seed, 2), false, -1),
      w2_({state_dim, embed}, mix_seed(seed, 3), false, -1),
      v_({state_dim, embed, 1}, mix_seed(seed, 4), false, -1) {}

Mat Mixer::forward(const Mat& state, const Mat& locals, Tape* tape) const {
  const Eigen::Index rows = state.rows();
  Mat w1 = w1_.forward(state), b1 = b1_.forward(state), w2 = w2_.forward(state);
  MlpTape vt;
  Mat v = v_.forward(state, tape ? &vt : nullptr);
  Mat z(rows, e_), hid(rows, e_), q(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double out = v(r, 0);
    for (int e = 0; e < e_; ++e) {
      double acc = b1(r, e);
      for (int h = 0; h < n_; ++h) acc += static_cast<double>(locals(r, h)) * std::abs(w1(r, h * e_ + e));
      z(r, e) = static_cast<float>(acc);
      const double hv = acc > 0 ? acc : std::expm1(acc);
      hid(r, e) = static_cast<float>(hv);
      out += hv * std::abs(w2(r, e));
    }
    q(r, 0) = static_cast<float>(out);
  }
  if (tape) {
    tape->state = state;
    tape->locals = locals;
    tape->w1raw = std::move(w1);
    tape->b1 = std::move(b1);
    tape->z = std::move(z);
    tape->hid = hid;
    tape->w2raw = std::move(w2);
    tape->vt = std::move(vt);
  }
  return q;
}

Mat Mixer::backward(const Tape& t, const Mat& dq) {
  const Eigen::Index rows = t.state.rows();
  Mat dw1 = Mat::Zero(rows, n_ * e_), db1(rows, e_), dw2(rows, e_), dloc = Mat::Zero(rows, n_);
  auto sgn = [](float x) { return x > 0 ? 1.0f : (x < 0 ? -1.0f : 0.0f); };
  for (Eigen::Index r = 0; r < rows; ++r) {
    const float g = dq(r, 0);
    for (int e = 0; e < e_; ++e) {
      dw2(r, e) = g * t.hid(r, e) * sgn(t.w2raw(r, e));
      const float dh = g * std::abs(t.w2raw(r, e));
      const float dz = t.z(r, e) > 0 ? dh : dh * std::exp(t.z(r, e));
      db1(r, e) = dz;
      for (int h = 0; h < n_; ++h) {
        dw1(r, h * e_ + e) = dz * t.locals(r, h) * sgn(t.w1raw(r, h * e_ + e));
        dloc(r, h) += dz * std::abs(t.w1raw(r, h * e_ + e));
      }
    }
  }
  MlpTape lin;
  lin.inputs = {t.state};
  lin.pre = {Mat()};
  w1_.backward(lin, dw1);
  b1_.backward(lin, db1);
  w2_.backward(lin, dw2);
  v_.backward(t.vt, dq);
  return dloc;
}

void Mixer::params(std::vector<ParamRef>& out) {
  w1_.params(out);
  b1_.params(out);
  w2_.params(out);
  v_.params(out);
}

// ---------------------------------------------------------------- base

Algorithm::Algorithm(AlgoSpec spec, AlgoConfig cfg)
    : spec_(std::move(spec)),
      cfg_(cfg),
      opt_(AdamConfig{cfg.lr}),
      sched_{cfg.soft_target, cfg.tau, cfg.hard_period},
      rng_(mix_seed(cfg.seed, 0x7261)) {
  cfg_.validate();
}

void Algorithm::register_params(std::vector<ParamRef> online, std::vector<ParamRef> target_online,
                                std::vector<ParamRef> target) {
  online_ = std::move(online);
  target_online_ = std::move(target_online);
  target_ = std::move(target);
  hard_update(target_, target_online_);
  saved_ = online_;
  saved_.insert(saved_.end(), target_.begin(), target_.end());
}

void Algorithm::begin_step() { zero_grad(online_); }

void Algorithm::end_step() {
  opt_.step(online_);
  ++step_;
  if (!target_.empty()) sched_.apply(step_, target_, target_online_);
}

std::vector<StructuredAction> Algorithm::act(const Mat& obs, std::span<const ActionMasks> masks, bool greedy,
                                             CounterRng& rng) const {
  const Mat z = action_scores(obs);
  std::vector<StructuredAction> out(static_cast<std::size_t>(obs.rows()));
  for (Eigen::Index r = 0; r < obs.rows(); ++r) {
    auto& a = out[static_cast<std::size_t>(r)];
    for (int h = 0; h < spec_.heads(); ++h) {
      const int off = spec_.action.offset(h), n = spec_.action.head_sizes[static_cast<std::size_t>(h)];
      std::span<const float> zs(z.row(r).data() + off, static_cast<std::size_t>(n));
      const auto& m = masks[static_cast<std::size_t>(r)].legal[static_cast<std::size_t>(h)];
      a.head_indices.push_back(greedy ? masked_argmax(zs, m) : masked_sample(zs, m, rng));
    }
  }
  return out;
}

// ---------------------------------------------------------------- BC

namespace {

class BcAlgo final : public Algorithm {
 public:
  BcAlgo(const AlgoSpec& s, const AlgoConfig& c)
      : Algorithm(s, c), enc_(make_encoder(s, c)), pi_(make_head(c, c.hidden, s.total(), kTagPolicy)) {
    register_params(collect({&enc_, &pi_}), {}, {});
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    MlpTape te, tp;
    const Mat f = enc_.forward(b.obs, &te);
    const Mat l = pi_.forward(f, &tp);
    Mat dl = Mat::Zero(l.rows(), l.cols());
    const std::vector<double> w(static_cast<std::size_t>(b.rows()), 1.0);
    const double ce = weighted_ce(l, spec_, data_view(b), w, &dl);
    enc_.backward(te, pi_.backward(tp, dl));
    end_step();
    return {{"bc_loss", ce}, {"total", ce}};
  }

  Mat action_scores(const Mat& obs) const override { return pi_.forward(enc_.forward(obs)); }

 private:
  Mlp enc_, pi_;
};

// ---------------------------------------------------------------- CQL (factored per head)

class CqlAlgo final : public Algorithm {
 public:
  CqlAlgo(const AlgoSpec& s, const AlgoConfig& c)
      : Algorithm(s, c),
        enc_(make_encoder(s, c)),
        q_(make_head(c, c.hidden, s.total(), kTagQ)),
        enc_t_(enc_),
        q_t_(q_) {
    auto on = collect({&enc_, &q_});
    register_params(on, on, collect({&enc_t_, &q_t_}));
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    MlpTape te, tq;
    const Mat f = enc_.forward(b.obs, &te);
    const Mat z = q_.forward(f, &tq);
    const Mat zn = q_t_.forward(enc_t_.forward(b.next_obs));
    Mat dz = Mat::Zero(z.rows(), z.cols());
    const auto t = cql_loss(z, zn, b, spec_, cfg_.gamma, cfg_.cql_alpha, dz);
    enc_.backward(te, q_.backward(tq, dz));
    end_step();
    const double term = cfg_.cql_alpha * t.penalty;
    return {{"td_loss", t.td}, {"cql_penalty", t.penalty}, {"cql_term", term}, {"total", t.td + term}};
  }

  Mat action_scores(const Mat& obs) const override { return q_.forward(enc_.forward(obs)); }

 private:
  Mlp enc_, q_, enc_t_, q_t_;
};

// ---------------------------------------------------------------- QMIX+CQL (heads as agents)

class QmixCqlAlgo final : public Algorithm {
 public:
  QmixCqlAlgo(const AlgoSpec& s, const AlgoConfig& c)
      : Algorithm(s, c),
        enc_(make_encoder(s, c)),
        q_(make_head(c, c.hidden, s.total(), kTagQ)),
        mix_(s.obs_dim, s.heads(), c.mixer_embed, mix_seed(c.seed, kTagMixer)),
        enc_t_(enc_),
        q_t_(q_),
        mix_t_(mix_) {
    auto on = collect({&enc_, &q_});
    mix_.params(on);
    auto tg = collect({&enc_t_, &q_t_});
    mix_t_.params(tg);
    register_params(on, on, tg);
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    const int rows = b.rows(), heads = spec_.heads(), total = spec_.total();
    MlpTape te, tq;
    const Mat f = enc_.forward(b.obs, &te);
    const Mat z = q_.forward(f, &tq);
    Mat locals = Mat::Zero(rows, heads);
    for (int r = 0; r < rows; ++r)
      for (int h = 0; h < heads; ++h)
        if (b.active[static_cast<std::size_t>(r * heads + h)])
          locals(r, h) = z(r, spec_.action.offset(h) + b.act[static_cast<std::size_t>(r * heads + h)]);
    Mixer::Tape mt;
    const Mat qtot = mix_.forward(b.obs, locals, &mt);

    // target: greedy button of the target net decides which heads feed the target mixer
    const Mat zn = q_t_.forward(enc_t_.forward(b.next_obs));
    Mat ln = Mat::Zero(rows, heads);
    for (int r = 0; r < rows; ++r) {
      const std::uint8_t* nl = &b.next_legal[static_cast<std::size_t>(r * total)];
      bool any = false;
      for (int j = 0; j < spec_.action.head_sizes[0]; ++j) any = any || nl[j];
      if (!any) continue;
      const int btn = masked_argmax(std::span<const float>(zn.row(r).data(), static_cast<std::size_t>(spec_.action.head_sizes[0])),
                                    std::span<const std::uint8_t>(nl, static_cast<std::size_t>(spec_.action.head_sizes[0])));
      const auto& row = spec_.sub_action_table[static_cast<std::size_t>(btn)];
      for (int h = 0; h < heads; ++h) {
        if (!row[static_cast<std::size_t>(h)]) continue;
        const int off = spec_.action.offset(h);
        ln(r, h) = static_cast<float>(masked_max(zn.row(r).data() + off, nl + off, spec_.action.head_sizes[static_cast<std::size_t>(h)]));
      }
    }
    const Mat qn = mix_t_.forward(b.next_obs, ln);

    double td = 0;
    Mat dq(rows, 1);
    for (int r = 0; r < rows; ++r) {
      const double y = b.reward[static_cast<std::size_t>(r)] +
                       cfg_.gamma * (1.0 - b.done[static_cast<std::size_t>(r)]) * qn(r, 0);
      const double d = qtot(r, 0) - y;
      td += d * d;
      dq(r, 0) = static_cast<float>(2.0 * d / rows);
    }
    td /= rows;
    const Mat dloc = mix_.backward(mt, dq);
    Mat dz = Mat::Zero(z.rows(), z.cols());
    for (int r = 0; r < rows; ++r)
      for (int h = 0; h < heads; ++h)
        if (b.active[static_cast<std::size_t>(r * heads + h)])
          dz(r, spec_.action.offset(h) + b.act[static_cast<std::size_t>(r * heads + h)]) += dloc(r, h);
    const double pen = cql_penalty_sum(z, b, spec_, cfg_.cql_alpha, dz);
    enc_.backward(te, q_.backward(tq, dz));
    end_step();
    const double term = cfg_.cql_alpha * pen;
    return {{"td_loss", td}, {"cql_penalty", pen}, {"cql_term", term}, {"total", td + term}};
  }

  Mat action_scores(const Mat& obs) const override { return q_.forward(enc_.forward(obs)); }
  const Mixer* mixer() const override { return &mix_; }

 private:
  Mlp enc_, q_;
  Mixer mix_;
  Mlp enc_t_, q_t_;
  Mixer mix_t_;
};

// ---------------------------------------------------------------- IQL

class IqlAlgo final : public Algorithm {
 public:
  IqlAlgo(const AlgoSpec& s, const AlgoConfig& c)
      : Algorithm(s, c),
        enc_(make_encoder(s, c)),
        pi_(make_head(c, c.hidden, s.total(), kTagPolicy)),
        q_(make_head(c, c.hidden, s.total(), kTagQ)),
        v_(make_head(c, c.hidden, 1, kTagV)),
        enc_t_(enc_),
        q_t_(q_) {
    auto on = collect({&enc_, &pi_, &q_, &v_});
    register_params(on, collect({&enc_, &q_}), collect({&enc_t_, &q_t_}));
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    const int rows = b.rows();
    MlpTape te, tp, tq, tv;
    const Mat f = enc_.forward(b.obs, &te);
    const Mat l = pi_.forward(f, &tp);
    const Mat z = q_.forward(f, &tq);
    const Mat v = v_.forward(f, &tv);
    const Mat vn = v_.forward(enc_.forward(b.next_obs));
    const Mat zt = q_t_.forward(enc_t_.forward(b.obs));

    Mat dz = Mat::Zero(z.rows(), z.cols()), dv(rows, 1), dl = Mat::Zero(l.rows(), l.cols());
    std::vector<double> u(static_cast<std::size_t>(rows)), w(static_cast<std::size_t>(rows));
    double qloss = 0;
    for (int r = 0; r < rows; ++r) {
      const double qt = mean_active(zt, r, spec_, b.act.data(), b.active.data());
      const double q = mean_active(z, r, spec_, b.act.data(), b.active.data());
      const double y = b.reward[static_cast<std::size_t>(r)] +
                       cfg_.gamma * (1.0 - b.done[static_cast<std::size_t>(r)]) * vn(r, 0);
      qloss += (q - y) * (q - y);
      mean_active_grad(dz, r, spec_, b.act.data(), b.active.data(), 2.0 * (q - y) / rows);
      const double adv = qt - v(r, 0);
      u[static_cast<std::size_t>(r)] = adv;
      w[static_cast<std::size_t>(r)] = std::min(std::exp(cfg_.iql_beta * adv), cfg_.weight_clip);
    }
    qloss /= rows;
    const double vloss = expectile_loss(u, cfg_.iql_tau);
    const auto gu = expectile_grad(u, cfg_.iql_tau);
    for (int r = 0; r < rows; ++r) dv(r, 0) = static_cast<float>(-gu[static_cast<std::size_t>(r)]);
    const double ploss = weighted_ce(l, spec_, data_view(b), w, &dl);
    double wmean = 0;
    for (double x : w) wmean += x / rows;

    Mat df = pi_.backward(tp, dl);
    df += q_.backward(tq, dz);
    df += v_.backward(tv, dv);
    enc_.backward(te, df);
    end_step();
    return {{"q_loss", qloss}, {"v_loss", vloss}, {"policy_loss", ploss}, {"mean_weight", wmean},
            {"total", qloss + vloss + ploss}};
  }

  Mat action_scores(const Mat& obs) const override { return pi_.forward(enc_.forward(obs)); }

 private:
  Mlp enc_, pi_, q_, v_, enc_t_, q_t_;
};

// ---------------------------------------------------------------- TD3+BC

class Td3BcAlgo final : public Algorithm {
 public:
  Td3BcAlgo(const AlgoSpec& s, const AlgoConfig& c)
      : Algorithm(s, c),
        enc_(make_encoder(s, c)),
        pi_(make_head(c, c.hidden, s.total(), kTagPolicy)),
        c1_({c.hidden + s.total(), c.hidden, 1}, mix_seed(c.seed, kTagCritic1)),
        c2_({c.hidden + s.total(), c.hidden, 1}, mix_seed(c.seed, kTagCritic2)),
        enc_t_(enc_),
        pi_t_(pi_),
        c1_t_(c1_),
        c2_t_(c2_) {
    critic_ = collect({&c1_, &c2_});
    auto on = collect({&enc_, &pi_, &c1_, &c2_});
    register_params(on, on, collect({&enc_t_, &pi_t_, &c1_t_, &c2_t_}));
  }

  LossMap train_step(const Batch& b) override {
    begin_step();
    const int rows = b.rows(), heads = spec_.heads(), total = spec_.total(), hid = cfg_.hidden;
    const float temp = cfg_.gumbel_temperature;
    MlpTape te, tp;
    const Mat f = enc_.forward(b.obs, &te);
    const Mat l = pi_.forward(f, &tp);

    // ---- actor: relaxed policy actions through critic 1 (state input detached)
    std::vector<std::vector<GumbelSample>> samples;
    const Mat y = relaxed_actions(l, b.legal, samples, rng_);
    Mat xp(rows, hid + total);
    xp << f, y;
    MlpTape tpq;
    const Mat qp = c1_.forward(xp, &tpq);
    double absmean = 0, qmean = 0;
    for (int r = 0; r < rows; ++r) {
      absmean += std::abs(qp(r, 0)) / rows;
      qmean += qp(r, 0) / rows;
    }
    const double lambda = cfg_.td3bc_alpha / std::max(absmean, 1e-6);
    Mat dl = Mat::Zero(l.rows(), l.cols());
    if (lambda != 0) {
      const Mat dxp = c1_.backward(tpq, Mat::Constant(rows, 1, static_cast<float>(-lambda / rows)));
      const Mat dy = dxp.rightCols(total);
      add_relaxed_grad(dy, samples, dl);
    }
    double bc = 0;
    if (cfg_.td3bc_bc_mse) {
      Mat dy = Mat::Zero(rows, total);
      for (int r = 0; r < rows; ++r)
        for (int h = 0; h < heads; ++h) {
          if (!b.active[static_cast<std::size_t>(r * heads + h)]) continue;
          const int off = spec_.action.offset(h), a = b.act[static_cast<std::size_t>(r * heads + h)];
          for (int j = 0; j < spec_.action.head_sizes[static_cast<std::size_t>(h)]; ++j) {
            const double d = y(r, off + j) - (j == a ? 1.0 : 0.0);
            bc += d * d / rows;
            dy(r, off + j) = static_cast<float>(2.0 * d / rows);
          }
        }
      add_relaxed_grad(dy, samples, dl);
    } else {
      const std::vector<double> w(static_cast<std::size_t>(rows), 1.0);
      bc = weighted_ce(l, spec_, data_view(b), w, &dl);
    }
    // actor gradients must not move the critic
    zero_grad(critic_);

    // ---- critics
    Mat xa = Mat::Zero(rows, hid + total);
    xa.leftCols(hid) = f;
    for (int r = 0; r < rows; ++r)
      for (int h = 0; h < heads; ++h)
        if (b.active[static_cast<std::size_t>(r * heads + h)])
          xa(r, hid + spec_.action.offset(h) + b.act[static_cast<std::size_t>(r * heads + h)]) = 1.0f;
    MlpTape t1, t2;
    const Mat q1 = c1_.forward(xa, &t1), q2 = c2_.forward(xa, &t2);

    const Mat fn = enc_t_.forward(b.next_obs);
    const Mat ln = pi_t_.forward(fn);
    std::vector<std::vector<GumbelSample>> nsamples;
    const Mat yn = relaxed_actions(ln, b.next_legal, nsamples, rng_);
    Mat xn(rows, hid + total);
    xn << fn, yn;
    const Mat qn1 = c1_t_.forward(xn), qn2 = c2_t_.forward(xn);
    double closs = 0;
    Mat d1(rows, 1), d2(rows, 1);
    for (int r = 0; r < rows; ++r) {
      const double tgt = b.reward[static_cast<std::size_t>(r)] + cfg_.gamma * (1.0 - b.done[static_cast<std::size_t>(r)]) *
                                                                      std::min(qn1(r, 0), qn2(r, 0));
      const double e1 = q1(r, 0) - tgt, e2 = q2(r, 0) - tgt;
      closs += (e1 * e1 + e2 * e2) / rows;
      d1(r, 0) = static_cast<float>(2.0 * e1 / rows);
      d2(r, 0) = static_cast<float>(2.0 * e2 / rows);
    }
    Mat df = c1_.backward(t1, d1).leftCols(hid);
    df += c2_.backward(t2, d2).leftCols(hid);
    df += pi_.backward(tp, dl);
    enc_.backward(te, df);
    end_step();
    const double actor_q = -lambda * qmean;
    return {{"critic_loss", closs}, {"actor_q", actor_q}, {"bc_loss", bc}, {"lambda", lambda},
            {"total", closs + actor_q + bc}};
  }

  Mat action_scores(const Mat& obs) const override { return pi_.forward(enc_.forward(obs)); }

 private:
  // Per-head Gumbel-Softmax samples; heads the sampled button does not execute are zeroed.
  Mat relaxed_actions(const Mat& l, const std::vector<std::uint8_t>& legal,
                      std::vector<std::vector<GumbelSample>>& samples, CounterRng& rng) const {
    const int rows = static_cast<int>(l.rows()), heads = spec_.heads(), total = spec_.total();
    Mat y = Mat::Zero(rows, total);
    samples.assign(static_cast<std::size_t>(rows), {});
    for (int r = 0; r < rows; ++r) {
      auto& sr = samples[static_cast<std::size_t>(r)];
      for (int h = 0; h < heads; ++h) {
        const int off = spec_.action.offset(h), n = spec_.action.head_sizes[static_cast<std::size_t>(h)];
        sr.push_back(gumbel_softmax(std::span<const float>(l.row(r).data() + off, static_cast<std::size_t>(n)),
                                    std::span<const std::uint8_t>(&legal[static_cast<std::size_t>(r * total + off)], static_cast<std::size_t>(n)),
                                    cfg_.gumbel_temperature, rng));
      }
      const auto& row = spec_.sub_action_table[static_cast<std::size_t>(sr[0].hard)];
      for (int h = 0; h < heads; ++h) {
        if (!row[static_cast<std::size_t>(h)]) continue;
        const int off = spec_.action.offset(h);
        for (std::size_t j = 0; j < sr[static_cast<std::size_t>(h)].y.size(); ++j)
          y(r, off + static_cast<int>(j)) = sr[static_cast<std::size_t>(h)].y[j];
      }
    }
    return y;
  }

  void add_relaxed_grad(const Mat& dy, const std::vector<std::vector<GumbelSample>>& samples, Mat& dl) const {
    for (int r = 0; r < static_cast<int>(dy.rows()); ++r) {
      const auto& sr = samples[static_cast<std::size_t>(r)];
      const auto& row = spec_.sub_action_table[static_cast<std::size_t>(sr[0].hard)];
      for (int h = 0; h < spec_.heads(); ++h) {
        if (!row[static_cast<std::size_t>(h)]) continue;
        const int off = spec_.action.offset(h), n = spec_.action.head_sizes[static_cast<std::size_t>(h)];
        const auto g = gumbel_softmax_backward(sr[static_cast<std::size_t>(h)],
                                               std::span<const float>(dy.row(r).data() + off, static_cast<std::size_t>(n)),
                                               cfg_.gumbel_temperature);
        for (int j = 0; j < n; ++j) dl(r, off + j) += g[static_cast<std::size_t>(j)];
      }
    }
  }

  Mlp enc_, pi_, c1_, c2_, enc_t_, pi_t_, c1_t_, c2_t_;
  std::vector<ParamRef> critic_;
};

}  // namespace

// ---------------------------------------------------------------- factory, persistence, loop

std::unique_ptr<Algorithm> make_algorithm(const AlgoSpec& spec, const AlgoConfig& cfg) {
  cfg.validate();
  switch (cfg.algo) {
    case AlgoId::BC:
    case AlgoId::IndBC: return std::make_unique<BcAlgo>(spec, cfg);
    case AlgoId::CQL:
    case AlgoId::IndCQL: return std::make_unique<CqlAlgo>(spec, cfg);
    case AlgoId::QmixCql:
    case AlgoId::IndQmixCql: return std::make_unique<QmixCqlAlgo>(spec, cfg);
    case AlgoId::IQL: return std::make_unique<IqlAlgo>(spec, cfg);
    case AlgoId::TD3BC: return std::make_unique<Td3BcAlgo>(spec, cfg);
    case AlgoId::IndICQ: return make_icq(spec, cfg, false);
    case AlgoId::MAICQ: return make_icq(spec, cfg, true);
    case AlgoId::CommCQL: return make_comm_cql(spec, cfg);
    case AlgoId::OMAR: return make_omar(spec, cfg);
  }
  throw Error(ErrorKind::Internal, "unhandled algorithm id");
}

void save_algorithm(const std::string& path, const Algorithm& algo) {
  nlohmann::json arch = {{"spec", algo.spec().to_json()}, {"config", algo.config().to_json()}, {"steps", algo.steps()}};
  save_checkpoint(path, arch, algo.all_params());
}

std::unique_ptr<Algorithm> load_algorithm(const std::string& path) {
  const CheckpointData d = load_checkpoint(path);
  AlgoSpec spec;
  AlgoConfig cfg;
  try {
    spec = AlgoSpec::from_json(d.arch.at("spec"));
    cfg = AlgoConfig::from_json(d.arch.at("config"), AlgoConfig{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Checkpoint, path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw Error(ErrorKind::Checkpoint, path + ": " + e.what());
  }
  auto algo = make_algorithm(spec, cfg);
  restore_params(d, algo->all_params());
  return algo;
}

LossMap train(Algorithm& algo, const TransitionStore& data, const TrainLog& log) {
  const auto& a = algo.spec();
  const auto& d = data.spec();
  if (a.obs_dim != d.obs_dim || !(a.action == d.action) || a.n_agents != d.n_agents) {
    throw Error(ErrorKind::Schema, "dataset shapes do not match the algorithm");
  }
  const AlgoConfig& cfg = algo.config();
  CounterRng rng(mix_seed(cfg.seed, 0x62617463));
  LossMap last, acc;
  int n_acc = 0;
  const int every = std::max(1, log.every);
  char buf[64];
  for (int s = 1; s <= cfg.max_steps; ++s) {
    const Batch b = data.sample(cfg.batch_size, rng);
    last = algo.train_step(b);
    for (const auto& [k, v] : last) {
      if (!std::isfinite(v)) throw Error(ErrorKind::Internal, std::string("non-finite loss '") + k + "' at step " + std::to_string(s));
      acc[k] += v;
    }
    ++n_acc;
    if (log.csv && (s % every == 0 || s == cfg.max_steps)) {
      for (const auto& [k, v] : acc) {
        std::snprintf(buf, sizeof buf, "%.9g", v / n_acc);
        *log.csv << s << ',' << k << ',' << buf << '\n';
      }
      acc.clear();
      n_acc = 0;
    }
  }
  return last;
}

}  // namespace mmoba
