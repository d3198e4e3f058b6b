#include "debiascope/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace debiascope::finetune {

using encoder::EncoderNodes;
using encoder::EncoderParams;
using encoder::HistoryBatch;
using nd::Graph;
using nd::NamedTensors;
using nd::Tensor;
using panel::Panel;

namespace {

// Stream ids: every consumer of randomness gets its own derived
// stream so that procedures sharing a seed share exactly the draws
// they are meant to share (e.g. multitask at eta=0 matches supervised).
constexpr std::uint64_t kWageHeadStream = 0x41;
constexpr std::uint64_t kPropHeadStream = 0x42;
constexpr std::uint64_t kDiffHeadStream = 0x43;
constexpr std::uint64_t kSplitStream = 0x44;
constexpr std::uint64_t kOrderStream = 0x45;

double lin_sd(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

NamedTensors init_ff_head(const std::string& prefix, int dim, int hidden, int p, Rng& rng) {
  NamedTensors t;
  t[prefix + ".w1"] = Tensor::randn({dim, hidden}, lin_sd(dim), rng);
  t[prefix + ".b1"] = Tensor::zeros({hidden});
  t[prefix + ".w2"] = Tensor::randn({hidden, 1}, lin_sd(hidden), rng);
  t[prefix + ".b2"] = Tensor::zeros({1});
  if (p > 0) t[prefix + ".zbeta"] = Tensor::zeros({p, 1});
  return t;
}

NamedTensors init_prop_head(int dim, int p, bool use_z, Rng& rng) {
  (void)rng;
  NamedTensors t;
  // zero start: e_hat is exactly 1/2 before any update
  t["prop.gamma"] = Tensor::zeros({dim, 1});
  if (use_z && p > 0) t["prop.zgamma"] = Tensor::zeros({p, 1});
  return t;
}

int add_params(Graph& g, const NamedTensors& t) {
  int last = -1;
  for (const auto& [name, tensor] : t) last = g.param(name, tensor);
  return last;
}

// rho(rep) + beta' z as a (B,) node; z == -1 drops the linear term.
int build_ff_head(Graph& g, int rep, int z, const std::string& prefix) {
  auto P = [&](const std::string& n) {
    // parameters were added up front; look them up by building nothing
    for (int i = 0; i < g.node_count(); ++i)
      if (g.node(i).op == nd::Op::kParam && g.node(i).name == n) return i;
    throw std::invalid_argument("missing head parameter " + n);
  };
  int h = g.relu(g.add_bias(g.matmul(rep, P(prefix + ".w1")), P(prefix + ".b1")));
  int out = g.add_bias(g.matmul(h, P(prefix + ".w2")), P(prefix + ".b2"));
  if (z >= 0) {
    bool has_z = false;
    for (int i = 0; i < g.node_count(); ++i)
      if (g.node(i).op == nd::Op::kParam && g.node(i).name == prefix + ".zbeta") has_z = true;
    if (has_z) out = g.add(out, g.matmul(z, P(prefix + ".zbeta")));
  }
  return g.merge_last2(out);
}

int find_param(Graph& g, const std::string& n) {
  for (int i = 0; i < g.node_count(); ++i)
    if (g.node(i).op == nd::Op::kParam && g.node(i).name == n) return i;
  return -1;
}

int build_prop_logits(Graph& g, int rep, int z) {
  int gamma = find_param(g, "prop.gamma");
  if (gamma < 0) throw std::invalid_argument("missing propensity head");
  int out = g.matmul(rep, gamma);
  int zg = find_param(g, "prop.zgamma");
  if (z >= 0 && zg >= 0) out = g.add(out, g.matmul(z, zg));
  return g.merge_last2(out);
}

void require_both_groups(const Panel& p, const char* what) {
  if (p.count_group(0) == 0 || p.count_group(1) == 0)
    throw std::invalid_argument(std::string(what) + ": panel must contain both groups");
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> unit_val_split(
    const Panel& p, double fraction, std::uint64_t seed) {
  std::set<std::string> unit_set;
  for (const auto& o : p.observations) unit_set.insert(o.unit_id);
  std::vector<std::string> units(unit_set.begin(), unit_set.end());
  Rng rng = Rng::derive(seed, {kSplitStream});
  rng.shuffle(units);
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(units.size())));
  n_val = std::min(n_val, units.size() > 1 ? units.size() - 1 : 0);
  if (fraction > 0.0 && units.size() > 1) n_val = std::max<std::size_t>(n_val, 1);
  std::set<std::string> val_units(units.begin(), units.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < p.size(); ++i)
    (val_units.count(p.observations[i].unit_id) ? val_idx : train_idx).push_back(i);
  return {std::move(train_idx), std::move(val_idx)};
}

// Shared scaffolding for the fine-tuning graphs: encoder, base inputs
// and weighted, chunked objective evaluation.
struct Run {
  const Panel& p;
  const EncoderParams& init;
  const FineTuneConfig& cfg;
  Graph g;
  EncoderNodes enc;
  int z = -1;
  int y = -1, a = -1, w = -1;
  std::vector<std::size_t> train_idx, val_idx;

  Run(const Panel& panel, const EncoderParams& init_params, const FineTuneConfig& c)
      : p(panel), init(init_params), cfg(c) {
    cfg.validate();
    if (p.observations.empty()) throw std::invalid_argument("fine-tuning: empty panel");
    enc = build_encoder(g, init);
    if (p.covariate_dim() > 0) z = g.input("z");
    y = g.input("y");
    a = g.input("a");
    w = g.input("w");
    auto [t, v] = unit_val_split(p, cfg.val_fraction, cfg.seed);
    train_idx = std::move(t);
    val_idx = std::move(v);
    if (train_idx.empty()) train_idx = val_idx;
    if (val_idx.empty()) val_idx = train_idx;
  }

  void bind(std::span<const std::size_t> idx) {
    HistoryBatch b = make_history_batch(p, idx, init.config);
    bind_history_batch(g, b);
    const std::int64_t B = b.batch;
    Tensor ty({B}), ta({B}), tw({B});
    for (std::int64_t r = 0; r < B; ++r) {
      const auto& o = p.observations[idx[static_cast<std::size_t>(r)]];
      ty.data[static_cast<std::size_t>(r)] = o.log_wage;
      ta.data[static_cast<std::size_t>(r)] = static_cast<double>(o.group);
      tw.data[static_cast<std::size_t>(r)] = o.weight;
    }
    g.bind("y", std::move(ty));
    g.bind("a", std::move(ta));
    g.bind("w", std::move(tw));
    if (z >= 0) {
      const std::int64_t P = static_cast<std::int64_t>(p.covariate_dim());
      Tensor tz({B, P});
      for (std::int64_t r = 0; r < B; ++r) {
        const auto& o = p.observations[idx[static_cast<std::size_t>(r)]];
        for (std::int64_t j = 0; j < P; ++j) tz.at(r, j) = o.z[static_cast<std::size_t>(j)];
      }
      g.bind("z", std::move(tz));
    }
  }

  // Weighted mean of a weighted-mean loss node over chunks.
  double eval_on(int loss, const std::vector<std::size_t>& idx, std::size_t chunk = 512) {
    double sum = 0.0, sw = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
      std::size_t stop = std::min(idx.size(), start + chunk);
      std::span<const std::size_t> part(idx.data() + start, stop - start);
      bind(part);
      g.forward();
      double cw = 0.0;
      for (std::size_t i : part) cw += p.observations[i].weight;
      sum += g.value(loss).data[0] * cw;
      sw += cw;
    }
    return sw > 0.0 ? sum / sw : 0.0;
  }

  std::vector<int> trainable() const {
    if (!cfg.freeze_encoder) return g.params();
    std::vector<int> out;
    for (int id : g.params())
      if (!init.tensors.count(g.node(id).name)) out.push_back(id);
    return out;
  }

  training::TrainControl control() const { return {cfg.lr, cfg.max_epochs, cfg.patience, cfg.batch_size}; }

  void split_params(NamedTensors&& all, EncoderParams* enc_out, NamedTensors* heads_out) const {
    enc_out->config = init.config;
    for (auto& [name, tensor] : all) {
      if (init.tensors.count(name)) enc_out->tensors[name] = std::move(tensor);
      else (*heads_out)[name] = std::move(tensor);
    }
  }
};

FitInfo make_info(const char* method, const FineTuneConfig& cfg, const training::LoopResult& fit,
                  std::uint64_t param_hash) {
  FitInfo info;
  info.method = method;
  info.seed = cfg.seed;
  info.history = fit.log;
  info.best_epoch = fit.best_epoch;
  info.best_val = fit.best_val;
  info.param_hash = param_hash;
  return info;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kSupervised: return "supervised";
    case Method::kMultitask: return "multitask";
    case Method::kProjection: return "projection";
    case Method::kDifference: return "difference";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "supervised") return Method::kSupervised;
  if (s == "multitask") return Method::kMultitask;
  if (s == "projection") return Method::kProjection;
  if (s == "difference") return Method::kDifference;
  throw std::invalid_argument("unknown fine-tuning method '" + s + "'");
}

void FineTuneConfig::validate() const {
  if (eta < 0.0) throw std::invalid_argument("fine-tune config: eta must be non-negative");
  if (lr <= 0.0) throw std::invalid_argument("fine-tune config: lr must be positive");
  if (patience < 1) throw std::invalid_argument("fine-tune config: patience must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("fine-tune config: batch size must be at least 1");
  if (max_epochs < 0) throw std::invalid_argument("fine-tune config: max_epochs must be non-negative");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("fine-tune config: val_fraction must be in [0,1)");
}

std::uint64_t WageModel::hash() const {
  NamedTensors all = heads;
  for (const auto& [k, v] : enc.tensors) all["enc." + k] = v;
  return nd::content_hash(all);
}

std::uint64_t PropensityModel::hash() const {
  NamedTensors all = head;
  for (const auto& [k, v] : enc.tensors) all["enc." + k] = v;
  return nd::content_hash(all);
}

std::uint64_t DifferenceModel::hash() const {
  NamedTensors all = head;
  for (const auto& [k, v] : enc.tensors) all["enc." + k] = v;
  return nd::content_hash(all);
}

std::vector<std::size_t> all_indices(const Panel& p) {
  std::vector<std::size_t> idx(p.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

static WageFit wage_finetune_impl(const Panel& p, const EncoderParams& init,
                                  const FineTuneConfig& cfg, bool pooled) {
  if (!pooled) require_both_groups(p, "supervised_finetune");
  Run run(p, init, cfg);
  Rng head_rng = Rng::derive(cfg.seed, {kWageHeadStream});
  const int P = static_cast<int>(p.covariate_dim());
  int mu = -1;
  if (pooled) {
    add_params(run.g, init_ff_head("wagem", init.config.dim, cfg.head_hidden, P, head_rng));
    mu = build_ff_head(run.g, run.enc.rep, run.z, "wagem");
  } else {
    add_params(run.g, init_ff_head("wage0", init.config.dim, cfg.head_hidden, P, head_rng));
    add_params(run.g, init_ff_head("wage1", init.config.dim, cfg.head_hidden, P, head_rng));
    int mu0 = build_ff_head(run.g, run.enc.rep, run.z, "wage0");
    int mu1 = build_ff_head(run.g, run.enc.rep, run.z, "wage1");
    int one_minus_a = run.g.add_scalar(run.g.scale(run.a, -1.0), 1.0);
    mu = run.g.add(run.g.mul(run.a, mu1), run.g.mul(one_minus_a, mu0));
  }
  int loss = run.g.weighted_mse(mu, run.y, run.w);

  Rng order_rng = Rng::derive(cfg.seed, {kOrderStream});
  training::LoopResult fit = run_training(
      run.g, loss, run.train_idx, run.control(), run.trainable(),
      [&](std::span<const std::size_t> b) { run.bind(b); }, [&] { return run.eval_on(loss, run.val_idx); },
      order_rng);

  WageFit out;
  out.model.pooled = pooled;
  run.split_params(std::move(fit.best_params), &out.model.enc, &out.model.heads);
  out.info = make_info(pooled ? "pooled_wage" : "supervised", cfg, fit, out.model.hash());
  return out;
}

WageFit supervised_finetune(const Panel& p, const EncoderParams& init, const FineTuneConfig& cfg) {
  return wage_finetune_impl(p, init, cfg, false);
}

WageFit pooled_wage_finetune(const Panel& p, const EncoderParams& init, const FineTuneConfig& cfg) {
  return wage_finetune_impl(p, init, cfg, true);
}

PropensityFit propensity_finetune(const Panel& p, const EncoderParams& init, const FineTuneConfig& cfg) {
  require_both_groups(p, "propensity_finetune");
  Run run(p, init, cfg);
  Rng head_rng = Rng::derive(cfg.seed, {kPropHeadStream});
  add_params(run.g, init_prop_head(init.config.dim, static_cast<int>(p.covariate_dim()),
                                   cfg.propensity_use_z, head_rng));
  int logits = build_prop_logits(run.g, run.enc.rep, run.z);
  int loss = run.g.weighted_bce_logits(logits, run.a, run.w);

  Rng order_rng = Rng::derive(cfg.seed, {kOrderStream});
  training::LoopResult fit = run_training(
      run.g, loss, run.train_idx, run.control(), run.trainable(),
      [&](std::span<const std::size_t> b) { run.bind(b); }, [&] { return run.eval_on(loss, run.val_idx); },
      order_rng);

  PropensityFit out;
  out.model.uses_z = cfg.propensity_use_z && p.covariate_dim() > 0;
  run.split_params(std::move(fit.best_params), &out.model.enc, &out.model.head);
  out.info = make_info("propensity", cfg, fit, out.model.hash());
  return out;
}

namespace {

struct JointGraph {
  Run run;
  int wage_loss = -1;
  int bce_loss = -1;
  int joint_loss = -1;

  JointGraph(const Panel& p, const EncoderParams& init, const FineTuneConfig& cfg, double eta)
      : run(p, init, cfg) {
    Rng wage_rng = Rng::derive(cfg.seed, {kWageHeadStream});
    const int P = static_cast<int>(p.covariate_dim());
    add_params(run.g, init_ff_head("wage0", init.config.dim, cfg.head_hidden, P, wage_rng));
    add_params(run.g, init_ff_head("wage1", init.config.dim, cfg.head_hidden, P, wage_rng));
    Rng prop_rng = Rng::derive(cfg.seed, {kPropHeadStream});
    add_params(run.g, init_prop_head(init.config.dim, P, cfg.propensity_use_z, prop_rng));

    int mu0 = build_ff_head(run.g, run.enc.rep, run.z, "wage0");
    int mu1 = build_ff_head(run.g, run.enc.rep, run.z, "wage1");
    int one_minus_a = run.g.add_scalar(run.g.scale(run.a, -1.0), 1.0);
    int mu = run.g.add(run.g.mul(run.a, mu1), run.g.mul(one_minus_a, mu0));
    wage_loss = run.g.weighted_mse(mu, run.y, run.w);
    int logits = build_prop_logits(run.g, run.enc.rep, run.z);
    bce_loss = run.g.weighted_bce_logits(logits, run.a, run.w);
    joint_loss = run.g.add(wage_loss, run.g.scale(bce_loss, eta));
  }

  MultitaskFit extract(const char* method, const FineTuneConfig& cfg, const training::LoopResult& fit) {
    MultitaskFit out;
    EncoderParams enc_params;
    NamedTensors heads;
    run.split_params(nd::NamedTensors(fit.best_params), &enc_params, &heads);
    out.wage.enc = enc_params;
    out.propensity.enc = enc_params;
    out.propensity.uses_z = cfg.propensity_use_z && run.p.covariate_dim() > 0;
    for (auto& [name, tensor] : heads) {
      if (name.rfind("prop.", 0) == 0) out.propensity.head[name] = std::move(tensor);
      else out.wage.heads[name] = std::move(tensor);
    }
    out.info = make_info(method, cfg, fit, out.wage.hash() ^ out.propensity.hash());
    return out;
  }
};

}  // namespace

MultitaskFit multitask_finetune(const Panel& p, const EncoderParams& init, const FineTuneConfig& cfg) {
  require_both_groups(p, "multitask_finetune");
  JointGraph jg(p, init, cfg, cfg.eta);
  Rng order_rng = Rng::derive(cfg.seed, {kOrderStream});
  training::LoopResult fit = run_training(
      jg.run.g, jg.joint_loss, jg.run.train_idx, jg.run.control(), jg.run.trainable(),
      [&](std::span<const std::size_t> b) { jg.run.bind(b); },
      [&] { return jg.run.eval_on(jg.joint_loss, jg.run.val_idx); }, order_rng);
  return jg.extract("multitask", cfg, fit);
}

MultitaskFit projection_finetune(const Panel& p, const EncoderParams& init, const FineTuneConfig& cfg) {
  require_both_groups(p, "projection_finetune");
  // eta plays no role here; the phases alternate full objectives.
  JointGraph jg(p, init, cfg, 1.0);
  Rng order_rng = Rng::derive(cfg.seed, {kOrderStream});

  const int phase_losses[3] = {jg.wage_loss, jg.bce_loss, jg.wage_loss};
  const char* phase_names[3] = {"wage", "propensity", "wage"};
  FitInfo info;
  info.method = "projection";
  info.seed = cfg.seed;
  training::LoopResult last;
  int epoch_offset = 0;
  for (int phase = 0; phase < 3; ++phase) {
    int loss = phase_losses[phase];
    last = run_training(
        jg.run.g, loss, jg.run.train_idx, jg.run.control(), jg.run.trainable(),
        [&](std::span<const std::size_t> b) { jg.run.bind(b); },
        [&] { return jg.run.eval_on(loss, jg.run.val_idx); }, order_rng);
    info.phases.push_back(phase_names[phase]);
    for (training::EpochLog e : last.log) {
      e.epoch += epoch_offset;
      info.history.push_back(e);
    }
    epoch_offset += static_cast<int>(last.log.size());
  }
  MultitaskFit out = jg.extract("projection", cfg, last);
  out.info.phases = info.phases;
  out.info.history = info.history;
  return out;
}

DifferenceFit difference_finetune(const Panel& p, const WageModel& m_hat,
                                  const PropensityModel& e_hat,
                                  const EncoderParams& init, const FineTuneConfig& cfg) {
  if (!m_hat.pooled)
    throw std::invalid_argument(
        "difference_finetune: m_hat must be a pooled conditional wage model (no group heads)");
  const std::uint64_t m_hash_before = m_hat.hash();
  const std::uint64_t e_hash_before = e_hat.hash();

  std::vector<std::size_t> all = all_indices(p);
  WagePredictions m_pred = predict_wage(m_hat, p, all);
  std::vector<double> e_pred = predict_propensity(e_hat, p, all);

  DifferenceFit out = difference_finetune(p, m_pred.mu0, e_pred, init, cfg);
  if (m_hat.hash() != m_hash_before || e_hat.hash() != e_hash_before)
    throw std::logic_error("difference_finetune: contract violation, nuisance models changed during fit");
  return out;
}

DifferenceFit difference_finetune(const Panel& p, std::span<const double> m_values,
                                  std::span<const double> e_values,
                                  const EncoderParams& init, const FineTuneConfig& cfg) {
  if (m_values.size() != p.size() || e_values.size() != p.size())
    throw std::invalid_argument("difference_finetune: nuisance values must align with the panel");

  std::vector<double> resid(p.size()), mult(p.size());
  double mult_mass = 0.0, w_mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& o = p.observations[i];
    resid[i] = o.log_wage - m_values[i];
    mult[i] = static_cast<double>(o.group) - e_values[i];
    mult_mass += o.weight * mult[i] * mult[i];
    w_mass += o.weight;
  }

  Run run(p, init, cfg);
  Rng head_rng = Rng::derive(cfg.seed, {kDiffHeadStream});
  add_params(run.g, init_ff_head("diff", init.config.dim, cfg.head_hidden,
                                 static_cast<int>(p.covariate_dim()), head_rng));
  int tau = build_ff_head(run.g, run.enc.rep, run.z, "diff");
  int r_in = run.g.input("r");
  int d_in = run.g.input("d");
  int loss = run.g.weighted_mse(run.g.mul(d_in, tau), r_in, run.w);

  auto bind_extra = [&](std::span<const std::size_t> idx) {
    run.bind(idx);
    Tensor tr({static_cast<std::int64_t>(idx.size())}), td({static_cast<std::int64_t>(idx.size())});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      tr.data[k] = resid[idx[k]];
      td.data[k] = mult[idx[k]];
    }
    run.g.bind("r", std::move(tr));
    run.g.bind("d", std::move(td));
  };

  auto eval_val = [&] {
    double sum = 0.0, sw = 0.0;
    const std::size_t chunk = 512;
    const auto& idx = run.val_idx;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
      std::size_t stop = std::min(idx.size(), start + chunk);
      std::span<const std::size_t> part(idx.data() + start, stop - start);
      bind_extra(part);
      run.g.forward();
      double cw = 0.0;
      for (std::size_t i : part) cw += p.observations[i].weight;
      sum += run.g.value(loss).data[0] * cw;
      sw += cw;
    }
    return sw > 0.0 ? sum / sw : 0.0;
  };

  Rng order_rng = Rng::derive(cfg.seed, {kOrderStream});
  training::LoopResult fit = run_training(run.g, loss, run.train_idx, run.control(), run.trainable(),
                                          bind_extra, eval_val, order_rng);

  DifferenceFit out;
  run.split_params(std::move(fit.best_params), &out.model.enc, &out.model.head);
  out.info = make_info("difference", cfg, fit, out.model.hash());
  if (mult_mass / std::max(w_mass, 1e-300) < 1e-16)
    out.info.warnings.push_back(
        "degenerate multiplier: A - e_hat is zero everywhere, objective does not identify tau");
  return out;
}

namespace {

// Shared prediction plumbing: encoder + heads evaluated in chunks.
struct Predictor {
  Graph g;
  EncoderNodes enc;
  int z = -1;
  const Panel& p;
  const encoder::EncoderConfig cfg;

  Predictor(const EncoderParams& ep, const NamedTensors& heads, const Panel& panel)
      : p(panel), cfg(ep.config) {
    enc = build_encoder(g, ep);
    if (p.covariate_dim() > 0) z = g.input("z");
    add_params(g, heads);
  }

  void bind(std::span<const std::size_t> idx) {
    HistoryBatch b = make_history_batch(p, idx, cfg);
    bind_history_batch(g, b);
    if (z >= 0) {
      const std::int64_t B = static_cast<std::int64_t>(idx.size());
      const std::int64_t P = static_cast<std::int64_t>(p.covariate_dim());
      Tensor tz({B, P});
      for (std::int64_t r = 0; r < B; ++r)
        for (std::int64_t j = 0; j < P; ++j)
          tz.at(r, j) = p.observations[idx[static_cast<std::size_t>(r)]].z[static_cast<std::size_t>(j)];
      g.bind("z", std::move(tz));
    }
  }

  void collect(const std::vector<int>& nodes, std::span<const std::size_t> idx,
               std::vector<std::vector<double>*> outs, std::size_t chunk = 512) {
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
      std::size_t stop = std::min(idx.size(), start + chunk);
      bind(idx.subspan(start, stop - start));
      g.forward();
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const Tensor& v = g.value(nodes[static_cast<std::size_t>(k)]);
        for (std::size_t r = 0; r < v.data.size(); ++r) (*outs[k])[start + r] = v.data[r];
      }
    }
  }
};

}  // namespace

WagePredictions predict_wage(const WageModel& m, const Panel& p, std::span<const std::size_t> idx) {
  Predictor pr(m.enc, m.heads, p);
  WagePredictions out;
  out.mu0.resize(idx.size());
  out.mu1.resize(idx.size());
  if (m.pooled) {
    int mu = build_ff_head(pr.g, pr.enc.rep, pr.z, "wagem");
    pr.collect({mu}, idx, {&out.mu0});
    out.mu1 = out.mu0;
  } else {
    int mu0 = build_ff_head(pr.g, pr.enc.rep, pr.z, "wage0");
    int mu1 = build_ff_head(pr.g, pr.enc.rep, pr.z, "wage1");
    pr.collect({mu0, mu1}, idx, {&out.mu0, &out.mu1});
  }
  return out;
}

std::vector<double> predict_propensity(const PropensityModel& m, const Panel& p,
                                       std::span<const std::size_t> idx) {
  Predictor pr(m.enc, m.head, p);
  int prob = pr.g.sigmoid(build_prop_logits(pr.g, pr.enc.rep, m.uses_z ? pr.z : -1));
  std::vector<double> out(idx.size());
  pr.collect({prob}, idx, {&out});
  return out;
}

std::vector<double> predict_difference(const DifferenceModel& m, const Panel& p,
                                       std::span<const std::size_t> idx) {
  Predictor pr(m.enc, m.head, p);
  int tau = build_ff_head(pr.g, pr.enc.rep, pr.z, "diff");
  std::vector<double> out(idx.size());
  pr.collect({tau}, idx, {&out});
  return out;
}

}  // namespace debiascope::finetune
