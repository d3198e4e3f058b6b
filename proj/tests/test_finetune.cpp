#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "debiascope/finetune.hpp"
#include "debiascope/losses.hpp"
#include "debiascope/stats.hpp"
#include "support.hpp"

using namespace debiascope;
using namespace debiascope::finetune;
using namespace debiascope::panel;
using encoder::EncoderConfig;
using encoder::EncoderParams;
using encoder::init_encoder_params;

namespace {

// Panel with random-walk occupation histories; Y and A set by callers.
Panel base_panel(std::size_t units, std::size_t covariates, Rng& rng,
                 const std::vector<std::string>& codes = {"101", "102", "103", "104"}) {
  Panel p;
  for (std::size_t j = 0; j < covariates; ++j) p.covariate_names.push_back("z_" + std::to_string(j));
  for (const auto& c : codes) p.vocabulary.add(c);
  for (std::size_t u = 0; u < units; ++u) {
    Observation o;
    o.unit_id = "u" + std::to_string(10000 + u);
    std::size_t len = 4 + rng.below(6);
    for (std::size_t t = 0; t < len; ++t)
      o.history.tokens.push_back(
          {static_cast<std::int32_t>(7 + rng.below(codes.size())), static_cast<std::int32_t>(1990 + t)});
    for (std::size_t j = 0; j < covariates; ++j) o.z.push_back(rng.normal());
    o.group = rng.bernoulli(0.5) ? 1 : 0;
    o.log_wage = 0.0;
    o.weight = 1.0;
    p.observations.push_back(std::move(o));
  }
  return p;
}

EncoderParams zero_encoder(const EncoderConfig& cfg) {
  Rng r(0);
  EncoderParams e = init_encoder_params(cfg, r);
  for (auto& [name, t] : e.tensors) t.fill(0.0);
  return e;
}

EncoderParams small_init(const EncoderConfig& cfg, std::uint64_t seed) {
  Rng r(seed);
  return init_encoder_params(cfg, r);
}

double head_fraction_hi(const Observation& o) {
  double hi = 0.0;
  for (const auto& t : o.history.tokens) hi += t.occ == 7 ? 1.0 : 0.0;
  return hi / static_cast<double>(o.history.length());
}

}  // namespace

TEST_CASE("supervised: constant target is recovered, train mse near zero") {
  Rng rng(1);
  Panel p = base_panel(80, 0, rng);
  const double c = 1.7;
  for (auto& o : p.observations) o.log_wage = c;
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.lr = 2e-2;
  ft.max_epochs = 300;
  ft.patience = 50;
  ft.seed = 2;
  WageFit fit = supervised_finetune(p, small_init(cfg, 3), ft);
  auto idx = all_indices(p);
  WagePredictions pred = predict_wage(fit.model, p, idx);
  double worst = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    worst = std::max(worst, std::abs(pred.mu0[i] - c));
    worst = std::max(worst, std::abs(pred.mu1[i] - c));
  }
  CHECK(worst < 0.05);
  CHECK(fit.info.best_val < 1e-3);
}

TEST_CASE("supervised: exact linear-in-Z wage with frozen zero encoder recovers OLS") {
  Rng rng(4);
  Panel p = base_panel(240, 3, rng);
  const std::vector<double> beta = {0.8, -0.5, 0.3};
  for (auto& o : p.observations) {
    o.log_wage = 0.0;
    for (std::size_t j = 0; j < 3; ++j) o.log_wage += beta[j] * o.z[j];
  }
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.lr = 1e-2;
  ft.max_epochs = 2500;
  ft.patience = 400;
  ft.freeze_encoder = true;
  ft.val_fraction = 0.1;
  ft.seed = 5;
  WageFit fit = supervised_finetune(p, zero_encoder(cfg), ft);

  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (const auto& o : p.observations) {
    X.push_back({o.z[0], o.z[1], o.z[2], 1.0});
    y.push_back(o.log_wage);
  }
  std::vector<double> oracle = dbs_test::ols(X, y);
  for (const char* head : {"wage0", "wage1"}) {
    const nd::Tensor& zbeta = fit.model.heads.at(std::string(head) + ".zbeta");
    for (std::size_t j = 0; j < 3; ++j) {
      INFO(head << " coefficient " << j);
      CHECK(std::abs(zbeta.data[j] - oracle[j]) < 1e-3);
    }
  }
}

TEST_CASE("supervised: zero epochs returns initialization and is deterministic") {
  Rng rng(6);
  Panel p = base_panel(20, 1, rng);
  for (auto& o : p.observations) o.log_wage = rng.normal();
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.max_epochs = 0;
  ft.seed = 7;
  WageFit a = supervised_finetune(p, small_init(cfg, 8), ft);
  WageFit b = supervised_finetune(p, small_init(cfg, 8), ft);
  CHECK(a.info.best_epoch == 0);
  CHECK(a.model.hash() == b.model.hash());
  CHECK(nd::content_hash(a.model.enc.tensors) == nd::content_hash(small_init(cfg, 8).tensors));
}

TEST_CASE("fine-tuning procedures are deterministic in the seed") {
  Rng rng(9);
  Panel p = base_panel(60, 1, rng);
  for (auto& o : p.observations) o.log_wage = head_fraction_hi(o) + 0.1 * rng.normal();
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.max_epochs = 4;
  ft.seed = 11;
  EncoderParams init = small_init(cfg, 10);
  CHECK(supervised_finetune(p, init, ft).model.hash() == supervised_finetune(p, init, ft).model.hash());
  CHECK(propensity_finetune(p, init, ft).model.hash() == propensity_finetune(p, init, ft).model.hash());
  CHECK(multitask_finetune(p, init, ft).wage.hash() == multitask_finetune(p, init, ft).wage.hash());
  FineTuneConfig other = ft;
  other.seed = 12;
  CHECK(supervised_finetune(p, init, ft).model.hash() != supervised_finetune(p, init, other).model.hash());
}

TEST_CASE("propensity: independent balanced labels give predictions near one half") {
  Rng rng(13);
  Panel p = base_panel(300, 0, rng);
  for (std::size_t i = 0; i < p.size(); ++i) p.observations[i].group = static_cast<int>(i % 2);
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.lr = 5e-3;
  ft.max_epochs = 80;
  ft.patience = 10;
  ft.seed = 14;
  PropensityFit fit = propensity_finetune(p, small_init(cfg, 15), ft);
  auto idx = all_indices(p);
  std::vector<double> e = predict_propensity(fit.model, p, idx);
  double m = mean(e);
  CHECK(std::abs(m - 0.5) < 0.05);
  double dev = 0.0;
  for (double v : e) dev += std::abs(v - 0.5);
  CHECK(dev / static_cast<double>(e.size()) < 0.05);
}

TEST_CASE("propensity: separable group indicator reaches pseudo R2 above 0.95") {
  Rng rng(16);
  Panel p = base_panel(260, 0, rng);
  // group = indicator that the terminal token is code 101 (id 7)
  for (auto& o : p.observations) {
    bool hi = rng.bernoulli(0.5);
    o.history.tokens.back().occ = hi ? 7 : 8;
    o.group = hi ? 1 : 0;
  }
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.lr = 5e-3;
  ft.max_epochs = 150;
  ft.patience = 25;
  ft.seed = 17;
  PropensityFit fit = propensity_finetune(p, small_init(cfg, 18), ft);

  // held-out pseudo R2 vs the coin-flip null
  Rng hold_rng(19);
  Panel held = base_panel(80, 0, hold_rng, {"101", "102", "103", "104"});
  for (auto& o : held.observations) {
    bool hi = hold_rng.bernoulli(0.5);
    o.history.tokens.back().occ = hi ? 7 : 8;
    o.group = hi ? 1 : 0;
  }
  auto idx = all_indices(held);
  std::vector<double> e = predict_propensity(fit.model, held, idx);
  double nll_model = 0.0, nll_null = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    nll_model += nd::bce(e[i], static_cast<double>(held.observations[i].group));
    nll_null += std::log(2.0);
  }
  CHECK(1.0 - nll_model / nll_null > 0.95);
}

TEST_CASE("propensity: single-group panel rejected") {
  Rng rng(20);
  Panel p = base_panel(10, 0, rng);
  for (auto& o : p.observations) o.group = 1;
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  CHECK_THROWS_WITH_AS(propensity_finetune(p, small_init(cfg, 21), FineTuneConfig{}),
                       doctest::Contains("both groups"), std::invalid_argument);
  CHECK_THROWS_AS(supervised_finetune(p, small_init(cfg, 21), FineTuneConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(multitask_finetune(p, small_init(cfg, 21), FineTuneConfig{}), std::invalid_argument);
}

TEST_CASE("multitask with eta=0 matches supervised bit for bit, propensity head frozen") {
  Rng rng(22);
  Panel p = base_panel(90, 2, rng);
  for (auto& o : p.observations) o.log_wage = head_fraction_hi(o) + 0.5 * o.z[0] + 0.2 * rng.normal();
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  EncoderParams init = small_init(cfg, 23);
  FineTuneConfig ft;
  ft.eta = 0.0;
  ft.max_epochs = 25;
  ft.patience = 25;
  ft.seed = 24;

  MultitaskFit mt = multitask_finetune(p, init, ft);
  WageFit sup = supervised_finetune(p, init, ft);
  CHECK(mt.wage.hash() == sup.model.hash());

  // zero propensity-head movement at eta=0: heads equal their initialization
  FineTuneConfig zero = ft;
  zero.max_epochs = 0;
  MultitaskFit at_init = multitask_finetune(p, init, zero);
  CHECK(nd::content_hash(mt.propensity.head) == nd::content_hash(at_init.propensity.head));
}

TEST_CASE("multitask joint objective at optimum is no worse than at initialization") {
  Rng rng(25);
  Panel p = base_panel(120, 1, rng);
  for (auto& o : p.observations) {
    double s = head_fraction_hi(o);
    o.group = rng.bernoulli(nd::sigmoid(3.0 * (s - 0.5))) ? 1 : 0;
    o.log_wage = 1.2 * s + 0.4 * o.z[0] + 0.3 * rng.normal();
  }
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  EncoderParams init = small_init(cfg, 26);
  FineTuneConfig ft;
  ft.eta = 1.0;
  ft.max_epochs = 30;
  ft.seed = 27;

  auto joint_obj = [&](const MultitaskFit& fit) {
    auto idx = all_indices(p);
    WagePredictions wp = predict_wage(fit.wage, p, idx);
    std::vector<double> e = predict_propensity(fit.propensity, p, idx);
    double sw = 0.0, msum = 0.0, bsum = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& o = p.observations[i];
      double mu = o.group == 1 ? wp.mu1[i] : wp.mu0[i];
      msum += o.weight * (o.log_wage - mu) * (o.log_wage - mu);
      bsum += o.weight * nd::bce(e[i], static_cast<double>(o.group));
      sw += o.weight;
    }
    return (msum + ft.eta * bsum) / sw;
  };

  FineTuneConfig zero = ft;
  zero.max_epochs = 0;
  MultitaskFit fit0 = multitask_finetune(p, init, zero);
  MultitaskFit fit1 = multitask_finetune(p, init, ft);
  CHECK(joint_obj(fit1) <= joint_obj(fit0));
}

TEST_CASE("multitask beats a frozen propensity head on supervised representations") {
  // Shared-structure setting: one score drives both wage and group.
  // Group labels are nearly separable in the score while wages are
  // noisy, so wage-only supervision recovers the score imperfectly.
  // Paired over replicates; identical frozen-head readouts on both
  // representations isolate what each lambda-hat learned about group
  // membership.
  auto terminal_score = [](const Observation& o) {
    return -1.5 + static_cast<double>(o.history.tokens.back().occ - 7);
  };
  auto assign = [&](Panel& p, Rng& r) {
    for (auto& o : p.observations) {
      double s = terminal_score(o);
      o.group = r.bernoulli(nd::sigmoid(3.0 * s)) ? 1 : 0;
      o.log_wage = s + 1.5 * r.normal();
    }
  };

  double total_margin = 0.0;
  int wins = 0;
  const int replicates = 3;
  for (int rep = 1; rep <= replicates; ++rep) {
    Rng rng(static_cast<std::uint64_t>(rep) * 13);
    Panel train = base_panel(400, 0, rng);
    assign(train, rng);
    Rng hold_rng(static_cast<std::uint64_t>(rep) * 13 + 7);
    Panel held = base_panel(200, 0, hold_rng);
    assign(held, hold_rng);

    EncoderConfig cfg = EncoderConfig::desk_scale(train.vocabulary.size());
    EncoderParams init = small_init(cfg, static_cast<std::uint64_t>(rep) * 7 + 1);
    FineTuneConfig ft;
    ft.lr = 7e-3;
    ft.max_epochs = 200;
    ft.patience = 30;
    ft.seed = static_cast<std::uint64_t>(rep) * 31;

    MultitaskFit mt = multitask_finetune(train, init, ft);
    WageFit sup = supervised_finetune(train, init, ft);

    FineTuneConfig head_ft = ft;
    head_ft.freeze_encoder = true;
    head_ft.lr = 2e-2;
    head_ft.max_epochs = 250;
    head_ft.patience = 30;
    PropensityFit mt_prop = propensity_finetune(train, mt.wage.enc, head_ft);
    PropensityFit sup_prop = propensity_finetune(train, sup.model.enc, head_ft);

    auto pseudo = [&](const std::vector<double>& e) {
      double nll = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i)
        nll += nd::bce(e[i], static_cast<double>(held.observations[i].group));
      return 1.0 - nll / (std::log(2.0) * static_cast<double>(e.size()));
    };
    auto idx = all_indices(held);
    double r2_mt = pseudo(predict_propensity(mt_prop.model, held, idx));
    double r2_sup = pseudo(predict_propensity(sup_prop.model, held, idx));
    MESSAGE("rep " << rep << ": held-out gender pseudo R2 multitask " << r2_mt
                   << " vs frozen-supervised " << r2_sup);
    total_margin += r2_mt - r2_sup;
    wins += r2_mt > r2_sup ? 1 : 0;
  }
  CHECK(total_margin / replicates > 0.0);
  CHECK(wins >= 2);
}

TEST_CASE("projection: phase schedule is wage, propensity, wage") {
  Rng rng(32);
  Panel p = base_panel(50, 0, rng);
  for (auto& o : p.observations) o.log_wage = head_fraction_hi(o) + 0.2 * rng.normal();
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.max_epochs = 3;
  ft.seed = 33;
  MultitaskFit fit = projection_finetune(p, small_init(cfg, 34), ft);
  CHECK(fit.info.phases == std::vector<std::string>{"wage", "propensity", "wage"});
}

TEST_CASE("projection: zero-epoch phases leave parameters at initialization") {
  Rng rng(35);
  Panel p = base_panel(30, 0, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  EncoderParams init = small_init(cfg, 36);
  FineTuneConfig ft;
  ft.max_epochs = 0;
  ft.seed = 37;
  MultitaskFit proj = projection_finetune(p, init, ft);
  MultitaskFit mt = multitask_finetune(p, init, ft);  // same init streams
  CHECK(proj.wage.hash() == mt.wage.hash());
  CHECK(proj.propensity.hash() == mt.propensity.hash());
}

TEST_CASE("difference: noiseless constant effect with oracle nuisances") {
  Rng rng(38);
  Panel p = base_panel(240, 0, rng);
  const double tau0 = 0.5;
  // discrete mu0 by terminal token, oracle everything, zero noise
  std::vector<double> m_vals(p.size()), e_vals(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& o = p.observations[i];
    double mu0 = 0.3 * static_cast<double>(o.history.tokens.back().occ - 7);
    double e = 0.3 + 0.1 * static_cast<double>(o.history.tokens.back().occ - 7);
    o.group = rng.bernoulli(e) ? 1 : 0;
    o.log_wage = mu0 + tau0 * o.group;
    m_vals[i] = mu0 + e * tau0;  // E[Y|X] pools the groups
    e_vals[i] = e;
  }
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.lr = 1e-2;
  ft.max_epochs = 300;
  ft.patience = 60;
  ft.seed = 39;
  DifferenceFit fit = difference_finetune(p, m_vals, e_vals, small_init(cfg, 40), ft);
  auto idx = all_indices(p);
  std::vector<double> tau = predict_difference(fit.model, p, idx);
  for (double t : tau) CHECK(std::abs(t - tau0) < 1e-2);
  CHECK(fit.info.best_val < 1e-4);
}

TEST_CASE("difference: degenerate multiplier is reported") {
  Rng rng(41);
  Panel p = base_panel(30, 0, rng);
  std::vector<double> m_vals(p.size(), 0.0), e_vals(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    e_vals[i] = static_cast<double>(p.observations[i].group);  // A - e identically zero
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.max_epochs = 1;
  ft.seed = 42;
  DifferenceFit fit = difference_finetune(p, m_vals, e_vals, small_init(cfg, 43), ft);
  REQUIRE(!fit.info.warnings.empty());
  CHECK(fit.info.warnings[0].find("degenerate multiplier") != std::string::npos);
}

TEST_CASE("difference: tabular minimizer matches cell-level group differences") {
  Rng rng(44);
  // four distinct single-token histories define four cells
  Panel p;
  for (const auto& c : {"101", "102", "103", "104"}) p.vocabulary.add(c);
  const double mu0_tab[4] = {0.0, 0.5, -0.3, 1.0};
  const double tau_tab[4] = {0.2, -0.4, 0.7, 0.0};
  const double e_tab[4] = {0.35, 0.5, 0.65, 0.45};
  std::vector<double> m_vals, e_vals;
  for (std::size_t i = 0; i < 400; ++i) {
    std::size_t cell = rng.below(4);
    Observation o;
    o.unit_id = "u" + std::to_string(i);
    o.history.tokens = {{static_cast<std::int32_t>(7 + cell), 2000},
                        {static_cast<std::int32_t>(7 + cell), 2001}};
    o.group = rng.bernoulli(e_tab[cell]) ? 1 : 0;
    o.log_wage = mu0_tab[cell] + tau_tab[cell] * o.group;  // noiseless
    o.weight = 1.0;
    p.observations.push_back(std::move(o));
    m_vals.push_back(mu0_tab[cell] + e_tab[cell] * tau_tab[cell]);
    e_vals.push_back(e_tab[cell]);
  }

  // brute-force per-cell minimizer of the residual-on-residual objective
  for (std::size_t cell = 0; cell < 4; ++cell) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (static_cast<std::size_t>(p.observations[i].history.tokens[0].occ - 7) != cell) continue;
      double d = p.observations[i].group - e_vals[i];
      double r = p.observations[i].log_wage - m_vals[i];
      num += d * r;
      den += d * d;
    }
    CHECK(std::abs(num / den - tau_tab[cell]) < 1e-12);
  }

  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.lr = 1e-2;
  ft.max_epochs = 600;
  ft.patience = 100;
  ft.seed = 45;
  DifferenceFit fit = difference_finetune(p, m_vals, e_vals, small_init(cfg, 46), ft);
  auto idx = all_indices(p);
  std::vector<double> tau = predict_difference(fit.model, p, idx);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::size_t cell = static_cast<std::size_t>(p.observations[i].history.tokens[0].occ - 7);
    worst = std::max(worst, std::abs(tau[i] - tau_tab[cell]));
  }
  MESSAGE("worst cell error " << worst);
  CHECK(worst < 1e-2);
}

TEST_CASE("difference: model-based wrapper enforces pooled nuisance and freezes it") {
  Rng rng(47);
  Panel p = base_panel(60, 1, rng);
  for (auto& o : p.observations) o.log_wage = head_fraction_hi(o) + 0.3 * o.z[0];
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  EncoderParams init = small_init(cfg, 48);
  FineTuneConfig ft;
  ft.max_epochs = 3;
  ft.seed = 49;

  WageFit m = pooled_wage_finetune(p, init, ft);
  PropensityFit e = propensity_finetune(p, init, ft);
  std::uint64_t hm = m.model.hash(), he = e.model.hash();
  DifferenceFit d = difference_finetune(p, m.model, e.model, init, ft);
  CHECK(m.model.hash() == hm);
  CHECK(e.model.hash() == he);
  CHECK(d.info.method == "difference");

  WageFit grouped = supervised_finetune(p, init, ft);
  CHECK_THROWS_WITH_AS(difference_finetune(p, grouped.model, e.model, init, ft),
                       doctest::Contains("pooled"), std::invalid_argument);
}

TEST_CASE("early stopping returns the best validation checkpoint, not the last epoch") {
  Rng rng(50);
  Panel p = base_panel(60, 0, rng);
  for (auto& o : p.observations) o.log_wage = head_fraction_hi(o) + 1.5 * rng.normal();  // noisy: overfits
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  FineTuneConfig ft;
  ft.lr = 1e-2;
  ft.max_epochs = 120;
  ft.patience = 12;
  ft.seed = 51;
  WageFit fit = supervised_finetune(p, small_init(cfg, 52), ft);
  double best_logged = fit.info.history.front().val_obj;
  for (const auto& e : fit.info.history) best_logged = std::min(best_logged, e.val_obj);
  CHECK(fit.info.best_val == doctest::Approx(best_logged));
  CHECK(fit.info.best_epoch < static_cast<int>(fit.info.history.size()) - 1);
}

TEST_CASE("training objective at the returned checkpoint does not exceed initialization") {
  Rng rng(53);
  Panel p = base_panel(100, 0, rng);
  for (auto& o : p.observations) o.log_wage = 2.0 * head_fraction_hi(o) + 0.4 * rng.normal();
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  EncoderParams init = small_init(cfg, 54);
  FineTuneConfig ft;
  ft.max_epochs = 15;
  ft.seed = 55;

  auto train_mse = [&](const WageModel& m) {
    auto idx = all_indices(p);
    WagePredictions wp = predict_wage(m, p, idx);
    double s = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& o = p.observations[i];
      double mu = o.group == 1 ? wp.mu1[i] : wp.mu0[i];
      s += o.weight * (o.log_wage - mu) * (o.log_wage - mu);
      sw += o.weight;
    }
    return s / sw;
  };

  FineTuneConfig zero = ft;
  zero.max_epochs = 0;
  WageFit at_init = supervised_finetune(p, init, zero);
  WageFit fitted = supervised_finetune(p, init, ft);
  CHECK(train_mse(fitted.model) <= train_mse(at_init.model));
}
