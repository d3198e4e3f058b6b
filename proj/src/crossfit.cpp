#include <cmath>
#include <stdexcept>

#include "debiascope/estimators.hpp"
#include "debiascope/stats.hpp"

namespace debiascope::estimators {

using finetune::FineTuneConfig;
using finetune::Method;
using panel::Panel;

namespace {

constexpr std::uint64_t kFoldSeed = 0xf01d;
constexpr std::uint64_t kMetricM = 0x6d;
constexpr std::uint64_t kMetricE = 0x65;
constexpr std::uint64_t kMethodFit = 0x99;

FineTuneConfig fold_cfg(const FineTuneConfig& base, std::uint64_t seed, int fold,
                        std::uint64_t salt, int member) {
  FineTuneConfig c = base;
  Rng r = Rng::derive(seed, {static_cast<std::uint64_t>(fold), salt, static_cast<std::uint64_t>(member)});
  c.seed = r.next();
  return c;
}

encoder::EncoderParams fold_init(const CrossfitConfig& cfg, int fold, std::uint64_t salt, int member) {
  if (!cfg.pretrained.empty())
    return cfg.pretrained[static_cast<std::size_t>(member) % cfg.pretrained.size()];
  Rng r = Rng::derive(cfg.seed, {static_cast<std::uint64_t>(fold), salt, 0x1234u,
                                 static_cast<std::uint64_t>(member)});
  return encoder::init_encoder_params(cfg.enc, r);
}

}  // namespace

FoldPlan make_fold_plan(const Panel& p, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_fold_plan: K must be at least 2");
  FoldPlan plan;
  plan.folds = split_folds(p, k, Rng::derive(seed, {kFoldSeed}).next());
  plan.eval_idx.resize(static_cast<std::size_t>(k));
  plan.train_idx.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < p.size(); ++i) {
    int f = plan.folds.fold(p.observations[i].unit_id);
    for (int kk = 0; kk < k; ++kk)
      (kk == f ? plan.eval_idx : plan.train_idx)[static_cast<std::size_t>(kk)].push_back(i);
  }
  for (int kk = 0; kk < k; ++kk) {
    bool has0 = false, has1 = false;
    for (std::size_t i : plan.eval_idx[static_cast<std::size_t>(kk)]) {
      has0 = has0 || p.observations[i].group == 0;
      has1 = has1 || p.observations[i].group == 1;
    }
    if (!has0 || !has1)
      throw std::invalid_argument("crossfit: fold " + std::to_string(kk) +
                                  " contains a single group; use fewer folds or more data");
  }
  return plan;
}

SharedNuisances fit_shared_nuisances(const Panel& p, const FoldPlan& plan, const CrossfitConfig& cfg) {
  using namespace finetune;
  const int members = cfg.ensemble_members;
  const int k = static_cast<int>(plan.eval_idx.size());
  SharedNuisances out;
  out.m.assign(p.size(), 0.0);
  out.e.assign(p.size(), 0.0);
  out.m_models.resize(static_cast<std::size_t>(k));
  out.e_models.resize(static_cast<std::size_t>(k));
  for (int fold = 0; fold < k; ++fold) {
    Panel train = subset(p, plan.train_idx[static_cast<std::size_t>(fold)]);
    const auto& eval = plan.eval_idx[static_cast<std::size_t>(fold)];
    std::vector<double> m_acc(eval.size(), 0.0), e_acc(eval.size(), 0.0);
    for (int mem = 0; mem < members; ++mem) {
      WageFit mf = pooled_wage_finetune(train, fold_init(cfg, fold, kMetricM, mem),
                                        fold_cfg(cfg.ft, cfg.seed, fold, kMetricM, mem));
      PropensityFit ef = propensity_finetune(train, fold_init(cfg, fold, kMetricE, mem),
                                             fold_cfg(cfg.ft, cfg.seed, fold, kMetricE, mem));
      std::vector<double> mp = predict_wage(mf.model, p, eval).mu0;
      std::vector<double> ep = predict_propensity(ef.model, p, eval);
      for (std::size_t j = 0; j < eval.size(); ++j) {
        m_acc[j] += mp[j];
        e_acc[j] += ep[j];
      }
      out.m_models[static_cast<std::size_t>(fold)].push_back(std::move(mf.model));
      out.e_models[static_cast<std::size_t>(fold)].push_back(std::move(ef.model));
    }
    for (std::size_t j = 0; j < eval.size(); ++j) {
      out.m[eval[j]] = m_acc[j] / members;
      out.e[eval[j]] = e_acc[j] / members;
    }
  }
  return out;
}

CrossfitValues fit_method_values(const Panel& p, const FoldPlan& plan, const CrossfitConfig& cfg,
                                 const SharedNuisances& shared) {
  using namespace finetune;
  const int members = cfg.ensemble_members;
  const int k = static_cast<int>(plan.eval_idx.size());

  CrossfitValues values;
  values.fold.assign(p.size(), -1);
  values.mu0.assign(p.size(), 0.0);
  values.mu1.assign(p.size(), 0.0);
  values.e = shared.e;
  values.m = shared.m;
  values.e_metric = shared.e;
  values.tau.assign(p.size(), 0.0);
  values.has_group_heads = cfg.method != Method::kDifference;

  for (int fold = 0; fold < k; ++fold) {
    Panel train = subset(p, plan.train_idx[static_cast<std::size_t>(fold)]);
    const auto& eval = plan.eval_idx[static_cast<std::size_t>(fold)];
    for (std::size_t i : eval) values.fold[i] = fold;

    if (cfg.method == Method::kDifference) {
      std::vector<double> tau_acc(eval.size(), 0.0);
      for (int mem = 0; mem < members; ++mem) {
        DifferenceFit df = difference_finetune(
            train, shared.m_models[static_cast<std::size_t>(fold)][static_cast<std::size_t>(mem)],
            shared.e_models[static_cast<std::size_t>(fold)][static_cast<std::size_t>(mem)],
            fold_init(cfg, fold, kMethodFit, mem), fold_cfg(cfg.ft, cfg.seed, fold, kMethodFit, mem));
        std::vector<double> tp = predict_difference(df.model, p, eval);
        for (std::size_t j = 0; j < eval.size(); ++j) tau_acc[j] += tp[j];
      }
      for (std::size_t j = 0; j < eval.size(); ++j) values.tau[eval[j]] = tau_acc[j] / members;
      continue;
    }

    std::vector<double> m0_acc(eval.size(), 0.0), m1_acc(eval.size(), 0.0), e_acc(eval.size(), 0.0);
    bool own_e = false;
    for (int mem = 0; mem < members; ++mem) {
      FineTuneConfig fc = fold_cfg(cfg.ft, cfg.seed, fold, kMethodFit, mem);
      encoder::EncoderParams init = fold_init(cfg, fold, kMethodFit, mem);
      WagePredictions wp;
      if (cfg.method == Method::kSupervised) {
        WageFit wf = supervised_finetune(train, init, fc);
        wp = predict_wage(wf.model, p, eval);
      } else {
        MultitaskFit mf = cfg.method == Method::kMultitask ? multitask_finetune(train, init, fc)
                                                           : projection_finetune(train, init, fc);
        wp = predict_wage(mf.wage, p, eval);
        std::vector<double> ep = predict_propensity(mf.propensity, p, eval);
        for (std::size_t j = 0; j < eval.size(); ++j) e_acc[j] += ep[j];
        own_e = true;
      }
      for (std::size_t j = 0; j < eval.size(); ++j) {
        m0_acc[j] += wp.mu0[j];
        m1_acc[j] += wp.mu1[j];
      }
    }
    for (std::size_t j = 0; j < eval.size(); ++j) {
      values.mu0[eval[j]] = m0_acc[j] / members;
      values.mu1[eval[j]] = m1_acc[j] / members;
      values.tau[eval[j]] = (m1_acc[j] - m0_acc[j]) / members;
      // multitask and projection carry their own propensity head; AIPW uses it
      if (own_e) values.e[eval[j]] = e_acc[j] / members;
    }
  }
  return values;
}

CrossfitResult crossfit_estimate(const Panel& p, const CrossfitConfig& cfg) {
  if (cfg.ensemble_members < 1) throw std::invalid_argument("crossfit_estimate: ensemble must have M >= 1");
  if (cfg.method == Method::kDifference && cfg.estimator == EstimatorKind::kAipw)
    throw std::invalid_argument(
        "crossfit_estimate: the difference method has no per-group wage heads; AIPW is not defined for it");
  p.validate();
  FoldPlan plan = make_fold_plan(p, cfg.k_folds, cfg.seed);
  SharedNuisances shared = fit_shared_nuisances(p, plan, cfg);
  CrossfitValues values = fit_method_values(p, plan, cfg, shared);
  return estimate_from_values(p, std::move(values), cfg);
}

CrossfitResult estimate_from_values(const Panel& p, CrossfitValues values, const CrossfitConfig& cfg) {
  const std::size_t n = p.size();
  if (values.e_metric.empty()) values.e_metric = values.e;
  std::vector<double> y(n), a(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = p.observations[i].log_wage;
    a[i] = static_cast<double>(p.observations[i].group);
    w[i] = p.observations[i].weight;
  }

  CrossfitResult res;
  res.report.method = finetune::method_name(cfg.method);
  res.report.estimator = estimator_name(cfg.estimator);
  res.report.k_folds = cfg.k_folds;
  res.report.n = static_cast<long>(n);
  res.report.n_treated = static_cast<long>(p.count_group(1));
  res.report.wg = raw_gap(y, a, w);

  std::vector<double> phi;
  if (cfg.estimator == EstimatorKind::kOutcomeOnly) {
    res.report.uwg = outcome_only_estimate(a, w, values.tau);
    double sw = 0.0, sw1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sw += w[i];
      sw1 += w[i] * a[i];
    }
    const double p1 = sw1 / sw;
    phi.resize(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = a[i] * (values.tau[i] - res.report.uwg) / p1;
  } else {
    AipwResult aipw = aipw_estimate(y, a, w, values.mu0, values.e);
    res.report.uwg = aipw.estimate;
    phi = std::move(aipw.influence);
  }
  res.report.explained = res.report.wg - res.report.uwg;
  res.report.ratio = std::exp(res.report.uwg);
  res.report.se_if = influence_se(phi, w);
  res.report.rlearner = rlearner_metric(y, a, w, values.m, values.e_metric, values.tau);

  // test-set bootstrap of the gap estimate with all models fixed
  if (cfg.estimator == EstimatorKind::kOutcomeOnly) {
    res.report.se_boot = testset_bootstrap_se(n, cfg.bootstrap_b, cfg.seed, [&](std::span<const std::size_t> idx) {
      double s = 0.0, sw = 0.0;
      for (std::size_t i : idx) {
        if (a[i] != 1.0) continue;
        s += w[i] * values.tau[i];
        sw += w[i];
      }
      return sw > 0.0 ? s / sw : 0.0;
    });
  } else {
    res.report.se_boot = testset_bootstrap_se(n, cfg.bootstrap_b, cfg.seed, [&](std::span<const std::size_t> idx) {
      double s = 0.0, sw1 = 0.0;
      for (std::size_t i : idx) {
        double odds = values.e[i] / (1.0 - values.e[i]);
        s += w[i] * (a[i] - (1.0 - a[i]) * odds) * (y[i] - values.mu0[i]);
        sw1 += w[i] * a[i];
      }
      return sw1 > 0.0 ? s / sw1 : 0.0;
    });
  }

  res.contributions = values.tau;
  res.values = std::move(values);
  return res;
}

}  // namespace debiascope::estimators
