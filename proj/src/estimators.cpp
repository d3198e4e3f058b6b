#include "debiascope/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "debiascope/losses.hpp"
#include "debiascope/rng.hpp"
#include "debiascope/stats.hpp"

namespace debiascope::estimators {

namespace {

void check_lengths(std::initializer_list<std::size_t> lens, const char* what) {
  std::size_t first = *lens.begin();
  if (first == 0) throw std::invalid_argument(std::string(what) + ": empty input");
  for (std::size_t l : lens)
    if (l != first) throw std::invalid_argument(std::string(what) + ": input length mismatch");
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Decomposition decompose_gap(std::span<const double> a, std::span<const double> w,
                            std::span<const double> mu0, std::span<const double> mu1) {
  check_lengths({a.size(), w.size(), mu0.size(), mu1.size()}, "decompose_gap");
  double sw1 = 0.0, sw0 = 0.0;
  double s1_mu1 = 0.0, s1_mu0 = 0.0, s0_mu0 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 1.0) {
      sw1 += w[i];
      s1_mu1 += w[i] * mu1[i];
      s1_mu0 += w[i] * mu0[i];
    } else {
      sw0 += w[i];
      s0_mu0 += w[i] * mu0[i];
    }
  }
  if (sw1 <= 0.0 || sw0 <= 0.0) throw std::invalid_argument("decompose_gap: a group is empty");
  Decomposition d;
  d.unexplained = s1_mu1 / sw1 - s1_mu0 / sw1;
  d.explained = s1_mu0 / sw1 - s0_mu0 / sw0;
  d.raw_plugin = d.unexplained + d.explained;
  return d;
}

double raw_gap(std::span<const double> y, std::span<const double> a, std::span<const double> w) {
  check_lengths({y.size(), a.size(), w.size()}, "raw_gap");
  double s1 = 0.0, sw1 = 0.0, s0 = 0.0, sw0 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (a[i] == 1.0) {
      s1 += w[i] * y[i];
      sw1 += w[i];
    } else {
      s0 += w[i] * y[i];
      sw0 += w[i];
    }
  }
  if (sw1 <= 0.0 || sw0 <= 0.0) throw std::invalid_argument("raw_gap: a group is empty");
  return s1 / sw1 - s0 / sw0;
}

double outcome_only_estimate(std::span<const double> a, std::span<const double> w,
                             std::span<const double> diff) {
  check_lengths({a.size(), w.size(), diff.size()}, "outcome_only_estimate");
  double s = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != 1.0) continue;
    s += w[i] * diff[i];
    sw += w[i];
  }
  if (sw <= 0.0) throw std::invalid_argument("outcome_only_estimate: no treated observations");
  return s / sw;
}

AipwResult aipw_estimate(std::span<const double> y, std::span<const double> a,
                         std::span<const double> w, std::span<const double> mu0,
                         std::span<const double> e) {
  check_lengths({y.size(), a.size(), w.size(), mu0.size(), e.size()}, "aipw_estimate");
  double sw = 0.0, sw1 = 0.0, s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(e[i] > 0.0 && e[i] < 1.0))
      throw std::invalid_argument(
          "aipw_estimate: propensity outside (0,1) at observation " + std::to_string(i) +
          "; trim the sample first (clip_by_propensity)");
    sw += w[i];
    sw1 += w[i] * a[i];
  }
  if (sw1 <= 0.0) throw std::invalid_argument("aipw_estimate: no treated observations");
  for (std::size_t i = 0; i < y.size(); ++i) {
    double odds = e[i] / (1.0 - e[i]);
    s += w[i] * (a[i] - (1.0 - a[i]) * odds) * (y[i] - mu0[i]);
  }
  AipwResult r;
  r.estimate = s / sw1;
  const double p1 = sw1 / sw;  // treated share as the plug-in for P(A=1)
  r.influence.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double odds = e[i] / (1.0 - e[i]);
    r.influence[i] =
        ((a[i] - (1.0 - a[i]) * odds) * (y[i] - mu0[i]) - a[i] * r.estimate) / p1;
  }
  return r;
}

double rlearner_metric(std::span<const double> y, std::span<const double> a,
                       std::span<const double> w, std::span<const double> m,
                       std::span<const double> e, std::span<const double> tau) {
  check_lengths({y.size(), a.size(), w.size(), m.size(), e.size(), tau.size()}, "rlearner_metric");
  double s = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double r = (y[i] - m[i]) - (a[i] - e[i]) * tau[i];
    s += w[i] * r * r;
    sw += w[i];
  }
  if (sw <= 0.0) throw std::invalid_argument("rlearner_metric: weights sum to zero");
  return s / sw;
}

double rlearner_metric_checked(const panel::Panel& heldout, std::span<const double> m,
                               std::span<const double> e, std::span<const double> tau,
                               const std::set<std::string>& tau_training_units) {
  std::vector<double> y(heldout.size()), a(heldout.size()), w(heldout.size());
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const auto& o = heldout.observations[i];
    if (tau_training_units.count(o.unit_id))
      throw std::logic_error("rlearner_metric: contract violation, held-out unit " + o.unit_id +
                             " was used to train the difference model");
    y[i] = o.log_wage;
    a[i] = static_cast<double>(o.group);
    w[i] = o.weight;
  }
  return rlearner_metric(y, a, w, m, e, tau);
}

double influence_se(std::span<const double> phi, std::span<const double> w) {
  if (phi.size() < 2) throw std::invalid_argument("influence_se: need at least 2 observations");
  return std::sqrt(weighted_variance(phi, w) / static_cast<double>(phi.size()));
}

std::vector<double> bootstrap_replicates(std::size_t n, int B, std::uint64_t seed,
                                         const std::function<double(std::span<const std::size_t>)>& stat) {
  if (B < 2) throw std::invalid_argument("bootstrap: need at least 2 replicates");
  if (n == 0) throw std::invalid_argument("bootstrap: empty sample");
  std::vector<double> reps(static_cast<std::size_t>(B));
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < B; ++b) {
    Rng rng = Rng::derive(seed, {0xb00u, static_cast<std::uint64_t>(b)});
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::size_t>(rng.below(n));
    reps[static_cast<std::size_t>(b)] = stat(idx);
  }
  return reps;
}

double testset_bootstrap_se(std::size_t n, int B, std::uint64_t seed,
                            const std::function<double(std::span<const std::size_t>)>& stat) {
  std::vector<double> reps = bootstrap_replicates(n, B, seed, stat);
  bool constant = true;
  for (double r : reps) constant = constant && r == reps[0];
  if (constant) return 0.0;  // a degenerate statistic has exactly zero spread
  return std::sqrt(sample_variance(reps));
}

double pseudo_r2(std::span<const double> labels, std::span<const double> probs,
                 std::span<const double> w) {
  check_lengths({labels.size(), probs.size(), w.size()}, "pseudo_r2");
  double nll_model = 0.0, nll_null = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    nll_model += w[i] * nd::bce(probs[i], labels[i]);
    nll_null += w[i] * std::log(2.0);
    sw += w[i];
  }
  if (sw <= 0.0) throw std::invalid_argument("pseudo_r2: weights sum to zero");
  return 1.0 - nll_model / nll_null;
}

double wage_r2(std::span<const double> targets, std::span<const double> preds,
               std::span<const double> w) {
  check_lengths({targets.size(), preds.size(), w.size()}, "wage_r2");
  double ybar = weighted_mean(targets, w);
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sse += w[i] * (targets[i] - preds[i]) * (targets[i] - preds[i]);
    sst += w[i] * (targets[i] - ybar) * (targets[i] - ybar);
  }
  if (sst <= 0.0) throw std::invalid_argument("wage_r2: target variance is zero");
  return 1.0 - sse / sst;
}

std::string estimator_name(EstimatorKind k) {
  return k == EstimatorKind::kOutcomeOnly ? "outcome_only" : "aipw";
}

EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "outcome_only" || s == "outcome-only") return EstimatorKind::kOutcomeOnly;
  if (s == "aipw") return EstimatorKind::kAipw;
  throw std::invalid_argument("unknown estimator '" + s + "'");
}

std::string gap_report_json(const GapReport& r) {
  nlohmann::json j;
  j["wg"] = r.wg;
  j["uwg"] = r.uwg;
  j["explained"] = r.explained;
  j["ratio"] = r.ratio;
  j["se_boot"] = r.se_boot;
  j["se_if"] = r.se_if;
  j["rlearner"] = r.rlearner;
  j["n"] = r.n;
  j["n_treated"] = r.n_treated;
  j["k_folds"] = r.k_folds;
  j["clip_low"] = r.clip_low;
  j["clip_high"] = r.clip_high;
  j["estimator"] = r.estimator;
  j["method"] = r.method;
  return j.dump(2);
}

GapReport gap_report_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  GapReport r;
  r.wg = j.at("wg").get<double>();
  r.uwg = j.at("uwg").get<double>();
  r.explained = j.at("explained").get<double>();
  r.ratio = j.at("ratio").get<double>();
  r.se_boot = j.at("se_boot").get<double>();
  r.se_if = j.at("se_if").get<double>();
  r.rlearner = j.at("rlearner").get<double>();
  r.n = j.at("n").get<long>();
  r.n_treated = j.at("n_treated").get<long>();
  r.k_folds = j.at("k_folds").get<int>();
  r.clip_low = j.at("clip_low").get<double>();
  r.clip_high = j.at("clip_high").get<double>();
  r.estimator = j.at("estimator").get<std::string>();
  r.method = j.at("method").get<std::string>();
  return r;
}

std::string gap_report_csv_header() {
  return "wg,uwg,explained,ratio,se_boot,se_if,rlearner,n,n_treated,k_folds,clip_low,clip_high,estimator,method";
}

std::string gap_report_csv_row(const GapReport& r) {
  std::string out;
  out += fmt17(r.wg) + "," + fmt17(r.uwg) + "," + fmt17(r.explained) + "," + fmt17(r.ratio) + ",";
  out += fmt17(r.se_boot) + "," + fmt17(r.se_if) + "," + fmt17(r.rlearner) + ",";
  out += std::to_string(r.n) + "," + std::to_string(r.n_treated) + "," + std::to_string(r.k_folds) + ",";
  out += fmt17(r.clip_low) + "," + fmt17(r.clip_high) + "," + r.estimator + "," + r.method;
  return out;
}

}  // namespace debiascope::estimators
