#pragma once

#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "debiascope/finetune.hpp"
#include "debiascope/panel.hpp"

namespace debiascope::estimators {

// Plug-in decomposition of the raw gap into explained and unexplained
// parts. All means are weighted; the identity
//   unexplained + explained == raw_plugin
// holds exactly for any fitted wage functions.
struct Decomposition {
  double unexplained = 0.0;
  double explained = 0.0;
  double raw_plugin = 0.0;
};

Decomposition decompose_gap(std::span<const double> a, std::span<const double> w,
                            std::span<const double> mu0, std::span<const double> mu1);

// Weighted mean of Y over A=1 minus over A=0.
double raw_gap(std::span<const double> y, std::span<const double> a, std::span<const double> w);

// Mean of diff = mu1 - mu0 (or tau) over treated observations only.
double outcome_only_estimate(std::span<const double> a, std::span<const double> w,
                             std::span<const double> diff);

struct AipwResult {
  double estimate = 0.0;
  std::vector<double> influence;  // per-observation ATT influence values
};

// Augmented inverse probability weighting for the gap on the treated:
//   (1/sum w_i A_i) sum_i w_i (A_i - (1-A_i) e_i/(1-e_i)) (Y_i - mu0_i).
// Influence values use the treated share as the plug-in for P(A=1);
// their weighted mean is zero at the point estimate by construction.
AipwResult aipw_estimate(std::span<const double> y, std::span<const double> a,
                         std::span<const double> w, std::span<const double> mu0,
                         std::span<const double> e);

// Held-out residual-on-residual objective:
//   weighted mean of [(y - m) - (a - e) tau]^2.
double rlearner_metric(std::span<const double> y, std::span<const double> a,
                       std::span<const double> w, std::span<const double> m,
                       std::span<const double> e, std::span<const double> tau);

// Same, refusing evaluation rows that overlap the difference model's
// training units.
double rlearner_metric_checked(const panel::Panel& heldout, std::span<const double> m,
                               std::span<const double> e, std::span<const double> tau,
                               const std::set<std::string>& tau_training_units);

// sqrt(weighted sample variance / n).
double influence_se(std::span<const double> phi, std::span<const double> w);

// Test-set bootstrap: models stay fixed; observations are resampled
// with replacement and the statistic is recomputed per replicate.
// Replicate b draws from a stream derived from (seed, b), so replicates
// are pairable across statistics and independent of thread schedule.
std::vector<double> bootstrap_replicates(std::size_t n, int B, std::uint64_t seed,
                                         const std::function<double(std::span<const std::size_t>)>& stat);
double testset_bootstrap_se(std::size_t n, int B, std::uint64_t seed,
                            const std::function<double(std::span<const std::size_t>)>& stat);

// McFadden pseudo R^2 against the coin-flip null (which assigns 1/2 to
// every observation): 1 - NLL_model / NLL_null.
double pseudo_r2(std::span<const double> labels, std::span<const double> probs,
                 std::span<const double> w);
double wage_r2(std::span<const double> targets, std::span<const double> preds,
               std::span<const double> w);

enum class EstimatorKind { kOutcomeOnly, kAipw };
std::string estimator_name(EstimatorKind k);
EstimatorKind estimator_from_string(const std::string& s);

struct GapReport {
  double wg = 0.0;         // raw (unadjusted) weighted wage gap
  double uwg = 0.0;        // unexplained gap, by the chosen estimator
  double explained = 0.0;  // wg - uwg
  double ratio = 1.0;      // exp(uwg)
  double se_boot = 0.0;
  double se_if = 0.0;
  double rlearner = 0.0;
  long n = 0;
  long n_treated = 0;
  int k_folds = 0;
  double clip_low = 0.0;
  double clip_high = 1.0;
  std::string estimator;
  std::string method;
};

std::string gap_report_json(const GapReport& r);
GapReport gap_report_from_json(const std::string& text);
std::string gap_report_csv_header();
std::string gap_report_csv_row(const GapReport& r);

// Cross-fitted per-observation values on an evaluation panel. Every
// value at row i comes from models fitted without unit i's fold.
struct CrossfitValues {
  std::vector<int> fold;
  std::vector<double> mu0, mu1;  // group wage heads (unset for difference)
  std::vector<double> e;         // propensity used by AIPW
  std::vector<double> m;         // pooled conditional wage, metric nuisance
  std::vector<double> e_metric;  // supervised-fit propensity, metric nuisance
  std::vector<double> tau;       // effect values: mu1 - mu0 or the difference head
  bool has_group_heads = false;
};

struct CrossfitConfig {
  int k_folds = 5;
  finetune::Method method = finetune::Method::kDifference;
  EstimatorKind estimator = EstimatorKind::kOutcomeOnly;
  finetune::FineTuneConfig ft;
  encoder::EncoderConfig enc;  // architecture for fold fits
  // Pretrained encoder starting points; member m of an ensemble starts
  // from pretrained[m % size]. Empty: fresh random initialization.
  std::vector<encoder::EncoderParams> pretrained;
  int ensemble_members = 1;
  int bootstrap_b = 200;
  std::uint64_t seed = 0;
};

struct CrossfitResult {
  CrossfitValues values;
  GapReport report;
  std::vector<double> contributions;  // per-observation effect values entering the estimate
};

// Fold bookkeeping shared by crossfit_estimate and the grid runner.
struct FoldPlan {
  panel::FoldAssignment folds;
  std::vector<std::vector<std::size_t>> eval_idx;
  std::vector<std::vector<std::size_t>> train_idx;
};
FoldPlan make_fold_plan(const panel::Panel& p, int k, std::uint64_t seed);

// Metric nuisances m-hat (pooled wage) and e-hat (propensity), both by
// supervised fine-tuning. They back the R-learner metric for every
// method and serve as the difference method's frozen inputs.
struct SharedNuisances {
  std::vector<double> m;                                      // cross-fitted values
  std::vector<double> e;
  std::vector<std::vector<finetune::WageModel>> m_models;     // [fold][member]
  std::vector<std::vector<finetune::PropensityModel>> e_models;
};
SharedNuisances fit_shared_nuisances(const panel::Panel& p, const FoldPlan& plan,
                                     const CrossfitConfig& cfg);

CrossfitValues fit_method_values(const panel::Panel& p, const FoldPlan& plan,
                                 const CrossfitConfig& cfg, const SharedNuisances& shared);

// Fold-wise nuisance fitting and pooled estimation. Nuisances for fold
// k are fitted on the other folds only; the pooled estimate uses every
// observation once and is invariant to fold relabeling.
CrossfitResult crossfit_estimate(const panel::Panel& p, const CrossfitConfig& cfg);

// Assembles estimates, standard errors and the metric from
// already-computed per-observation values (also the oracle-nuisance
// entry point).
CrossfitResult estimate_from_values(const panel::Panel& p, CrossfitValues values,
                                    const CrossfitConfig& cfg);

}  // namespace debiascope::estimators
