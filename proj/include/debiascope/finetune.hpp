#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "debiascope/encoder.hpp"
#include "debiascope/panel.hpp"
#include "debiascope/training.hpp"

namespace debiascope::finetune {

enum class Method { kSupervised, kMultitask, kProjection, kDifference };

std::string method_name(Method m);
Method method_from_string(const std::string& s);

struct FineTuneConfig {
  double eta = 1.0;            // multitask trade-off weight
  double lr = 1e-3;
  int max_epochs = 200;
  int patience = 5;
  int batch_size = 256;
  double val_fraction = 0.10;  // unit-level validation split
  int head_hidden = 64;        // width of the two-layer feed-forward heads
  bool propensity_use_z = false;
  bool freeze_encoder = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Group wage model mu_a(lambda(x), z) = rho_a(lambda(x)) + beta_a' z,
// with rho_a a two-layer feed-forward network over the shared
// representation. `pooled` models carry a single head m(x) for the
// group-averaged conditional wage.
struct WageModel {
  encoder::EncoderParams enc;
  nd::NamedTensors heads;
  bool pooled = false;

  std::uint64_t hash() const;
};

// e(lambda(x)) = sigma(gamma' lambda(x)); optionally + gamma_z' z.
struct PropensityModel {
  encoder::EncoderParams enc;
  nd::NamedTensors head;
  bool uses_z = false;

  std::uint64_t hash() const;
};

// tau(lambda(x), z) = rho(lambda(x)) + beta' z over its own representation.
struct DifferenceModel {
  encoder::EncoderParams enc;
  nd::NamedTensors head;

  std::uint64_t hash() const;
};

struct FitInfo {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<std::string> phases;            // projection: wage, propensity, wage
  std::vector<training::EpochLog> history;    // concatenated across phases
  int best_epoch = 0;
  double best_val = 0.0;
  std::uint64_t param_hash = 0;
  std::vector<std::string> warnings;
};

struct WageFit {
  WageModel model;
  FitInfo info;
};
struct PropensityFit {
  PropensityModel model;
  FitInfo info;
};
struct MultitaskFit {
  WageModel wage;
  PropensityModel propensity;
  FitInfo info;
};
struct DifferenceFit {
  DifferenceModel model;
  FitInfo info;
};

// Supervised fine-tuning: weighted wage MSE over the representation
// and both group heads jointly, early-stopped on a validation split.
WageFit supervised_finetune(const panel::Panel& p, const encoder::EncoderParams& init,
                            const FineTuneConfig& cfg);

// Same objective with a single pooled head for m(x) = E[Y | X = x].
WageFit pooled_wage_finetune(const panel::Panel& p, const encoder::EncoderParams& init,
                             const FineTuneConfig& cfg);

// Weighted binary cross-entropy on group membership.
PropensityFit propensity_finetune(const panel::Panel& p, const encoder::EncoderParams& init,
                                  const FineTuneConfig& cfg);

// Joint wage + eta * propensity objective over a shared representation.
MultitaskFit multitask_finetune(const panel::Panel& p, const encoder::EncoderParams& init,
                                const FineTuneConfig& cfg);

// Alternating convergence: wage to convergence, propensity to
// convergence, wage again, then stop.
MultitaskFit projection_finetune(const panel::Panel& p, const encoder::EncoderParams& init,
                                 const FineTuneConfig& cfg);

// R-learner style difference fit against frozen nuisances m_hat and
// e_hat; only tau's parameters move.
DifferenceFit difference_finetune(const panel::Panel& p, const WageModel& m_hat,
                                  const PropensityModel& e_hat,
                                  const encoder::EncoderParams& init, const FineTuneConfig& cfg);

// Same fit against precomputed nuisance values aligned with the panel
// (also the entry point for oracle nuisances).
DifferenceFit difference_finetune(const panel::Panel& p, std::span<const double> m_values,
                                  std::span<const double> e_values,
                                  const encoder::EncoderParams& init, const FineTuneConfig& cfg);

struct WagePredictions {
  std::vector<double> mu0;
  std::vector<double> mu1;  // equals mu0 for pooled models
};

WagePredictions predict_wage(const WageModel& m, const panel::Panel& p,
                             std::span<const std::size_t> idx);
std::vector<double> predict_propensity(const PropensityModel& m, const panel::Panel& p,
                                       std::span<const std::size_t> idx);
std::vector<double> predict_difference(const DifferenceModel& m, const panel::Panel& p,
                                       std::span<const std::size_t> idx);

std::vector<std::size_t> all_indices(const panel::Panel& p);

}  // namespace debiascope::finetune
