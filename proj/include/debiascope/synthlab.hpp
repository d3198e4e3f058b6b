#pragma once

#include <cstdint>
#include <vector>

#include "debiascope/encoder.hpp"
#include "debiascope/panel.hpp"
#include "debiascope/tensor.hpp"

namespace debiascope::synthlab {

// Synthetic career-history corpus from a seeded occupation Markov
// chain. Stands in for the survey histories the semi-synthetic study
// builds on; wages and groups are placeholders until simulation.
struct CorpusSpec {
  std::size_t units = 2000;
  int n_occupations = 30;  // in addition to the 7 status tokens
  int min_len = 4;
  int max_len = 18;
  double status_prob = 0.06;  // chance that a year is a non-work status
  std::uint64_t seed = 0;
};

panel::Panel make_markov_corpus(const CorpusSpec& spec);

// Masks u (group model) and v (wage model): each selects m/2 of m
// representation indices; their overlap is round(pi * m/2) indices
// drawn from the group mask.
void sample_masks(int m, double pi, std::uint64_t seed, std::vector<int>* u, std::vector<int>* v);

// One ground-truth data generating process.
struct SyntheticSpec {
  double tau = 0.0;      // true unexplained gap
  double pi = 1.0;       // shared proportion of the representation
  double sigma2 = 0.5;   // outcome noise variance
  int rep_dim = 32;      // m, even
  double coef_sd = 0.2;  // beta_j ~ N(0, coef_sd^2)
  std::uint64_t seed = 0;
  // Drawn from the seed when empty; may be pinned by the caller.
  std::vector<int> u, v;
  std::vector<double> beta;
};

// Oracle values attached to a simulated dataset, aligned with the
// panel rows.
struct SyntheticTruth {
  double tau = 0.0;
  std::vector<int> u, v;
  std::vector<double> beta;
  std::vector<double> mu0, mu1, e, m;  // exact nuisance values per row
};

struct SyntheticDataset {
  panel::Panel panel;
  SyntheticTruth truth;
};

// Simulates A ~ Bern(sigma(sum_j u_j beta_j rep_j)) and
// Y = tau * A + sum_j v_j beta_j rep_j + eps over the corpus
// histories, with eps ~ N(0, sigma2).
SyntheticDataset simulate_dataset(const nd::Tensor& rep_table, const panel::Panel& corpus,
                                  const SyntheticSpec& spec);

struct GroundTruthEncoder {
  encoder::EncoderParams params;  // frozen lambda-star
  nd::Tensor rep_table;           // one row per corpus observation, m columns
};

// Builds lambda-star by overfitting a widened encoder on the corpus
// wages (no early stopping), then freezing it and tabulating its
// representations. scale_factor widens the feed-forward blocks.
GroundTruthEncoder make_ground_truth_encoder(const panel::Panel& corpus, int rep_dim,
                                             double scale_factor, std::uint64_t seed,
                                             int overfit_epochs = 15);

// Finite covariate world for exact enumeration of the omitted
// variable bias.
struct DiscreteWorld {
  std::vector<double> prob;                 // P(X = x_s), sums to 1
  std::vector<double> mu0, mu1;             // E[Y | A=a, X]
  std::vector<double> e;                    // P(A=1 | X), strictly inside (0,1)
  std::vector<std::vector<double>> lambda;  // representation value per state

  std::size_t states() const { return prob.size(); }
  void validate() const;
};

struct OvbBreakdown {
  double closed_form = 0.0;  // covariance-form summation
  double direct = 0.0;       // UWG(lambda) - UWG by enumeration
  double wg = 0.0;
  double uwg = 0.0;
  double uwg_lambda = 0.0;
};

// Exact omitted variable bias by both routes; the two agree by the
// population identity.
OvbBreakdown ovb_exact(const DiscreteWorld& world);

// Random worlds for property tests: up to max_states states and a
// representation that collapses them into fewer cells.
DiscreteWorld random_world(std::size_t max_states, Rng& rng);

}  // namespace debiascope::synthlab
