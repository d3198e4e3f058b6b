#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "debiascope/graph.hpp"
#include "debiascope/panel.hpp"
#include "debiascope/rng.hpp"
#include "debiascope/tensor.hpp"

namespace debiascope::encoder {

struct EncoderConfig {
  int dim = 16;
  int layers = 2;
  int heads = 2;
  int ff_hidden = 32;
  int vocab_size = 0;
  int max_seq_len = 64;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;

  // Appendix-style configuration: D=64, 4 layers, 4 heads, 256 ff units.
  static EncoderConfig paper_scale(int vocab_size);
  static EncoderConfig desk_scale(int vocab_size);
};

// Weights of the sequence encoder lambda: X -> R^D. Pre-norm causal
// transformer over (occupation, year) tokens with learned token,
// position and year-offset embeddings; the final-position state after
// the closing layer norm is the representation.
struct EncoderParams {
  EncoderConfig config;
  nd::NamedTensors tensors;
};

EncoderParams init_encoder_params(const EncoderConfig& cfg, Rng& rng);

// Node handles of an encoder subgraph. Inputs bound per batch:
// "tokens", "positions", "years" (B,T index tensors) and "last_pos" (B).
struct EncoderNodes {
  int hidden = -1;  // (B,T,D) hidden states after the final layer norm
  int rep = -1;     // (B,D) representation = hidden at the last position
};

EncoderNodes build_encoder(nd::Graph& g, const EncoderParams& params);

// Padded index tensors for a batch of worker histories.
struct HistoryBatch {
  nd::IndexTensor tokens;
  nd::IndexTensor positions;
  nd::IndexTensor years;
  nd::IndexTensor last_pos;
  std::int64_t batch = 0;
  std::int64_t max_len = 0;
};

inline constexpr int kYearBuckets = 64;

HistoryBatch make_history_batch(const panel::Panel& p, std::span<const std::size_t> idx,
                                const EncoderConfig& cfg);
void bind_history_batch(nd::Graph& g, const HistoryBatch& b);

// Evaluates representations for histories of one panel with a cached
// graph. Deterministic; safe to use from one thread per runner.
class EncoderRunner {
 public:
  explicit EncoderRunner(EncoderParams params);

  std::vector<double> embed(const panel::Panel& p, std::size_t index);  // length D
  // Row-major (n x D) table for the given observations.
  nd::Tensor embed_all(const panel::Panel& p, std::span<const std::size_t> idx, std::size_t chunk = 512);
  nd::Tensor embed_all(const panel::Panel& p, std::size_t chunk = 512);

  const EncoderParams& params() const { return params_; }

 private:
  EncoderParams params_;
  nd::Graph graph_;
  EncoderNodes nodes_;
};

std::vector<double> embed_history(const EncoderParams& params, const panel::Panel& p, std::size_t index);

// Prediction-level ensembling: the arithmetic mean of member
// predictions (wage models average predicted wages, propensity models
// average probabilities).
template <typename Member, typename PredictFn>
double ensemble_predict(const std::vector<Member>& members, PredictFn&& predict) {
  if (members.empty()) throw std::invalid_argument("ensemble_predict: empty ensemble");
  double s = 0.0;
  for (const auto& m : members) s += predict(m);
  return s / static_cast<double>(members.size());
}

struct PretrainConfig {
  double lr = 1e-3;
  int max_epochs = 50;
  int patience = 5;
  int batch_size = 256;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  EncoderParams params;           // best validation checkpoint
  nd::NamedTensors output_head;   // next-occupation softmax head at the same checkpoint
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = 0;             // 0 = initialization
  double best_val_perplexity = 0.0;
};

// Next-occupation pretraining: cross-entropy of the occupation at t+1
// given the prefix up to t, early-stopped on held-out perplexity.
PretrainResult pretrain_next_occupation(const panel::Panel& corpus, const EncoderConfig& cfg,
                                        const PretrainConfig& tc);

void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);
// Throws if the file's config disagrees with `expected`.
EncoderParams load_checkpoint(const std::string& path, const EncoderConfig& expected);

}  // namespace debiascope::encoder
