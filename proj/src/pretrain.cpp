#include <algorithm>
#include <cmath>
#include <set>

#include "debiascope/encoder.hpp"
#include "debiascope/training.hpp"

namespace debiascope::encoder {

using nd::Graph;
using nd::IndexTensor;
using nd::Tensor;

namespace {

struct TargetBits {
  IndexTensor ids;
  Tensor weights;
};

// Position t predicts the occupation at t+1; padded and final
// positions carry weight zero.
TargetBits next_token_targets(const panel::Panel& p, std::span<const std::size_t> idx, const HistoryBatch& b) {
  const std::int64_t B = b.batch, T = b.max_len;
  std::vector<std::int64_t> ids(static_cast<std::size_t>(B * T), -1);
  Tensor w({B * T});
  for (std::int64_t r = 0; r < B; ++r) {
    const auto& toks = p.observations[idx[static_cast<std::size_t>(r)]].history.tokens;
    const std::int64_t len = static_cast<std::int64_t>(toks.size());
    for (std::int64_t t = 0; t + 1 < len; ++t) {
      ids[static_cast<std::size_t>(r * T + t)] = toks[static_cast<std::size_t>(t + 1)].occ;
      w.data[static_cast<std::size_t>(r * T + t)] = 1.0;
    }
  }
  return {IndexTensor({B * T}, std::move(ids)), std::move(w)};
}

}  // namespace

PretrainResult pretrain_next_occupation(const panel::Panel& corpus, const EncoderConfig& cfg,
                                        const PretrainConfig& tc) {
  cfg.validate();
  if (corpus.observations.empty()) throw std::invalid_argument("pretrain: empty corpus");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus.observations[i].history.length() >= 2) usable.push_back(i);
  if (usable.empty()) throw std::invalid_argument("pretrain: no histories of length >= 2");

  // Unit-level validation split, a deterministic function of the seed.
  std::set<std::string> unit_set;
  for (std::size_t i : usable) unit_set.insert(corpus.observations[i].unit_id);
  std::vector<std::string> units(unit_set.begin(), unit_set.end());
  Rng split_rng = Rng::derive(tc.seed, {0x11});
  split_rng.shuffle(units);
  std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(tc.val_fraction * static_cast<double>(units.size()))));
  if (n_val >= units.size()) n_val = units.size() > 1 ? units.size() - 1 : 0;
  std::set<std::string> val_units(units.begin(), units.begin() + static_cast<std::ptrdiff_t>(n_val));

  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i : usable)
    (val_units.count(corpus.observations[i].unit_id) ? val_idx : train_idx).push_back(i);
  if (train_idx.empty()) train_idx = usable;

  Rng init_rng = Rng::derive(tc.seed, {0x22});
  EncoderParams init = init_encoder_params(cfg, init_rng);

  Graph g;
  EncoderNodes enc = build_encoder(g, init);
  int w_out = g.param("pretrain_head.w", Tensor::randn({cfg.dim, cfg.vocab_size},
                                                       1.0 / std::sqrt(static_cast<double>(cfg.dim)), init_rng));
  int b_out = g.param("pretrain_head.b", Tensor::zeros({cfg.vocab_size}));
  int logits = g.merge_first2(g.add_bias(g.matmul(enc.hidden, w_out), b_out));
  int targets = g.index_input("targets");
  int target_w = g.input("target_w");
  int loss = g.softmax_xent(logits, targets, target_w);

  auto bind_batch = [&](std::span<const std::size_t> batch) {
    HistoryBatch b = make_history_batch(corpus, batch, cfg);
    TargetBits t = next_token_targets(corpus, batch, b);
    bind_history_batch(g, b);
    g.bind_ids("targets", std::move(t.ids));
    g.bind("target_w", std::move(t.weights));
  };

  auto eval_on = [&](const std::vector<std::size_t>& idx) {
    double sum = 0.0, n = 0.0;
    const std::size_t chunk = 512;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
      std::size_t stop = std::min(idx.size(), start + chunk);
      std::span<const std::size_t> part(idx.data() + start, stop - start);
      bind_batch(part);
      g.forward();
      double valid = 0.0;
      for (std::size_t i : part) valid += static_cast<double>(corpus.observations[i].history.length() - 1);
      sum += g.value(loss).data[0] * valid;
      n += valid;
    }
    return n > 0.0 ? sum / n : 0.0;
  };

  const std::vector<std::size_t>& held = val_idx.empty() ? train_idx : val_idx;
  Rng order_rng = Rng::derive(tc.seed, {0x33});
  training::TrainControl ctl{tc.lr, tc.max_epochs, tc.patience, tc.batch_size};
  training::LoopResult fit = run_training(g, loss, train_idx, ctl, g.params(), bind_batch,
                                          [&] { return eval_on(held); }, order_rng);

  PretrainResult out;
  out.params.config = cfg;
  for (const auto& [name, tensor] : fit.best_params) {
    if (name.rfind("pretrain_head.", 0) == 0) out.output_head[name] = tensor;
    else out.params.tensors[name] = tensor;
  }
  out.best_epoch = fit.best_epoch;
  out.best_val_perplexity = std::exp(fit.best_val);
  for (const auto& e : fit.log) {
    out.train_loss.push_back(e.train_obj);
    out.val_loss.push_back(e.val_obj);
  }
  return out;
}

}  // namespace debiascope::encoder
