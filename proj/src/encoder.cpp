#include "debiascope/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace debiascope::encoder {

using nd::Graph;
using nd::IndexTensor;
using nd::NamedTensors;
using nd::Shape;
using nd::Tensor;

void EncoderConfig::validate() const {
  if (dim <= 0 || layers <= 0 || heads <= 0 || ff_hidden <= 0 || vocab_size <= 0 || max_seq_len <= 0)
    throw std::invalid_argument("encoder config: all sizes must be positive");
  if (dim % heads != 0) throw std::invalid_argument("encoder config: dim must be divisible by heads");
}

EncoderConfig EncoderConfig::paper_scale(int vocab_size) {
  return EncoderConfig{64, 4, 4, 256, vocab_size, 64};
}

EncoderConfig EncoderConfig::desk_scale(int vocab_size) {
  return EncoderConfig{16, 2, 2, 32, vocab_size, 64};
}

EncoderParams init_encoder_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const double emb_sd = 0.08;
  const auto lin_sd = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  EncoderParams p;
  p.config = cfg;
  NamedTensors& t = p.tensors;
  t["tok_emb"] = Tensor::randn({cfg.vocab_size, cfg.dim}, emb_sd, rng);
  t["pos_emb"] = Tensor::randn({cfg.max_seq_len, cfg.dim}, emb_sd, rng);
  t["year_emb"] = Tensor::randn({kYearBuckets, cfg.dim}, emb_sd, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    std::string pre = "layers." + std::to_string(l) + ".";
    t[pre + "ln1.g"] = Tensor::full({cfg.dim}, 1.0);
    t[pre + "ln1.b"] = Tensor::zeros({cfg.dim});
    t[pre + "attn.wq"] = Tensor::randn({cfg.dim, cfg.dim}, lin_sd(cfg.dim), rng);
    t[pre + "attn.wk"] = Tensor::randn({cfg.dim, cfg.dim}, lin_sd(cfg.dim), rng);
    t[pre + "attn.wv"] = Tensor::randn({cfg.dim, cfg.dim}, lin_sd(cfg.dim), rng);
    t[pre + "attn.wo"] = Tensor::randn({cfg.dim, cfg.dim}, lin_sd(cfg.dim), rng);
    t[pre + "ln2.g"] = Tensor::full({cfg.dim}, 1.0);
    t[pre + "ln2.b"] = Tensor::zeros({cfg.dim});
    t[pre + "ff.w1"] = Tensor::randn({cfg.dim, cfg.ff_hidden}, lin_sd(cfg.dim), rng);
    t[pre + "ff.b1"] = Tensor::zeros({cfg.ff_hidden});
    t[pre + "ff.w2"] = Tensor::randn({cfg.ff_hidden, cfg.dim}, lin_sd(cfg.ff_hidden), rng);
    t[pre + "ff.b2"] = Tensor::zeros({cfg.dim});
  }
  t["ln_f.g"] = Tensor::full({cfg.dim}, 1.0);
  t["ln_f.b"] = Tensor::zeros({cfg.dim});
  return p;
}

EncoderNodes build_encoder(Graph& g, const EncoderParams& params) {
  const EncoderConfig& cfg = params.config;
  cfg.validate();
  const NamedTensors& t = params.tensors;
  auto P = [&](const std::string& name) -> int {
    auto it = t.find(name);
    if (it == t.end()) throw std::invalid_argument("encoder params missing tensor " + name);
    return g.param(name, it->second);
  };

  int tokens = g.index_input("tokens");
  int positions = g.index_input("positions");
  int years = g.index_input("years");
  int last_pos = g.index_input("last_pos");

  int x = g.add(g.add(g.embed(P("tok_emb"), tokens), g.embed(P("pos_emb"), positions)),
                g.embed(P("year_emb"), years));

  const int dk = cfg.dim / cfg.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int l = 0; l < cfg.layers; ++l) {
    std::string pre = "layers." + std::to_string(l) + ".";
    int ln1 = g.layer_norm(x, P(pre + "ln1.g"), P(pre + "ln1.b"));
    auto heads_of = [&](int proj) {
      // (B,T,D) -> (B*H, T, dk)
      int split = g.split_last(proj, cfg.heads, dk);
      return g.merge_first2(g.transpose_0213(split));
    };
    int q = heads_of(g.matmul(ln1, P(pre + "attn.wq")));
    int k = heads_of(g.matmul(ln1, P(pre + "attn.wk")));
    int v = heads_of(g.matmul(ln1, P(pre + "attn.wv")));
    int scores = g.scale(g.bmm(q, k, /*trans_b=*/true), att_scale);
    int attn = g.causal_softmax(scores);
    int ctx = g.bmm(attn, v);  // (B*H, T, dk)
    int merged = g.merge_last2(g.transpose_0213(g.split_first(ctx, cfg.heads)));  // (B,T,D)
    x = g.add(x, g.matmul(merged, P(pre + "attn.wo")));

    int ln2 = g.layer_norm(x, P(pre + "ln2.g"), P(pre + "ln2.b"));
    int h = g.relu(g.add_bias(g.matmul(ln2, P(pre + "ff.w1")), P(pre + "ff.b1")));
    x = g.add(x, g.add_bias(g.matmul(h, P(pre + "ff.w2")), P(pre + "ff.b2")));
  }

  EncoderNodes out;
  out.hidden = g.layer_norm(x, P("ln_f.g"), P("ln_f.b"));
  out.rep = g.select_rows(out.hidden, last_pos);
  return out;
}

HistoryBatch make_history_batch(const panel::Panel& p, std::span<const std::size_t> idx,
                                const EncoderConfig& cfg) {
  if (idx.empty()) throw std::invalid_argument("make_history_batch: empty batch");
  std::int64_t T = 0;
  for (std::size_t i : idx) {
    const auto& h = p.observations[i].history;
    if (static_cast<int>(h.length()) > cfg.max_seq_len)
      throw std::invalid_argument("history length " + std::to_string(h.length()) +
                                  " exceeds max_seq_len " + std::to_string(cfg.max_seq_len) +
                                  " for unit " + p.observations[i].unit_id);
    T = std::max<std::int64_t>(T, static_cast<std::int64_t>(h.length()));
  }
  const std::int64_t B = static_cast<std::int64_t>(idx.size());
  HistoryBatch b;
  b.batch = B;
  b.max_len = T;
  std::vector<std::int64_t> tok(static_cast<std::size_t>(B * T), 0);
  std::vector<std::int64_t> pos(static_cast<std::size_t>(B * T), 0);
  std::vector<std::int64_t> yr(static_cast<std::size_t>(B * T), 0);
  std::vector<std::int64_t> last(static_cast<std::size_t>(B), 0);
  for (std::int64_t r = 0; r < B; ++r) {
    const auto& toks = p.observations[idx[static_cast<std::size_t>(r)]].history.tokens;
    const std::int64_t len = static_cast<std::int64_t>(toks.size());
    const std::int32_t year0 = toks.front().year;
    for (std::int64_t t = 0; t < T; ++t) {
      pos[static_cast<std::size_t>(r * T + t)] = t;
      if (t < len) {
        tok[static_cast<std::size_t>(r * T + t)] = toks[static_cast<std::size_t>(t)].occ;
        std::int64_t off = toks[static_cast<std::size_t>(t)].year - year0;
        yr[static_cast<std::size_t>(r * T + t)] = std::clamp<std::int64_t>(off, 0, kYearBuckets - 1);
      }
    }
    last[static_cast<std::size_t>(r)] = len - 1;
  }
  b.tokens = IndexTensor({B, T}, std::move(tok));
  b.positions = IndexTensor({B, T}, std::move(pos));
  b.years = IndexTensor({B, T}, std::move(yr));
  b.last_pos = IndexTensor({B}, std::move(last));
  return b;
}

void bind_history_batch(Graph& g, const HistoryBatch& b) {
  g.bind_ids("tokens", b.tokens);
  g.bind_ids("positions", b.positions);
  g.bind_ids("years", b.years);
  g.bind_ids("last_pos", b.last_pos);
}

EncoderRunner::EncoderRunner(EncoderParams params) : params_(std::move(params)) {
  nodes_ = build_encoder(graph_, params_);
}

std::vector<double> EncoderRunner::embed(const panel::Panel& p, std::size_t index) {
  std::size_t idx[1] = {index};
  Tensor reps = embed_all(p, std::span<const std::size_t>(idx, 1));
  return reps.data;
}

Tensor EncoderRunner::embed_all(const panel::Panel& p, std::span<const std::size_t> idx, std::size_t chunk) {
  const std::int64_t D = params_.config.dim;
  Tensor out({static_cast<std::int64_t>(idx.size()), D});
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    std::size_t stop = std::min(idx.size(), start + chunk);
    HistoryBatch b = make_history_batch(p, idx.subspan(start, stop - start), params_.config);
    bind_history_batch(graph_, b);
    graph_.forward();
    const Tensor& rep = graph_.value(nodes_.rep);
    std::copy(rep.data.begin(), rep.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * static_cast<std::size_t>(D)));
  }
  return out;
}

Tensor EncoderRunner::embed_all(const panel::Panel& p, std::size_t chunk) {
  std::vector<std::size_t> idx(p.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return embed_all(p, idx, chunk);
}

std::vector<double> embed_history(const EncoderParams& params, const panel::Panel& p, std::size_t index) {
  EncoderRunner runner(params);
  return runner.embed(p, index);
}

}  // namespace debiascope::encoder
