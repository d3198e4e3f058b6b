#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "debiascope/encoder.hpp"
#include "support.hpp"

using namespace debiascope;
using namespace debiascope::encoder;
using namespace debiascope::panel;
using dbs_test::max_grad_rel_err;

namespace {

Panel token_corpus(const std::vector<std::vector<std::string>>& histories) {
  Panel p;
  std::set<std::string> codes;
  for (const auto& h : histories)
    for (const auto& c : h) codes.insert(c);
  for (const auto& c : codes) p.vocabulary.add(c);
  for (std::size_t u = 0; u < histories.size(); ++u) {
    Observation o;
    o.unit_id = "u" + std::to_string(1000 + u);
    for (std::size_t t = 0; t < histories[u].size(); ++t)
      o.history.tokens.push_back({static_cast<std::int32_t>(p.vocabulary.id_of(histories[u][t])),
                                  static_cast<std::int32_t>(1990 + t)});
    o.group = static_cast<int>(u % 2);
    o.log_wage = 0.0;
    o.weight = 1.0;
    p.observations.push_back(std::move(o));
  }
  return p;
}

Panel alternating_corpus(std::size_t units, Rng& rng) {
  std::vector<std::vector<std::string>> hs;
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<std::string> h;
    std::string cur = rng.bernoulli(0.5) ? "A" : "B";
    std::size_t len = 6 + rng.below(5);
    for (std::size_t t = 0; t < len; ++t) {
      h.push_back(cur);
      cur = cur == "A" ? "B" : "A";
    }
    hs.push_back(std::move(h));
  }
  return token_corpus(hs);
}

Panel uniform_corpus(std::size_t units, Rng& rng) {
  const std::vector<std::string> codes = {"c0", "c1", "c2", "c3"};
  std::vector<std::vector<std::string>> hs;
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<std::string> h;
    std::size_t len = 8 + rng.below(4);
    for (std::size_t t = 0; t < len; ++t) h.push_back(codes[rng.below(4)]);
    hs.push_back(std::move(h));
  }
  return token_corpus(hs);
}

}  // namespace

TEST_CASE("degenerate encoder: zero weights give one pooled bias vector") {
  Rng rng(1);
  Panel p = uniform_corpus(6, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  EncoderParams params;
  params.config = cfg;
  {
    Rng r2(2);
    params = init_encoder_params(cfg, r2);
  }
  for (auto& [name, t] : params.tensors) t.fill(0.0);
  params.tensors["ln_f.b"] = nd::Tensor({cfg.dim});
  for (int j = 0; j < cfg.dim; ++j) params.tensors["ln_f.b"].data[static_cast<std::size_t>(j)] = 0.1 * j;

  EncoderRunner runner(params);
  std::vector<double> first = runner.embed(p, 0);
  for (int j = 0; j < cfg.dim; ++j) CHECK(first[static_cast<std::size_t>(j)] == doctest::Approx(0.1 * j));
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(runner.embed(p, i) == first);
}

TEST_CASE("embed_history is pure and deterministic") {
  Rng rng(3);
  Panel p = uniform_corpus(5, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  Rng init(4);
  EncoderParams params = init_encoder_params(cfg, init);
  EncoderRunner runner(params);
  auto a = runner.embed(p, 2);
  auto b = runner.embed(p, 2);
  CHECK(a == b);
  // and through a fresh runner
  EncoderRunner runner2(params);
  CHECK(runner2.embed(p, 2) == a);
}

TEST_CASE("permuting two distinct histories permutes outputs") {
  Rng rng(5);
  Panel p = uniform_corpus(4, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  Rng init(6);
  EncoderParams params = init_encoder_params(cfg, init);
  EncoderRunner runner(params);
  std::vector<std::size_t> fwd = {0, 1};
  std::vector<std::size_t> rev = {1, 0};
  nd::Tensor a = runner.embed_all(p, fwd);
  nd::Tensor b = runner.embed_all(p, rev);
  const int D = cfg.dim;
  for (int j = 0; j < D; ++j) {
    CHECK(a.at(0, j) == b.at(1, j));
    CHECK(a.at(1, j) == b.at(0, j));
  }
}

TEST_CASE("over-length history is rejected, not truncated") {
  std::vector<std::vector<std::string>> hs = {{"A", "B", "A", "B", "A", "B"}};
  Panel p = token_corpus(hs);
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  cfg.max_seq_len = 4;
  Rng init(7);
  EncoderParams params = init_encoder_params(cfg, init);
  CHECK_THROWS_WITH_AS(embed_history(params, p, 0), doctest::Contains("max_seq_len"),
                       std::invalid_argument);
}

TEST_CASE("causal mask: editing position t leaves earlier hidden states unchanged") {
  Rng rng(8);
  Panel p = uniform_corpus(1, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(p.vocabulary.size());
  Rng init(9);
  EncoderParams params = init_encoder_params(cfg, init);

  nd::Graph g;
  EncoderNodes nodes = build_encoder(g, params);
  std::vector<std::size_t> idx = {0};
  HistoryBatch b = make_history_batch(p, idx, cfg);
  bind_history_batch(g, b);
  g.forward();
  nd::Tensor before = g.value(nodes.hidden);

  const std::size_t t_edit = 5;
  Panel q = p;
  q.observations[0].history.tokens[t_edit].occ =
      (q.observations[0].history.tokens[t_edit].occ == 7) ? 8 : 7;
  HistoryBatch b2 = make_history_batch(q, idx, cfg);
  bind_history_batch(g, b2);
  g.forward();
  nd::Tensor after = g.value(nodes.hidden);

  const std::int64_t D = cfg.dim;
  bool changed_later = false;
  for (std::size_t t = 0; t < q.observations[0].history.length(); ++t)
    for (std::int64_t j = 0; j < D; ++j) {
      double x = before.data[static_cast<std::size_t>(t * static_cast<std::size_t>(D)) + static_cast<std::size_t>(j)];
      double y = after.data[static_cast<std::size_t>(t * static_cast<std::size_t>(D)) + static_cast<std::size_t>(j)];
      if (t < t_edit) CHECK(x == y);
      else if (x != y) changed_later = true;
    }
  CHECK(changed_later);
}

TEST_CASE("full encoder architecture passes finite differences") {
  std::vector<std::vector<std::string>> hs = {{"A", "B", "A"}, {"B", "B", "A"}};
  Panel p = token_corpus(hs);
  EncoderConfig cfg{4, 1, 2, 6, p.vocabulary.size(), 8};
  Rng init(11);
  EncoderParams params = init_encoder_params(cfg, init);

  nd::Graph g;
  EncoderNodes nodes = build_encoder(g, params);
  std::vector<std::size_t> idx = {0, 1};
  HistoryBatch b = make_history_batch(p, idx, cfg);
  bind_history_batch(g, b);
  Rng r(12);
  int loss = dbs_test::random_functional(g, nodes.rep, r);
  CHECK(max_grad_rel_err(g, loss) < 1e-5);
}

TEST_CASE("pretraining: deterministic transitions reach perplexity 1") {
  Rng rng(13);
  Panel corpus = alternating_corpus(160, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(corpus.vocabulary.size());
  PretrainConfig tc;
  tc.lr = 5e-3;
  tc.max_epochs = 150;
  tc.patience = 15;
  tc.seed = 99;
  PretrainResult r = pretrain_next_occupation(corpus, cfg, tc);
  CHECK(r.best_val_perplexity < 1.05);
  CHECK(r.best_val_perplexity >= 1.0);
}

TEST_CASE("pretraining: uniform tokens over V=4 give perplexity about 4") {
  Rng rng(14);
  Panel corpus = uniform_corpus(300, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(corpus.vocabulary.size());
  PretrainConfig tc;
  tc.lr = 3e-3;
  tc.max_epochs = 60;
  tc.patience = 8;
  tc.seed = 100;
  PretrainResult r = pretrain_next_occupation(corpus, cfg, tc);
  CHECK(r.best_val_perplexity > 3.4);
  CHECK(r.best_val_perplexity < 4.6);
}

TEST_CASE("pretraining: zero epochs returns the initialization") {
  Rng rng(15);
  Panel corpus = uniform_corpus(30, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(corpus.vocabulary.size());
  PretrainConfig tc;
  tc.max_epochs = 0;
  tc.seed = 7;
  PretrainResult r = pretrain_next_occupation(corpus, cfg, tc);
  Rng init_rng = Rng::derive(7, {0x22});
  EncoderParams expect = init_encoder_params(cfg, init_rng);
  CHECK(r.best_epoch == 0);
  CHECK(nd::content_hash(r.params.tensors) == nd::content_hash(expect.tensors));
}

TEST_CASE("pretraining: deterministic in seed") {
  Rng rng(16);
  Panel corpus = uniform_corpus(40, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(corpus.vocabulary.size());
  PretrainConfig tc;
  tc.max_epochs = 3;
  tc.seed = 21;
  PretrainResult a = pretrain_next_occupation(corpus, cfg, tc);
  PretrainResult b = pretrain_next_occupation(corpus, cfg, tc);
  CHECK(nd::content_hash(a.params.tensors) == nd::content_hash(b.params.tensors));
  tc.seed = 22;
  PretrainResult c = pretrain_next_occupation(corpus, cfg, tc);
  CHECK(nd::content_hash(a.params.tensors) != nd::content_hash(c.params.tensors));
}

TEST_CASE("pretraining: training loss non-increasing at small lr") {
  Rng rng(17);
  Panel corpus = alternating_corpus(60, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(corpus.vocabulary.size());
  PretrainConfig tc;
  tc.lr = 3e-4;
  tc.max_epochs = 8;
  tc.patience = 8;
  tc.seed = 5;
  PretrainResult r = pretrain_next_occupation(corpus, cfg, tc);
  for (std::size_t i = 2; i < r.train_loss.size(); ++i)
    CHECK(r.train_loss[i] <= r.train_loss[i - 1] + 1e-9);
}

TEST_CASE("ensemble_predict: averaging and errors") {
  struct Member {
    double value;
  };
  std::vector<Member> one = {{0.7}};
  CHECK(ensemble_predict(one, [](const Member& m) { return m.value; }) == doctest::Approx(0.7));
  std::vector<Member> two = {{0.2}, {0.4}};
  CHECK(ensemble_predict(two, [](const Member& m) { return m.value; }) == doctest::Approx(0.3));
  std::vector<Member> none;
  CHECK_THROWS(ensemble_predict(none, [](const Member& m) { return m.value; }));
  // an ensemble of identical members equals the single member exactly
  std::vector<Member> same = {{0.31}, {0.31}, {0.31}};
  CHECK(ensemble_predict(same, [](const Member& m) { return m.value; }) == 0.31);
}

TEST_CASE("checkpoint round trip and config mismatch rejection") {
  namespace fs = std::filesystem;
  Rng rng(18);
  Panel corpus = uniform_corpus(4, rng);
  EncoderConfig cfg = EncoderConfig::desk_scale(corpus.vocabulary.size());
  Rng init(19);
  EncoderParams params = init_encoder_params(cfg, init);

  fs::path dir = fs::temp_directory_path() / "debiascope_test";
  fs::create_directories(dir);
  std::string path = (dir / "enc.ckpt.json").string();
  save_checkpoint(params, path);
  EncoderParams back = load_checkpoint(path);
  CHECK(back.config == cfg);
  CHECK(nd::content_hash(back.tensors) == nd::content_hash(params.tensors));
  // embeddings agree bit for bit
  EncoderRunner r1(params);
  EncoderRunner r2(back);
  CHECK(r1.embed(corpus, 1) == r2.embed(corpus, 1));

  EncoderConfig other = cfg;
  other.dim = cfg.dim * 2;
  other.ff_hidden = cfg.ff_hidden * 2;
  CHECK_THROWS_WITH_AS(load_checkpoint(path, other), doctest::Contains("config"),
                       std::invalid_argument);
}
