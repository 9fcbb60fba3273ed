#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include "ragar/retrieval.hpp"
#include "test_util.hpp"

using namespace ragar;

namespace {

// Small hand-built corpus where captions pin the similarity structure.
Corpus toy_corpus() {
  Corpus corpus;
  corpus.config.dim_visual = 2;
  corpus.config.users = 1;
  corpus.config.history_len = 4;
  auto add = [&corpus](const std::string& id, std::vector<std::string> caption, Vec feat) {
    Item it;
    it.item_id = id;
    it.caption = std::move(caption);
    it.text = it.caption;
    it.visual_feature = std::move(feat);
    it.category = "cat0";
    corpus.items.emplace(id, std::move(it));
  };
  add("ref", {"lime", "kiwi"}, {1.0, 0.0});
  add("h0", {"lime", "kiwi"}, {1.0, 0.0});   // identical caption -> score 1
  add("h1", {"lime", "mango"}, {0.0, 1.0});  // one shared token
  add("h2", {"granite", "slate"}, {0.5, 0.5});
  add("h3", {"kiwi", "lime"}, {0.0, 2.0});   // same bag as ref -> score 1
  UserSequence user;
  user.user_id = "u0";
  user.history_ids = {"h0", "h1", "h2", "h3"};
  user.reference_id = "ref";
  user.held_out_ids = {"h0"};
  corpus.users.push_back(user);
  corpus.rebuild_renderer();
  return corpus;
}

}  // namespace

TEST_CASE("score_history composes encoder and cosine per item") {
  const Corpus corpus = toy_corpus();
  const SemanticEncoder enc;
  const Vec scores = score_history(corpus, corpus.users[0], enc);
  REQUIRE(scores.size() == 4);
  CHECK(scores[0] == doctest::Approx(1.0).epsilon(1e-12));  // identical caption
  CHECK(scores[3] == doctest::Approx(1.0).epsilon(1e-12));  // order-invariant bag

  // Independent two-step oracle: encode then cosine, by hand.
  const Vec ref_emb = enc.encode(corpus.item("ref").caption).vec;
  for (int i = 0; i < 4; ++i) {
    const Vec emb = enc.encode(corpus.item(corpus.users[0].history_ids[i]).caption).vec;
    CHECK(scores[i] == doctest::Approx(cosine_similarity(emb, ref_emb)).epsilon(1e-12));
  }
}

TEST_CASE("select: top-k, expanded band, random draws, tie-breaks") {
  const Vec scores = {0.9, 0.1, 0.5, 0.7};
  CHECK(select(scores, 2, SelectionStrategy::kRet, Rng(1)) == std::vector<int>{0, 3});
  CHECK(select(scores, 2, SelectionStrategy::kExpRet, Rng(1)) == std::vector<int>{2, 1});

  const Vec tied = {0.5, 0.5, 0.1};
  CHECK(select(tied, 1, SelectionStrategy::kRet, Rng(1)) == std::vector<int>{0});

  auto random_sel = select(scores, 2, SelectionStrategy::kRandom, Rng(3));
  CHECK(random_sel.size() == 2);
  std::sort(random_sel.begin(), random_sel.end());
  CHECK(std::unique(random_sel.begin(), random_sel.end()) == random_sel.end());

  CHECK_THROWS_AS(select(scores, 5, SelectionStrategy::kRet, Rng(1)), std::domain_error);
  CHECK_THROWS_AS(select(scores, 3, SelectionStrategy::kExpRet, Rng(1)), std::domain_error);
  CHECK_THROWS_AS(select(scores, 0, SelectionStrategy::kRet, Rng(1)), std::domain_error);
}

TEST_CASE("fuse: softmax weighting of selected visual features") {
  const Corpus corpus = toy_corpus();
  const UserSequence& user = corpus.users[0];
  RetrievalConfig cfg;

  SUBCASE("singleton selection returns that feature exactly") {
    const auto res = fuse(corpus, user, {2}, {0.0, 0.0, 0.3, 0.0}, cfg);
    CHECK(res.p_ret == corpus.item("h2").visual_feature);
    CHECK(res.weights == Vec{1.0});
  }

  SUBCASE("equal scores average the features") {
    const auto res = fuse(corpus, user, {0, 1}, {0.4, 0.4, 0.0, 0.0}, cfg);
    CHECK(res.p_ret[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.p_ret[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("log-ratio scores give closed-form weights") {
    const auto res = fuse(corpus, user, {0, 1}, {std::log(2.0), 0.0, 0.0, 0.0}, cfg);
    CHECK(res.weights[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(res.weights[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(res.p_ret[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(res.p_ret[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("selection sorted by score desc with index tie-break") {
    const auto res = fuse(corpus, user, {3, 1, 0}, {0.7, 0.1, 0.0, 0.7}, cfg);
    REQUIRE(res.selected.size() == 3);
    CHECK(res.selected[0].first == 0);
    CHECK(res.selected[1].first == 3);
    CHECK(res.selected[2].first == 1);
    double sum = 0.0;
    for (double w : res.weights) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(fuse(corpus, user, {}, {0.1, 0.2, 0.3, 0.4}, cfg), std::domain_error);
}

TEST_CASE("permuting history changes nothing observable") {
  CorpusConfig cfg;
  cfg.users = 10;
  Corpus corpus = generate_corpus(cfg, 21);
  const SemanticEncoder enc;
  RetrievalConfig rcfg;

  for (auto& user : corpus.users) {
    const Vec scores = score_history(corpus, user, enc);
    const auto sel = select(scores, rcfg.k, SelectionStrategy::kRet, Rng(1));
    const Vec p_ret = fuse(corpus, user, sel, scores, rcfg).p_ret;

    // Reverse the history; re-run; the fused preference must be identical.
    UserSequence shuffled = user;
    std::reverse(shuffled.history_ids.begin(), shuffled.history_ids.end());
    const Vec scores2 = score_history(corpus, shuffled, enc);
    const auto sel2 = select(scores2, rcfg.k, SelectionStrategy::kRet, Rng(1));
    const Vec p_ret2 = fuse(corpus, shuffled, sel2, scores2, rcfg).p_ret;
    CHECK(ragar::testing::max_abs_diff(p_ret, p_ret2) <= 1e-12);
  }
}

TEST_CASE("fused preference lies in the convex hull of selected features") {
  CorpusConfig cfg;
  cfg.users = 30;
  Corpus corpus = generate_corpus(cfg, 33);
  const SemanticEncoder enc;
  RetrievalConfig rcfg;
  Rng rng(5);
  int cases = 0;
  // Fuzz across users and strategies well past 1e4 coordinate checks.
  for (const auto& user : corpus.users) {
    const Vec scores = score_history(corpus, user, enc);
    for (const auto strategy :
         {SelectionStrategy::kRet, SelectionStrategy::kExpRet, SelectionStrategy::kRandom}) {
      rcfg.strategy = strategy;
      const auto sel = select(scores, 5, strategy, rng.split(cases));
      const auto res = fuse(corpus, user, sel, scores, rcfg);
      for (int d = 0; d < cfg.dim_visual; ++d) {
        double lo = 1e300, hi = -1e300;
        for (const auto& [idx, score] : res.selected) {
          const double v = corpus.item(user.history_ids[idx]).visual_feature[d];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        REQUIRE(res.p_ret[d] >= lo - 1e-9);
        REQUIRE(res.p_ret[d] <= hi + 1e-9);
        ++cases;
      }
    }
  }
  CHECK(cases >= 10000);
}

TEST_CASE("top-k fusion tracks the planted preference better than the full mean") {
  CorpusConfig cfg;
  cfg.users = 100;
  Corpus corpus = generate_corpus(cfg, 7);
  const SemanticEncoder enc;
  RetrievalConfig rcfg;
  int better = 0;
  for (const auto& user : corpus.users) {
    const auto res = retrieve(corpus, user, enc, rcfg, Rng(1));
    Vec mean(cfg.dim_visual, 0.0);
    for (const auto& id : user.history_ids) {
      axpy(mean, 1.0 / cfg.history_len, corpus.item(id).visual_feature);
    }
    if (cosine_similarity(res.p_ret, *user.planted_preference) >
        cosine_similarity(mean, *user.planted_preference)) {
      ++better;
    }
  }
  CHECK(better >= 90);
}

TEST_CASE("k=0 is the unweighted full-history fallback") {
  CorpusConfig cfg;
  cfg.users = 3;
  Corpus corpus = generate_corpus(cfg, 13);
  const SemanticEncoder enc;
  RetrievalConfig rcfg;
  rcfg.k = 0;
  const auto res = retrieve(corpus, corpus.users[0], enc, rcfg, Rng(1));
  CHECK(res.selected.size() == corpus.users[0].history_ids.size());
  Vec mean(cfg.dim_visual, 0.0);
  for (const auto& id : corpus.users[0].history_ids) {
    axpy(mean, 1.0 / cfg.history_len, corpus.item(id).visual_feature);
  }
  CHECK(ragar::testing::max_abs_diff(res.p_ret, mean) <= 1e-12);
}
