#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "ragar/corpus.hpp"

using namespace ragar;

namespace {

// Slot index is encoded in per-user history ids; slots below n_rel are the
// in-cluster ones. Gives tests exact cluster membership without heuristics.
bool in_cluster_slot(const std::string& item_id, int n_rel) {
  const auto pos = item_id.find("_h");
  REQUIRE(pos != std::string::npos);
  return std::atoi(item_id.substr(pos + 2).c_str()) < n_rel;
}

}  // namespace

TEST_CASE("generation is deterministic: same seed, byte-identical serialization") {
  CorpusConfig cfg;
  cfg.users = 8;
  const Corpus a = generate_corpus(cfg, 7);
  const Corpus b = generate_corpus(cfg, 7);
  CHECK(corpus_to_jsonl(a) == corpus_to_jsonl(b));

  const Corpus c = generate_corpus(cfg, 8);
  CHECK(corpus_to_jsonl(a) != corpus_to_jsonl(c));
}

TEST_CASE("relevant fraction controls the in-cluster history count exactly") {
  CorpusConfig cfg;
  cfg.users = 12;
  cfg.relevant_fraction = 0.25;
  const Corpus corpus = generate_corpus(cfg, 3);
  for (const auto& user : corpus.users) {
    int in_cluster = 0;
    for (const auto& id : user.history_ids) {
      if (in_cluster_slot(id, 5)) ++in_cluster;
    }
    CHECK(in_cluster == 5);
  }

  CorpusConfig all_rel = cfg;
  all_rel.relevant_fraction = 1.0;
  const Corpus full = generate_corpus(all_rel, 3);
  for (const auto& user : full.users) {
    // Every history item's category must belong to the reference cluster.
    const std::string ref_cat = full.item(user.reference_id).category;
    std::set<std::string> cats;
    for (const auto& id : user.history_ids) cats.insert(full.item(id).category);
    CHECK(cats.size() <= 2);
    CHECK(cats.count(ref_cat) == 1);
  }
}

TEST_CASE("config validation") {
  CorpusConfig cfg;
  cfg.categories = 1;
  CHECK_THROWS_AS(generate_corpus(cfg, 1), std::invalid_argument);
  cfg = CorpusConfig{};
  cfg.relevant_fraction = 1.5;
  CHECK_THROWS_AS(generate_corpus(cfg, 1), std::invalid_argument);
}

TEST_CASE("referential integrity and invariants of generated corpora") {
  CorpusConfig cfg;
  cfg.users = 10;
  const Corpus corpus = generate_corpus(cfg, 11);
  for (const auto& user : corpus.users) {
    CHECK(user.history_ids.size() == static_cast<size_t>(cfg.history_len));
    CHECK(corpus.items.count(user.reference_id) == 1);
    CHECK(user.held_out_ids.size() == static_cast<size_t>(cfg.held_out_per_user));
    for (const auto& id : user.history_ids) {
      CHECK(corpus.items.count(id) == 1);
      CHECK(id != user.reference_id);
    }
    for (const auto& id : user.held_out_ids) {
      CHECK(corpus.items.count(id) == 1);
      CHECK(id != user.reference_id);
    }
    REQUIRE(user.planted_preference.has_value());
    CHECK(norm(*user.planted_preference) == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (const auto& [id, item] : corpus.items) {
    CHECK(norm(item.visual_feature) > 0.0);
    CHECK(!item.caption.empty());
  }
}

TEST_CASE("planted preference is recoverable from in-cluster history items") {
  CorpusConfig cfg;
  cfg.users = 100;
  const Corpus corpus = generate_corpus(cfg, 7);
  const int n_rel = static_cast<int>(std::llround(cfg.relevant_fraction * cfg.history_len));
  int pass = 0;
  for (const auto& user : corpus.users) {
    Vec mean(cfg.dim_visual, 0.0);
    int n = 0;
    for (const auto& id : user.history_ids) {
      if (!in_cluster_slot(id, n_rel)) continue;
      axpy(mean, 1.0, corpus.item(id).visual_feature);
      ++n;
    }
    REQUIRE(n == n_rel);
    if (cosine_similarity(mean, *user.planted_preference) >= 0.6) ++pass;
  }
  CHECK(pass >= 95);
}

TEST_CASE("catalog categories are separated in feature space") {
  CorpusConfig cfg;
  cfg.users = 4;
  const Corpus corpus = generate_corpus(cfg, 7);
  double within = 0.0, cross = 0.0;
  int nw = 0, nc = 0;
  const auto& ids = corpus.pool_item_ids;
  for (size_t i = 0; i < ids.size(); i += 2) {
    for (size_t j = i + 1; j < ids.size(); j += 2) {
      const Item& a = corpus.item(ids[i]);
      const Item& b = corpus.item(ids[j]);
      const double c = cosine_similarity(a.visual_feature, b.visual_feature);
      if (a.category == b.category) {
        within += c;
        ++nw;
      } else {
        cross += c;
        ++nc;
      }
    }
  }
  CHECK(within / nw - cross / nc >= 0.3);
}

TEST_CASE("held-out positives sit in the user's preference cluster") {
  CorpusConfig cfg;
  cfg.users = 20;
  const Corpus corpus = generate_corpus(cfg, 5);
  for (const auto& user : corpus.users) {
    for (const auto& id : user.held_out_ids) {
      const Item& it = corpus.item(id);
      const Vec& proto = corpus.category_prototypes.at(it.category);
      CHECK(cosine_similarity(proto, *user.planted_preference) > 0.3);
    }
  }
}

TEST_CASE("save/load round-trip reproduces every field") {
  CorpusConfig cfg;
  cfg.users = 6;
  const Corpus corpus = generate_corpus(cfg, 42);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ragar_corpus_rt.jsonl").string();
  save_corpus(corpus, path);
  const Corpus loaded = load_corpus(path);
  CHECK(corpus_to_jsonl(loaded) == corpus_to_jsonl(corpus));
  CHECK(loaded.users.size() == corpus.users.size());
  CHECK(loaded.pool_item_ids == corpus.pool_item_ids);
  std::filesystem::remove(path);
}

TEST_CASE("malformed records fail with the offending line and field") {
  CorpusConfig cfg;
  cfg.users = 2;
  const Corpus corpus = generate_corpus(cfg, 1);
  const std::string text = corpus_to_jsonl(corpus);

  SUBCASE("missing visual_feature") {
    auto pos = text.find("\"visual_feature\"");
    REQUIRE(pos != std::string::npos);
    std::string broken = text;
    broken.replace(pos, 16, "\"visual_misfield\"");
    try {
      corpus_from_jsonl(broken);
      FAIL("expected parse error");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line") != std::string::npos);
      CHECK(msg.find("visual_feature") != std::string::npos);
    }
  }

  SUBCASE("pixel value outside [0,1]") {
    std::string broken = text;
    broken +=
        R"({"type":"item","item_id":"bad","caption":["a"],"text":["b"],"visual_feature":[1.0],)"
        R"("category":"cat0","pixel_grid":[1.5],"pixel_side":1})"
        "\n";
    CHECK_THROWS_WITH_AS(corpus_from_jsonl(broken),
                         doctest::Contains("pixel_grid value outside"), std::runtime_error);
  }

  SUBCASE("reference inside history") {
    std::string broken = text;
    broken +=
        R"({"type":"user","user_id":"ubad","history_ids":["it_c0_000"],)"
        R"("reference_id":"it_c0_000","held_out_ids":[]})"
        "\n";
    CHECK_THROWS_WITH_AS(corpus_from_jsonl(broken),
                         doctest::Contains("reference appears in history"), std::runtime_error);
  }
}

TEST_CASE("renderer is deterministic and clamps to [0,1]") {
  CorpusConfig cfg;
  cfg.users = 2;
  const Corpus corpus = generate_corpus(cfg, 9);
  const Item& it = corpus.item(corpus.pool_item_ids.front());
  const Vec px1 = corpus.render_pixels(it.visual_feature);
  const Vec px2 = corpus.render_pixels(it.visual_feature);
  CHECK(px1 == px2);
  CHECK(px1.size() == static_cast<size_t>(cfg.pixel_side * cfg.pixel_side));
  for (double p : px1) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  // item_pixels falls back to the renderer when no raster is stored
  CHECK(corpus.item_pixels(it) == px1);
}
