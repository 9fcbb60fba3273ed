#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragar/encoders.hpp"

using namespace ragar;

namespace {

Item make_item(const std::string& id, std::vector<std::string> caption,
               std::vector<std::string> text = {}) {
  Item it;
  it.item_id = id;
  it.caption = std::move(caption);
  it.text = std::move(text);
  it.visual_feature = {1.0};
  return it;
}

}  // namespace

TEST_CASE("encode_semantic is deterministic and order-invariant") {
  const SemanticEncoder enc;
  const auto a = enc.encode({"red", "shoe"});
  const auto b = enc.encode({"red", "shoe"});
  CHECK(a.vec == b.vec);  // bitwise

  const auto swapped = enc.encode({"shoe", "red"});
  CHECK(a.vec == swapped.vec);

  CHECK(norm(a.vec) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("encode_semantic purity over many random captions") {
  const SemanticEncoder enc;
  Rng rng(55);
  static const std::vector<std::string> words = {"koala", "river", "neon",  "brick",
                                                 "vinyl", "moss",  "amber", "quartz"};
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<std::string> caption;
    const int len = 1 + rng.uniform_int(5);
    for (int i = 0; i < len; ++i) {
      caption.push_back(words[rng.uniform_int(static_cast<int>(words.size()))]);
    }
    const auto first = enc.encode(caption);
    const auto again = enc.encode(caption);
    REQUIRE(first.vec == again.vec);
  }
}

TEST_CASE("stopwords are removed; all-stopword captions are a domain error") {
  const SemanticEncoder enc;
  const auto with_stop = enc.encode({"the", "red", "shoe", "of"});
  const auto without = enc.encode({"red", "shoe"});
  CHECK(with_stop.vec == without.vec);
  CHECK_THROWS_AS(enc.encode({"the", "of", "a"}), std::domain_error);
  CHECK_THROWS_AS(enc.encode({}), std::domain_error);
}

TEST_CASE("shared tokens raise similarity on the default token table") {
  // Frozen once against the shipped projection: overlapping captions beat
  // disjoint ones.
  const SemanticEncoder enc;
  const auto a = enc.encode({"red", "sport", "shoe"});
  const auto b = enc.encode({"red", "sport", "sneaker"});
  const auto c = enc.encode({"galaxy", "space", "poster"});
  CHECK(cosine_similarity(a.vec, b.vec) > cosine_similarity(a.vec, c.vec));
}

TEST_CASE("token_vector entries are dyadic and seeded") {
  const Vec v1 = token_vector("lamp", 16, 0x1234);
  const Vec v2 = token_vector("lamp", 16, 0x1234);
  const Vec v3 = token_vector("lamp", 16, 0x9999);
  CHECK(v1 == v2);
  CHECK(v1 != v3);
  for (double x : v1) {
    CHECK(x >= -1.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("keyword extraction: counting, filtering and tie-breaks") {
  const auto i1 = make_item("a", {"red", "shoe"});
  const auto i2 = make_item("b", {"red", "hat"});
  const auto i3 = make_item("c", {"blue", "shoe"});
  KeywordExtractorConfig cfg;
  cfg.min_count = 2;
  cfg.top_n = 2;
  const auto set = extract_keywords({&i1, &i2, &i3}, cfg);
  REQUIRE(set.filtered.size() == 2);
  CHECK(set.filtered[0].first == "red");
  CHECK(set.filtered[0].second == 2);
  CHECK(set.filtered[1].first == "shoe");
  CHECK(set.filtered[1].second == 2);

  SUBCASE("top_n larger than the surviving set returns everything") {
    KeywordExtractorConfig wide = cfg;
    wide.top_n = 50;
    const auto all = extract_keywords({&i1, &i2, &i3}, wide);
    CHECK(all.filtered.size() == 2);  // only red/shoe reach min_count
  }

  SUBCASE("min_count=1 single item returns its deduplicated tokens") {
    const auto solo = make_item("d", {"zig", "zag", "zig"});
    KeywordExtractorConfig single;
    single.min_count = 1;
    single.top_n = 10;
    const auto own = extract_keywords({&solo}, single);
    REQUIRE(own.per_item.at("d").size() == 2);
    CHECK(own.filtered.size() == 2);
  }
}

TEST_CASE("keyword sets are independent of item order and free of stopwords") {
  const auto i1 = make_item("a", {"red", "shoe", "the"});
  const auto i2 = make_item("b", {"red", "hat"}, {"of", "velvet"});
  const auto i3 = make_item("c", {"blue", "shoe"});
  KeywordExtractorConfig cfg;
  cfg.min_count = 1;
  cfg.top_n = 10;
  const auto fwd = extract_keywords({&i1, &i2, &i3}, cfg);
  const auto rev = extract_keywords({&i3, &i2, &i1}, cfg);
  CHECK(fwd.filtered == rev.filtered);
  for (const auto& [kw, count] : fwd.filtered) {
    CHECK(std::find(cfg.stopwords.begin(), cfg.stopwords.end(), kw) == cfg.stopwords.end());
  }
  for (const auto& [id, kws] : fwd.per_item) {
    for (const auto& kw : kws) {
      CHECK(std::find(cfg.stopwords.begin(), cfg.stopwords.end(), kw) == cfg.stopwords.end());
    }
  }
}

TEST_CASE("extract_keywords rejects empty input and bad config") {
  KeywordExtractorConfig cfg;
  CHECK_THROWS_AS(extract_keywords({}, cfg), std::domain_error);
  const auto item = make_item("a", {"x"});
  cfg.min_count = 0;
  CHECK_THROWS_AS(extract_keywords({&item}, cfg), std::invalid_argument);
  cfg = KeywordExtractorConfig{};
  cfg.mode = KeywordExtractorConfig::Mode::kExternal;
  CHECK_THROWS_AS(extract_keywords({&item}, cfg), std::invalid_argument);  // no url
}

TEST_CASE("external keyword endpoint: success, malformed payload, retries") {
  httplib::Server server;
  int hits = 0;
  server.Post("/keywords", [&hits](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json out;
    out["keywords"] = nlohmann::json::array();
    for (const auto& text : body.at("texts")) {
      // echo the first token back as the keyword
      const std::string t = text.get<std::string>();
      out["keywords"].push_back({t.substr(0, t.find(' '))});
    }
    res.set_content(out.dump(), "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"nope\": 1}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto i1 = make_item("a", {"alpha", "beta"});
  const auto i2 = make_item("b", {"alpha", "gamma"});

  SUBCASE("success path applies the shared filter") {
    KeywordExtractorConfig cfg;
    cfg.mode = KeywordExtractorConfig::Mode::kExternal;
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/keywords";
    cfg.min_count = 2;
    cfg.top_n = 5;
    const auto set = extract_keywords({&i1, &i2}, cfg);
    REQUIRE(set.filtered.size() == 1);
    CHECK(set.filtered[0].first == "alpha");
    CHECK(set.filtered[0].second == 2);
  }

  SUBCASE("malformed response is a parse error, not retried") {
    KeywordExtractorConfig cfg;
    cfg.mode = KeywordExtractorConfig::Mode::kExternal;
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    CHECK_THROWS_WITH_AS(extract_keywords({&i1}, cfg), doctest::Contains("malformed"),
                         std::runtime_error);
  }

  SUBCASE("unreachable endpoint reports the attempt count") {
    KeywordExtractorConfig cfg;
    cfg.mode = KeywordExtractorConfig::Mode::kExternal;
    cfg.endpoint_url = "http://127.0.0.1:1/nowhere";
    cfg.retries = 2;
    cfg.timeout_ms = 200;
    try {
      extract_keywords({&i1}, cfg);
      FAIL("expected endpoint error");
    } catch (const EndpointError& e) {
      CHECK(e.attempts == 3);  // first try plus two retries
    }
  }

  SUBCASE("explicit fallback switches to deterministic mode") {
    KeywordExtractorConfig cfg;
    cfg.mode = KeywordExtractorConfig::Mode::kExternal;
    cfg.endpoint_url = "http://127.0.0.1:1/nowhere";
    cfg.retries = 0;
    cfg.timeout_ms = 100;
    cfg.fallback_to_deterministic = true;
    cfg.min_count = 1;
    const auto set = extract_keywords({&i1}, cfg);
    CHECK(set.filtered.size() == 2);  // alpha, beta from the caption
  }

  server.stop();
  server_thread.join();
}
