#include <doctest.h>

#include <stdexcept>

#include "ragar/generator.hpp"
#include "test_util.hpp"

using namespace ragar;

namespace {

struct Fixture {
  Corpus corpus;
  GeneratorConfig cfg;
  Fixture() {
    CorpusConfig cc;
    cc.users = 2;
    corpus = generate_corpus(cc, 17);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "generate is deterministic and unit-norm") {
  const ImageGenerator gen(cfg, corpus);
  Rng rng(3);
  const Vec pref = ragar::testing::random_vec(rng, cfg.dim_pref);
  const GeneratedImage a = gen.generate(pref, 0);
  const GeneratedImage b = gen.generate(pref, 0);
  CHECK(a.feature == b.feature);
  CHECK(a.pixels == b.pixels);
  CHECK(norm(a.feature) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.provenance == Provenance::kGenerated);
  CHECK(a.source_pref == pref);
  for (double p : a.pixels) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE_FIXTURE(Fixture, "zero preference is the documented degenerate case") {
  const ImageGenerator gen(cfg, corpus);
  CHECK_THROWS_AS(gen.generate(Vec(cfg.dim_pref, 0.0), 0), std::domain_error);
  CHECK_THROWS_AS(gen.generate(Vec(3, 1.0), 0), std::invalid_argument);
}

TEST_CASE_FIXTURE(Fixture, "reference and global constructors set provenance") {
  const ImageGenerator gen(cfg, corpus);
  const Item& item = corpus.item(corpus.pool_item_ids.front());
  const GeneratedImage ref = gen.make_reference_image(item);
  CHECK(ref.feature == item.visual_feature);
  CHECK(ref.provenance == Provenance::kReference);
  CHECK(ref.pixels == corpus.item_pixels(item));

  Rng rng(9);
  const Vec e_g = normalized(ragar::testing::random_vec(rng, cfg.dim_semantic));
  const GeneratedImage g1 = gen.make_global_image(e_g, 0);
  const GeneratedImage g2 = gen.make_global_image(e_g, 0);
  CHECK(g1.provenance == Provenance::kGlobal);
  CHECK(g1.feature == g2.feature);
}

TEST_CASE_FIXTURE(Fixture, "the map is continuous: tiny preference shifts keep features close") {
  const ImageGenerator gen(cfg, corpus);
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec p = ragar::testing::random_vec(rng, cfg.dim_pref);
    Vec nudged = p;
    for (auto& x : nudged) x += 1e-3 / std::sqrt(static_cast<double>(p.size())) * rng.normal();
    const double c = cosine_similarity(gen.generate(p, 0).feature,
                                       gen.generate(nudged, 0).feature);
    CHECK(c > 0.99);
  }
}

TEST_CASE_FIXTURE(Fixture, "monotone alignment: closer preferences give closer features") {
  // Frozen once: over random planted preferences, the preference closer to
  // the target also lands closer in feature space for >= 90% of triples.
  const ImageGenerator gen(cfg, corpus);
  Rng rng(77);
  int consistent = 0;
  const int triples = 100;
  for (int t = 0; t < triples; ++t) {
    const Vec target = normalized(ragar::testing::random_vec(rng, cfg.dim_pref));
    Vec near = target;
    Vec far = target;
    for (auto& x : near) x += 0.2 * rng.normal();
    for (auto& x : far) x += 0.8 * rng.normal();
    if (cosine_similarity(near, target) < cosine_similarity(far, target)) {
      std::swap(near, far);
    }
    const Vec f_target = gen.generate(target, 0).feature;
    const double c_near = cosine_similarity(gen.generate(near, 0).feature, f_target);
    const double c_far = cosine_similarity(gen.generate(far, 0).feature, f_target);
    if (c_near > c_far) ++consistent;
  }
  CHECK(consistent >= 90);
}

TEST_CASE_FIXTURE(Fixture, "weights checksum is stable and input-sensitive") {
  const ImageGenerator gen(cfg, corpus);
  CHECK(gen.weights_checksum() == gen.weights_checksum());
  GeneratorConfig other = cfg;
  other.seed += 1;
  const ImageGenerator gen2(other, corpus);
  CHECK(gen.weights_checksum() != gen2.weights_checksum());
}
