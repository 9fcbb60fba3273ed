#include "ragar/generator.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ragar {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kReference: return "reference";
    case Provenance::kGlobal: return "global";
    case Provenance::kGenerated: return "generated";
  }
  return "unknown";
}

ImageGenerator::ImageGenerator(const GeneratorConfig& cfg, const Corpus& corpus)
    : cfg_(cfg), corpus_(&corpus) {
  const Rng root(cfg.seed);
  // Identity-dominated mixing keeps the map alignment-preserving: nearby
  // preferences generate nearby features, which is what makes rank rewards
  // a climbable signal at this scale.
  w_gen_ = Mat::random_gaussian(cfg.dim_feature, cfg.dim_pref,
                                cfg.noise_mix / std::sqrt(static_cast<double>(cfg.dim_pref)),
                                root.split("w_gen"));
  const int diag = std::min(cfg.dim_feature, cfg.dim_pref);
  for (int i = 0; i < diag; ++i) w_gen_(i, i) += cfg.identity_mix;
  b_gen_.assign(cfg.dim_feature, 0.0);
  global_proj_ = Mat::random_gaussian(cfg.dim_pref, cfg.dim_semantic,
                                      1.0 / std::sqrt(static_cast<double>(cfg.dim_semantic)),
                                      root.split("global_proj"));
  const int gdiag = std::min(cfg.dim_pref, cfg.dim_semantic);
  for (int i = 0; i < gdiag; ++i) global_proj_(i, i) += 0.5;
}

GeneratedImage ImageGenerator::generate(const Vec& pref, uint64_t /*seed*/) const {
  if (static_cast<int>(pref.size()) != cfg_.dim_pref) {
    throw std::invalid_argument("generate: preference dim mismatch");
  }
  check_finite(pref, "generate preference");
  Vec raw = mat_vec(w_gen_, pref);
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = std::tanh(raw[i] + b_gen_[i]);
  if (norm(raw) == 0.0) {
    throw std::domain_error("generate: degenerate zero preference (tanh output has zero norm)");
  }
  GeneratedImage img;
  img.feature = normalized(raw);
  img.pixels = corpus_->render_pixels(img.feature);
  img.pixel_side = corpus_->config.pixel_side;
  img.provenance = Provenance::kGenerated;
  img.source_pref = pref;
  return img;
}

GeneratedImage ImageGenerator::make_reference_image(const Item& item) const {
  GeneratedImage img;
  img.feature = item.visual_feature;
  img.pixels = corpus_->item_pixels(item);
  img.pixel_side = item.pixel_side > 0 ? item.pixel_side : corpus_->config.pixel_side;
  img.provenance = Provenance::kReference;
  return img;
}

GeneratedImage ImageGenerator::make_global_image(const Vec& e_g, uint64_t seed) const {
  if (static_cast<int>(e_g.size()) != global_proj_.cols) {
    throw std::invalid_argument("make_global_image: embedding dim mismatch");
  }
  GeneratedImage img = generate(mat_vec(global_proj_, e_g), seed);
  img.provenance = Provenance::kGlobal;
  return img;
}

uint64_t ImageGenerator::weights_checksum() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  auto mix_bytes = [&h](const double* p, size_t n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  };
  mix_bytes(w_gen_.data.data(), w_gen_.data.size());
  mix_bytes(b_gen_.data(), b_gen_.size());
  mix_bytes(global_proj_.data.data(), global_proj_.data.size());
  return h;
}

}  // namespace ragar
