#pragma once

#include <cstdint>
#include <string>

#include "ragar/corpus.hpp"
#include "ragar/numerics.hpp"

namespace ragar {

enum class Provenance { kReference, kGlobal, kGenerated };

std::string to_string(Provenance p);

struct GeneratedImage {
  Vec feature;       // unit norm, dim d_v
  Vec pixels;        // square grayscale raster in [0,1]
  int pixel_side = 0;
  Provenance provenance = Provenance::kGenerated;
  Vec source_pref;   // copy of the preference the image came from (empty for reference)
};

struct GeneratorConfig {
  int dim_pref = 32;
  int dim_feature = 32;
  int dim_semantic = 32;  // input dim of the global-preference projection
  double identity_mix = 1.0;  // weight of the direction-preserving part of W
  double noise_mix = 0.02;     // weight of the seeded random part of W
  uint64_t seed = 0x9E2A7CULL;  // run constant, independent of the experiment seed
};

/// Frozen stand-in for the image generator. The map is a fixed seeded
/// tanh-squashed linear transform followed by unit normalization; trainers
/// only ever see its outputs, never W or b, so every gradient that reaches
/// the preference stack has to come from the score-function estimator.
class ImageGenerator {
 public:
  ImageGenerator(const GeneratorConfig& cfg, const Corpus& corpus);

  /// Deterministic in (pref, seed). The seed is reserved for stochastic
  /// generator backends; this surrogate ignores it.
  GeneratedImage generate(const Vec& pref, uint64_t seed) const;

  /// Wraps an item's own feature and pixels, provenance kReference.
  GeneratedImage make_reference_image(const Item& item) const;

  /// Projects a semantic keyword embedding into preference space through a
  /// fixed seeded matrix and generates from it, provenance kGlobal.
  GeneratedImage make_global_image(const Vec& e_g, uint64_t seed) const;

  /// FNV-1a over the frozen weights; the reflection loop asserts this is
  /// unchanged after training.
  uint64_t weights_checksum() const;

  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  const Corpus* corpus_;
  Mat w_gen_;
  Vec b_gen_;
  Mat global_proj_;  // semantic dim -> pref dim
};

}  // namespace ragar
