#pragma once

#include <memory>
#include <string>

#include "ragar/corpus.hpp"
#include "ragar/encoders.hpp"
#include "ragar/generator.hpp"
#include "ragar/numerics.hpp"
#include "ragar/preference.hpp"
#include "ragar/retrieval.hpp"

namespace ragar {

/// Fixed definitional projection: depends only on (seed, tag, shape), shared
/// wherever a feature has to cross between the visual and semantic spaces.
Mat seeded_projection(int rows, int cols, uint64_t seed, const std::string& tag);

enum class KeywordsOver { kRetrieved, kFull };

struct PipelineConfig {
  EncoderConfig encoder;
  KeywordExtractorConfig keywords;
  KeywordsOver keywords_over = KeywordsOver::kRetrieved;
  RetrievalConfig retrieval;
  PreferenceDims dims;
  GeneratorConfig generator;
  uint64_t projection_seed = 0xD1CE5EEDULL;  // definitional, not the run seed
};

/// Everything about one user that does not depend on trainable parameters:
/// retrieval fusion, extracted keywords, the keyword embedding feeding both
/// the detailed and global branches, the reference embedding, and the
/// reference/global candidate images.
struct UserContext {
  const UserSequence* user = nullptr;
  RetrievalResult retrieval;
  KeywordSet keywords;
  Vec keyword_embedding;  // e_txt and e_g of the surrogate stack
  Vec e_sem_ref;
  GeneratedImage ref_image;
  GeneratedImage glob_image;
};

/// Parameter-dependent half of the forward pass.
struct ForwardPass {
  DetailedTrace detailed;
  CalibrateTrace calib;
  const Vec& p_gen() const { return calib.p_gen; }
  const Vec& e_d() const { return detailed.e_d; }
};

/// Binds a corpus to the run constants (encoder, generator, projections) and
/// owns the preference forward chain. Immutable after construction; safe to
/// share across worker threads.
class Pipeline {
 public:
  Pipeline(const Corpus& corpus, PipelineConfig cfg);

  const Corpus& corpus() const { return *corpus_; }
  const PipelineConfig& config() const { return cfg_; }
  const SemanticEncoder& encoder() const { return encoder_; }
  const ImageGenerator& generator() const { return generator_; }

  /// d_detailed -> d_semantic, used by the semantic loss.
  const Mat& detailed_to_semantic() const { return proj_detailed_; }
  /// d_visual -> d_semantic, used by the semantic-side image metrics.
  const Mat& visual_to_semantic() const { return proj_visual_; }

  UserContext user_context(const UserSequence& user, Rng rng) const;

  ForwardPass forward(const UserContext& ctx, const CalibratorParams& params) const;

  CalibratorParams init_params(uint64_t seed) const;

 private:
  const Corpus* corpus_;
  PipelineConfig cfg_;
  SemanticEncoder encoder_;
  ImageGenerator generator_;
  Mat proj_detailed_;
  Mat proj_visual_;
};

}  // namespace ragar
