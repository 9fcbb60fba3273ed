#include "ragar/pipeline.hpp"

#include <cmath>
#include <stdexcept>

namespace ragar {

Mat seeded_projection(int rows, int cols, uint64_t seed, const std::string& tag) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  return Mat::random_gaussian(rows, cols, scale, Rng(seed).split(tag));
}

Pipeline::Pipeline(const Corpus& corpus, PipelineConfig cfg)
    : corpus_(&corpus),
      cfg_(std::move(cfg)),
      encoder_(cfg_.encoder),
      generator_([&] {
        GeneratorConfig g = cfg_.generator;
        g.dim_pref = cfg_.dims.d_pref;
        g.dim_feature = corpus.config.dim_visual;
        g.dim_semantic = cfg_.encoder.dim;
        return g;
      }(), corpus) {
  if (cfg_.dims.d_pref != corpus.config.dim_visual) {
    throw std::invalid_argument(
        "pipeline: preference dim must equal the visual feature dim (the "
        "calibrator loss subtracts them)");
  }
  if (cfg_.dims.d_text != cfg_.encoder.dim) {
    throw std::invalid_argument("pipeline: d_text must equal the encoder dim");
  }
  proj_detailed_ = seeded_projection(cfg_.dims.d_detailed(), cfg_.encoder.dim,
                                     cfg_.projection_seed, "to_semantic");
  proj_visual_ = seeded_projection(corpus.config.dim_visual, cfg_.encoder.dim,
                                   cfg_.projection_seed, "to_semantic");
}

UserContext Pipeline::user_context(const UserSequence& user, Rng rng) const {
  UserContext ctx;
  ctx.user = &user;
  ctx.retrieval = retrieve(*corpus_, user, encoder_, cfg_.retrieval, rng.split("select"));

  std::vector<const Item*> keyword_items;
  if (cfg_.keywords_over == KeywordsOver::kRetrieved && cfg_.retrieval.k != 0) {
    for (const auto& [idx, score] : ctx.retrieval.selected) {
      keyword_items.push_back(&corpus_->item(user.history_ids[idx]));
    }
  } else {
    for (const auto& id : user.history_ids) keyword_items.push_back(&corpus_->item(id));
  }
  ctx.keywords = extract_keywords(keyword_items, cfg_.keywords);
  if (ctx.keywords.filtered.empty()) {
    // A min_count nothing reaches would starve the generation branch; fall
    // back to the most permissive filter rather than failing the user.
    KeywordExtractorConfig relaxed = cfg_.keywords;
    relaxed.min_count = 1;
    ctx.keywords = extract_keywords(keyword_items, relaxed);
  }
  ctx.keyword_embedding = encoder_.encode(ctx.keywords.filtered_tokens()).vec;

  const Item& ref = corpus_->item(user.reference_id);
  ctx.e_sem_ref = encoder_.encode(ref.caption, ref.item_id).vec;
  ctx.ref_image = generator_.make_reference_image(ref);
  ctx.glob_image = generator_.make_global_image(ctx.keyword_embedding, 0);
  return ctx;
}

ForwardPass Pipeline::forward(const UserContext& ctx, const CalibratorParams& params) const {
  ForwardPass fw;
  fw.detailed = build_detailed(ctx.keyword_embedding, params, cfg_.dims);
  fw.calib = calibrate(fw.detailed.e_d, ctx.keyword_embedding, params, cfg_.dims);
  return fw;
}

CalibratorParams Pipeline::init_params(uint64_t seed) const {
  return init_calibrator_params(cfg_.dims, Rng(seed).split("calibrator_init"));
}

}  // namespace ragar
