#include "ragar/serde.hpp"

#include <stdexcept>

namespace ragar {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const CorpusConfig& c) {
  j = json{{"users", c.users},
           {"history_len", c.history_len},
           {"categories", c.categories},
           {"items_per_category", c.items_per_category},
           {"dim_visual", c.dim_visual},
           {"caption_len", c.caption_len},
           {"text_len", c.text_len},
           {"vocab_per_category", c.vocab_per_category},
           {"bridge_vocab", c.bridge_vocab},
           {"held_out_per_user", c.held_out_per_user},
           {"relevant_fraction", c.relevant_fraction},
           {"distractor_categories", c.distractor_categories},
           {"distractor_relatedness_max", c.distractor_relatedness_max},
           {"feature_noise", c.feature_noise},
           {"preference_noise", c.preference_noise},
           {"preference_blend", c.preference_blend},
           {"prototype_ring_mix", c.prototype_ring_mix},
           {"cluster_token_share", c.cluster_token_share},
           {"two_category_prob", c.two_category_prob},
           {"in_cluster_reference", c.in_cluster_reference},
           {"pixel_side", c.pixel_side},
           {"render_scale", c.render_scale},
           {"renderer_seed", c.renderer_seed},
           {"seed", c.seed}};
}

void from_json(const json& j, CorpusConfig& c) {
  maybe(j, "users", c.users);
  maybe(j, "history_len", c.history_len);
  maybe(j, "categories", c.categories);
  maybe(j, "items_per_category", c.items_per_category);
  maybe(j, "dim_visual", c.dim_visual);
  maybe(j, "caption_len", c.caption_len);
  maybe(j, "text_len", c.text_len);
  maybe(j, "vocab_per_category", c.vocab_per_category);
  maybe(j, "bridge_vocab", c.bridge_vocab);
  maybe(j, "held_out_per_user", c.held_out_per_user);
  maybe(j, "relevant_fraction", c.relevant_fraction);
  maybe(j, "distractor_categories", c.distractor_categories);
  maybe(j, "distractor_relatedness_max", c.distractor_relatedness_max);
  maybe(j, "feature_noise", c.feature_noise);
  maybe(j, "preference_noise", c.preference_noise);
  maybe(j, "preference_blend", c.preference_blend);
  maybe(j, "prototype_ring_mix", c.prototype_ring_mix);
  maybe(j, "cluster_token_share", c.cluster_token_share);
  maybe(j, "two_category_prob", c.two_category_prob);
  maybe(j, "in_cluster_reference", c.in_cluster_reference);
  maybe(j, "pixel_side", c.pixel_side);
  maybe(j, "render_scale", c.render_scale);
  maybe(j, "renderer_seed", c.renderer_seed);
  maybe(j, "seed", c.seed);
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"dim", c.dim}, {"token_table_seed", c.token_table_seed}, {"stopwords", c.stopwords}};
}

void from_json(const json& j, EncoderConfig& c) {
  maybe(j, "dim", c.dim);
  maybe(j, "token_table_seed", c.token_table_seed);
  maybe(j, "stopwords", c.stopwords);
}

void to_json(json& j, const KeywordExtractorConfig& c) {
  j = json{{"mode", c.mode == KeywordExtractorConfig::Mode::kDeterministic ? "deterministic"
                                                                           : "external"},
           {"stopwords", c.stopwords},
           {"min_count", c.min_count},
           {"top_n", c.top_n},
           {"endpoint_url", c.endpoint_url},
           {"timeout_ms", c.timeout_ms},
           {"retries", c.retries},
           {"batch_size", c.batch_size},
           {"max_inflight", c.max_inflight},
           {"fallback_to_deterministic", c.fallback_to_deterministic}};
}

void from_json(const json& j, KeywordExtractorConfig& c) {
  if (j.contains("mode")) {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "deterministic") {
      c.mode = KeywordExtractorConfig::Mode::kDeterministic;
    } else if (mode == "external") {
      c.mode = KeywordExtractorConfig::Mode::kExternal;
    } else {
      throw std::invalid_argument("keywords.mode must be deterministic or external");
    }
  }
  maybe(j, "stopwords", c.stopwords);
  maybe(j, "min_count", c.min_count);
  maybe(j, "top_n", c.top_n);
  maybe(j, "endpoint_url", c.endpoint_url);
  maybe(j, "timeout_ms", c.timeout_ms);
  maybe(j, "retries", c.retries);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "max_inflight", c.max_inflight);
  maybe(j, "fallback_to_deterministic", c.fallback_to_deterministic);
}

void to_json(json& j, const RetrievalConfig& c) {
  j = json{{"k", c.k},
           {"score_temperature", c.score_temperature},
           {"strategy", to_string(c.strategy)}};
}

void from_json(const json& j, RetrievalConfig& c) {
  maybe(j, "k", c.k);
  maybe(j, "score_temperature", c.score_temperature);
  if (j.contains("strategy")) {
    const std::string s = j.at("strategy").get<std::string>();
    if (s == "ret") c.strategy = SelectionStrategy::kRet;
    else if (s == "exp_ret") c.strategy = SelectionStrategy::kExpRet;
    else if (s == "random") c.strategy = SelectionStrategy::kRandom;
    else throw std::invalid_argument("retrieval.strategy must be ret, exp_ret or random");
  }
}

void to_json(json& j, const PreferenceDims& c) {
  j = json{{"d_text", c.d_text},
           {"d_mapper", c.d_mapper},
           {"img_tokens", c.img_tokens},
           {"queries", c.queries},
           {"mapper_depth", c.mapper_depth},
           {"d_attn", c.d_attn},
           {"kv_rows", c.kv_rows},
           {"d_pref", c.d_pref}};
}

void from_json(const json& j, PreferenceDims& c) {
  maybe(j, "d_text", c.d_text);
  maybe(j, "d_mapper", c.d_mapper);
  maybe(j, "img_tokens", c.img_tokens);
  maybe(j, "queries", c.queries);
  maybe(j, "mapper_depth", c.mapper_depth);
  maybe(j, "d_attn", c.d_attn);
  maybe(j, "kv_rows", c.kv_rows);
  maybe(j, "d_pref", c.d_pref);
}

void to_json(json& j, const GeneratorConfig& c) {
  j = json{{"dim_pref", c.dim_pref},
           {"dim_feature", c.dim_feature},
           {"dim_semantic", c.dim_semantic},
           {"identity_mix", c.identity_mix},
           {"noise_mix", c.noise_mix},
           {"seed", c.seed}};
}

void from_json(const json& j, GeneratorConfig& c) {
  maybe(j, "dim_pref", c.dim_pref);
  maybe(j, "dim_feature", c.dim_feature);
  maybe(j, "dim_semantic", c.dim_semantic);
  maybe(j, "identity_mix", c.identity_mix);
  maybe(j, "noise_mix", c.noise_mix);
  maybe(j, "seed", c.seed);
}

void to_json(json& j, const PipelineConfig& c) {
  j = json{{"encoder", c.encoder},
           {"keywords", c.keywords},
           {"keywords_over", c.keywords_over == KeywordsOver::kRetrieved ? "retrieved" : "full"},
           {"retrieval", c.retrieval},
           {"dims", c.dims},
           {"generator", c.generator},
           {"projection_seed", c.projection_seed}};
}

void from_json(const json& j, PipelineConfig& c) {
  maybe(j, "encoder", c.encoder);
  maybe(j, "keywords", c.keywords);
  if (j.contains("keywords_over")) {
    const std::string s = j.at("keywords_over").get<std::string>();
    if (s == "retrieved") c.keywords_over = KeywordsOver::kRetrieved;
    else if (s == "full") c.keywords_over = KeywordsOver::kFull;
    else throw std::invalid_argument("keywords_over must be retrieved or full");
  }
  maybe(j, "retrieval", c.retrieval);
  maybe(j, "dims", c.dims);
  maybe(j, "generator", c.generator);
  maybe(j, "projection_seed", c.projection_seed);
}

void to_json(json& j, const RankTrainConfig& c) {
  j = json{{"epochs", c.epochs},
           {"lr", c.lr},
           {"d_rank", c.d_rank},
           {"init_scale", c.init_scale},
           {"fusion_weight", c.fusion_weight},
           {"reference_weight", c.reference_weight},
           {"seed", c.seed}};
}

void from_json(const json& j, RankTrainConfig& c) {
  maybe(j, "epochs", c.epochs);
  maybe(j, "lr", c.lr);
  maybe(j, "d_rank", c.d_rank);
  maybe(j, "init_scale", c.init_scale);
  maybe(j, "fusion_weight", c.fusion_weight);
  maybe(j, "reference_weight", c.reference_weight);
  maybe(j, "seed", c.seed);
}

void to_json(json& j, const ReflectionConfig& c) {
  j = json{{"alpha", c.alpha},
           {"beta", c.beta},
           {"gamma", c.gamma},
           {"delta", c.delta},
           {"sigma", c.sigma},
           {"noise_count", c.noise_count},
           {"steps", c.steps},
           {"lr", c.lr},
           {"lr_decay", c.lr_decay},
           {"grad_clip", c.grad_clip},
           {"reward_mode", to_string(c.reward_mode)},
           {"baseline_subtraction", c.baseline_subtraction},
           {"seed", c.seed},
           {"delta_r_distractors", c.delta_r_distractors}};
}

void from_json(const json& j, ReflectionConfig& c) {
  maybe(j, "alpha", c.alpha);
  maybe(j, "beta", c.beta);
  maybe(j, "gamma", c.gamma);
  maybe(j, "delta", c.delta);
  maybe(j, "sigma", c.sigma);
  maybe(j, "noise_count", c.noise_count);
  maybe(j, "steps", c.steps);
  maybe(j, "lr", c.lr);
  maybe(j, "lr_decay", c.lr_decay);
  maybe(j, "grad_clip", c.grad_clip);
  if (j.contains("reward_mode")) {
    const std::string s = j.at("reward_mode").get<std::string>();
    if (s == "penalty_descent") c.reward_mode = RewardMode::kPenaltyDescent;
    else if (s == "paper_literal") c.reward_mode = RewardMode::kPaperLiteral;
    else throw std::invalid_argument("reward_mode must be penalty_descent or paper_literal");
  }
  maybe(j, "baseline_subtraction", c.baseline_subtraction);
  maybe(j, "seed", c.seed);
  maybe(j, "delta_r_distractors", c.delta_r_distractors);
}

void to_json(json& j, const MetricsConfig& c) {
  j = json{{"distractors", c.distractors},
           {"pool_seed", c.pool_seed},
           {"ssim_window", c.ssim_window},
           {"ssim_k1", c.ssim_k1},
           {"ssim_k2", c.ssim_k2},
           {"jobs", c.jobs}};
}

void from_json(const json& j, MetricsConfig& c) {
  maybe(j, "distractors", c.distractors);
  maybe(j, "pool_seed", c.pool_seed);
  maybe(j, "ssim_window", c.ssim_window);
  maybe(j, "ssim_k1", c.ssim_k1);
  maybe(j, "ssim_k2", c.ssim_k2);
  maybe(j, "jobs", c.jobs);
}

}  // namespace ragar
