#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ragar/corpus.hpp"
#include "ragar/encoders.hpp"
#include "ragar/generator.hpp"
#include "ragar/numerics.hpp"

namespace ragar {

/// Two-tower multi-modal scorer: a user projection over the mean history
/// feature and a fused visual/text item projection.
struct RankModelParams {
  Mat user_proj;         // d_rank x d_visual
  Mat item_proj_visual;  // d_rank x d_visual
  Mat item_proj_text;    // d_rank x d_semantic
  double fusion_weight = 0.7;  // visual share of the item embedding, in [0,1]
  // Share of the reference item in the user tower (0 = plain history mean,
  // the contract score_candidates assumes). The auxiliary-generation
  // protocol trains towers with a material share so substituted features
  // can matter.
  double reference_weight = 0.0;
};

struct RankTrainConfig {
  int epochs = 16;
  double lr = 0.05;
  int d_rank = 32;
  double init_scale = 0.05;
  double fusion_weight = 0.7;
  double reference_weight = 0.0;
  uint64_t seed = 11;
};

/// Scores and ranks for the three-candidate set. Ranks are a permutation of
/// {1,2,3}; rank 1 is the highest score, ties resolve reference < global <
/// generated so a generated image never wins a tie for free.
struct RankOutcome {
  std::map<Provenance, double> scores;
  std::map<Provenance, int> ranks;
};

struct EpochLog {
  int epoch = 0;
  double pairwise_auc = 0.0;
  double mean_loss = 0.0;
};

struct RankTrainResult {
  RankModelParams params;
  std::vector<EpochLog> epochs;
};

/// Pairwise logistic ranking objective: one uniformly sampled negative per
/// positive interaction per epoch; positives are the history items plus the
/// reference. With reference_weight > 0 the user tower blends the reference
/// item's visual feature into the history mean, and `reference_features`
/// substitutes that per-user tower feature (the auxiliary-generation hook;
/// the reference positive itself always keeps its original feature).
RankTrainResult train_rank_model(
    const Corpus& corpus, const RankTrainConfig& cfg, const SemanticEncoder& encoder,
    const std::map<std::string, Vec>* reference_features = nullptr);

Vec user_embedding(const Corpus& corpus, const UserSequence& user,
                   const RankModelParams& params);

Vec item_embedding(const RankModelParams& params, const Vec& visual_feature,
                   const Vec& semantic_embedding);

/// Eq-style three-way scoring of {reference, global, generated} against the
/// user's history. All candidates share the reference caption on the text
/// side; only their visual features differ.
RankOutcome score_candidates(const Corpus& corpus, const UserSequence& user,
                             const std::vector<GeneratedImage>& candidates,
                             const RankModelParams& params, const SemanticEncoder& encoder);

/// Catalog items sorted by score desc (ties by id asc), minus exclusions.
/// The user representation matches training: history plus the reference,
/// whose feature `reference_feature` overrides when given.
std::vector<std::string> rank_catalog(const Corpus& corpus, const UserSequence& user,
                                      const RankModelParams& params,
                                      const SemanticEncoder& encoder,
                                      const std::vector<std::string>& exclude_ids = {},
                                      const Vec* reference_feature = nullptr);

double recall_at_k(const std::vector<std::string>& ranked,
                   const std::vector<std::string>& positives, int k);
double ndcg_at_k(const std::vector<std::string>& ranked,
                 const std::vector<std::string>& positives, int k);

/// Loss and analytic gradients for one (user, positive, negative) triple;
/// exposed so the finite-difference harness can check them directly.
struct PairGradients {
  double loss = 0.0;
  Mat d_user_proj;
  Mat d_item_proj_visual;
  Mat d_item_proj_text;
};

PairGradients pairwise_loss_gradients(const RankModelParams& params, const Vec& history_mean,
                                      const Vec& pos_feat, const Vec& pos_sem,
                                      const Vec& neg_feat, const Vec& neg_sem);

}  // namespace ragar
