#pragma once

#include <map>
#include <string>
#include <vector>

#include "ragar/pipeline.hpp"
#include "ragar/ranker.hpp"

namespace ragar {

/// Protocol seed for the rank-change distractor pools; shared between the
/// step logs and the evaluation so both rank against the same items.
inline constexpr uint64_t kRankPoolSeed = 0xDE17A9001ULL;

struct MetricsConfig {
  int distractors = 9;  // pool size beyond the target
  uint64_t pool_seed = kRankPoolSeed;
  int ssim_window = 8;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  int jobs = 1;
};

/// Normalized rank change (rk_ori - rk_gen) / (1 + rk_ori); positive means
/// the generated image outranks the original.
double delta_r(int rk_ori, int rk_gen);

/// Mean of local SSIM over all window x window patches at stride 1, uniform
/// weighting, population moments, dynamic range 1.
double ssim(const Vec& x, const Vec& y, int side, int window = 8, double k1 = 0.01,
            double k2 = 0.03);

struct CosineMetrics {
  double cps = 0.0;   // projected feature vs keyword embedding
  double cpis = 0.0;  // feature vs retrieval-augmented preference
  double cs = 0.0;    // projected feature vs reference caption embedding
  double cis = 0.0;   // feature vs reference visual feature
};

CosineMetrics cosine_metric_family(const Pipeline& pipe, const UserContext& ctx,
                                   const GeneratedImage& generated);

/// Seeded per-user distractor pool drawn from the catalog (never the user's
/// reference or held-out items).
std::vector<std::string> sample_rank_pool(const Corpus& corpus, const UserSequence& user,
                                          int count, uint64_t pool_seed);

/// 1-based rank of the target image among the pool items; pool items win
/// exact ties. The target scores with the reference caption on the text side.
int rank_in_pool(const Pipeline& pipe, const UserContext& ctx, const Vec& target_feature,
                 const std::vector<std::string>& pool, const RankModelParams& rm);

struct UserMetrics {
  std::string user_id;
  int rk_ori = 0;
  int rk_gen = 0;
  double delta_r = 0.0;
  double cps = 0.0, cpis = 0.0, cs = 0.0, cis = 0.0;
  double ssim_personal = 0.0, ssim_semantic = 0.0;
  double pref_alignment = 0.0;  // generated feature vs planted preference (synthetic only)
};

struct MetricsReport {
  double delta_r = 0.0;
  double cps = 0.0, cpis = 0.0, cs = 0.0, cis = 0.0;
  double ssim_personal = 0.0, ssim_semantic = 0.0;
  double pref_alignment = 0.0;
  std::vector<UserMetrics> per_user;

  std::string to_json() const;   // structured record, deterministic layout
  std::string to_csv() const;    // one row per user plus a summary row
};

/// Full per-user evaluation with trained per-user calibrator parameters.
MetricsReport evaluate_run(const Pipeline& pipe,
                           const std::map<std::string, CalibratorParams>& per_user_params,
                           const RankModelParams& rm, const MetricsConfig& cfg);

}  // namespace ragar
