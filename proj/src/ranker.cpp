#include "ragar/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ragar {

namespace {

int tie_priority(Provenance p) {
  switch (p) {
    case Provenance::kReference: return 0;
    case Provenance::kGlobal: return 1;
    case Provenance::kGenerated: return 2;
  }
  return 3;
}

struct ItemCache {
  std::vector<std::string> pool_ids;
  std::vector<Vec> pool_features;
  std::vector<Vec> pool_sems;
  std::map<std::string, int> pool_index;
  std::vector<Vec> user_means;  // per corpus.users index, reference included
};

// Tower-side user representation: the plain history mean, optionally blended
// with the reference item's (substitutable) visual feature.
Vec tower_user_mean(const Corpus& corpus, const UserSequence& user, const Vec& ref_feature,
                    double reference_weight) {
  Vec mean(corpus.config.dim_visual, 0.0);
  for (const auto& id : user.history_ids) {
    axpy(mean, (1.0 - reference_weight) / static_cast<double>(user.history_ids.size()),
         corpus.item(id).visual_feature);
  }
  if (reference_weight > 0.0) axpy(mean, reference_weight, ref_feature);
  return mean;
}

ItemCache build_cache(const Corpus& corpus, const SemanticEncoder& encoder,
                      const std::vector<Vec>& ref_features, double reference_weight) {
  ItemCache cache;
  cache.pool_ids = corpus.pool_item_ids;
  cache.pool_features.reserve(cache.pool_ids.size());
  cache.pool_sems.reserve(cache.pool_ids.size());
  for (size_t i = 0; i < cache.pool_ids.size(); ++i) {
    const Item& it = corpus.item(cache.pool_ids[i]);
    cache.pool_features.push_back(it.visual_feature);
    cache.pool_sems.push_back(encoder.encode(it.caption, it.item_id).vec);
    cache.pool_index[cache.pool_ids[i]] = static_cast<int>(i);
  }
  for (size_t ui = 0; ui < corpus.users.size(); ++ui) {
    cache.user_means.push_back(
        tower_user_mean(corpus, corpus.users[ui], ref_features[ui], reference_weight));
  }
  return cache;
}

}  // namespace

Vec user_embedding(const Corpus& corpus, const UserSequence& user,
                   const RankModelParams& params) {
  Vec mean(corpus.config.dim_visual, 0.0);
  if (user.history_ids.empty()) throw std::invalid_argument("user_embedding: empty history");
  for (const auto& id : user.history_ids) axpy(mean, 1.0, corpus.item(id).visual_feature);
  for (auto& v : mean) v /= static_cast<double>(user.history_ids.size());
  return mat_vec(params.user_proj, mean);
}

Vec item_embedding(const RankModelParams& params, const Vec& visual_feature,
                   const Vec& semantic_embedding) {
  Vec vis = mat_vec(params.item_proj_visual, visual_feature);
  Vec txt = mat_vec(params.item_proj_text, semantic_embedding);
  Vec out(vis.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = params.fusion_weight * vis[i] + (1.0 - params.fusion_weight) * txt[i];
  }
  return out;
}

PairGradients pairwise_loss_gradients(const RankModelParams& params, const Vec& history_mean,
                                      const Vec& pos_feat, const Vec& pos_sem,
                                      const Vec& neg_feat, const Vec& neg_sem) {
  const Vec u = mat_vec(params.user_proj, history_mean);
  const Vec e_pos = item_embedding(params, pos_feat, pos_sem);
  const Vec e_neg = item_embedding(params, neg_feat, neg_sem);
  const double margin = dot(u, e_pos) - dot(u, e_neg);

  PairGradients g;
  // softplus(-margin), with the overflow-safe branch.
  g.loss = margin > 0.0 ? std::log1p(std::exp(-margin))
                        : -margin + std::log1p(std::exp(margin));
  const double coeff = -1.0 / (1.0 + std::exp(margin));  // d loss / d margin

  const Vec diff = sub(e_pos, e_neg);
  g.d_user_proj = outer(diff, history_mean);
  for (auto& v : g.d_user_proj.data) v *= coeff;

  const double fw = params.fusion_weight;
  Mat dv = outer(u, sub(pos_feat, neg_feat));
  for (auto& v : dv.data) v *= coeff * fw;
  g.d_item_proj_visual = std::move(dv);

  Mat dt = outer(u, sub(pos_sem, neg_sem));
  for (auto& v : dt.data) v *= coeff * (1.0 - fw);
  g.d_item_proj_text = std::move(dt);
  return g;
}

RankTrainResult train_rank_model(const Corpus& corpus, const RankTrainConfig& cfg,
                                 const SemanticEncoder& encoder,
                                 const std::map<std::string, Vec>* reference_features) {
  if (cfg.fusion_weight < 0.0 || cfg.fusion_weight > 1.0) {
    throw std::invalid_argument("train_rank_model: fusion_weight must be in [0,1]");
  }
  if (cfg.reference_weight < 0.0 || cfg.reference_weight > 1.0) {
    throw std::invalid_argument("train_rank_model: reference_weight must be in [0,1]");
  }
  if (cfg.epochs < 0 || cfg.d_rank < 1) {
    throw std::invalid_argument("train_rank_model: bad epochs/d_rank");
  }
  for (const auto& user : corpus.users) {
    if (user.held_out_ids.empty()) {
      throw std::invalid_argument("train_rank_model: user " + user.user_id +
                                  " has no held-out positives for evaluation");
    }
  }

  const int d_v = corpus.config.dim_visual;
  const int d_s = encoder.dim();

  const Rng root(cfg.seed);
  RankModelParams params;
  params.fusion_weight = cfg.fusion_weight;
  params.reference_weight = cfg.reference_weight;
  // Identity-dominated init keeps the towers near-isometric, so the raw
  // feature geometry (what the corpus plants) survives into the scores and
  // training only has to refine it.
  const double scale = cfg.init_scale / std::sqrt(static_cast<double>(d_v));
  auto near_identity = [&](int rows, int cols, const char* tag) {
    Mat m = Mat::random_gaussian(rows, cols, scale, root.split(tag));
    for (int i = 0; i < std::min(rows, cols); ++i) m(i, i) += 1.0;
    return m;
  };
  params.user_proj = near_identity(cfg.d_rank, d_v, "user_proj");
  params.item_proj_visual = near_identity(cfg.d_rank, d_v, "item_vis");
  params.item_proj_text = near_identity(cfg.d_rank, d_s, "item_txt");

  // Training positives: history interactions plus the reference item. The
  // reference's visual feature is substitutable per user, which is how the
  // auxiliary-generation arms differ.
  struct Positive {
    int user = 0;
    const Vec* feat = nullptr;
    const Vec* sem = nullptr;
  };
  std::vector<Positive> positives;
  std::vector<Vec> ref_sems(corpus.users.size());
  std::vector<Vec> ref_feats(corpus.users.size());
  std::vector<std::set<std::string>> forbidden(corpus.users.size());
  std::vector<Vec> history_sems;  // stable storage
  history_sems.reserve(corpus.users.size() * corpus.config.history_len);
  std::vector<std::pair<int, std::pair<const Vec*, int>>> hist_slots;
  for (size_t ui = 0; ui < corpus.users.size(); ++ui) {
    const auto& user = corpus.users[ui];
    for (const auto& id : user.history_ids) {
      const Item& it = corpus.item(id);
      history_sems.push_back(encoder.encode(it.caption, it.item_id).vec);
    }
    const Item& ref = corpus.item(user.reference_id);
    ref_sems[ui] = encoder.encode(ref.caption, ref.item_id).vec;
    if (reference_features && reference_features->count(user.user_id)) {
      ref_feats[ui] = reference_features->at(user.user_id);
      if (static_cast<int>(ref_feats[ui].size()) != d_v) {
        throw std::invalid_argument("train_rank_model: substituted feature dim mismatch for " +
                                    user.user_id);
      }
    } else {
      ref_feats[ui] = ref.visual_feature;
    }
    forbidden[ui].insert(user.reference_id);
    for (const auto& id : user.held_out_ids) forbidden[ui].insert(id);
  }
  const ItemCache cache = build_cache(corpus, encoder, ref_feats, cfg.reference_weight);
  {
    size_t slot = 0;
    for (size_t ui = 0; ui < corpus.users.size(); ++ui) {
      const auto& user = corpus.users[ui];
      for (const auto& id : user.history_ids) {
        positives.push_back({static_cast<int>(ui), &corpus.item(id).visual_feature,
                             &history_sems[slot]});
        ++slot;
      }
      positives.push_back({static_cast<int>(ui),
                           &corpus.item(user.reference_id).visual_feature, &ref_sems[ui]});
    }
  }

  auto sample_negative = [&](int user_idx, Rng& rng) -> int {
    for (;;) {
      const int j = rng.uniform_int(static_cast<int>(cache.pool_ids.size()));
      if (!forbidden[user_idx].count(cache.pool_ids[j])) return j;
    }
  };

  auto pairwise_auc = [&](Rng rng) {
    int wins = 0, ties = 0, total = 0;
    for (const auto& pos : positives) {
      const Vec u = mat_vec(params.user_proj, cache.user_means[pos.user]);
      const double s_pos = dot(u, item_embedding(params, *pos.feat, *pos.sem));
      const int j = sample_negative(pos.user, rng);
      const double s_neg =
          dot(u, item_embedding(params, cache.pool_features[j], cache.pool_sems[j]));
      if (s_pos > s_neg) ++wins;
      else if (s_pos == s_neg) ++ties;
      ++total;
    }
    return total == 0 ? 0.0 : (wins + 0.5 * ties) / total;
  };

  RankTrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng = root.split("epoch").split(static_cast<uint64_t>(epoch));
    // Deterministic shuffle of the step order.
    std::vector<int> order(positives.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[erng.uniform_int(i + 1)]);
    }
    double loss_sum = 0.0;
    for (int idx : order) {
      const auto& pos = positives[idx];
      const int j = sample_negative(pos.user, erng);
      PairGradients g = pairwise_loss_gradients(params, cache.user_means[pos.user], *pos.feat,
                                                *pos.sem, cache.pool_features[j],
                                                cache.pool_sems[j]);
      loss_sum += g.loss;
      params.user_proj = sgd_step(params.user_proj, g.d_user_proj, cfg.lr);
      params.item_proj_visual = sgd_step(params.item_proj_visual, g.d_item_proj_visual, cfg.lr);
      params.item_proj_text = sgd_step(params.item_proj_text, g.d_item_proj_text, cfg.lr);
    }
    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = loss_sum / static_cast<double>(positives.size());
    log.pairwise_auc = pairwise_auc(root.split("auc_eval").split(static_cast<uint64_t>(epoch)));
    result.epochs.push_back(log);
  }
  result.params = std::move(params);
  return result;
}

RankOutcome score_candidates(const Corpus& corpus, const UserSequence& user,
                             const std::vector<GeneratedImage>& candidates,
                             const RankModelParams& params, const SemanticEncoder& encoder) {
  if (candidates.size() != 3) {
    throw std::invalid_argument("score_candidates: exactly three candidates required");
  }
  std::set<Provenance> seen;
  for (const auto& c : candidates) {
    if (!seen.insert(c.provenance).second) {
      throw std::invalid_argument("score_candidates: duplicate provenance " +
                                  to_string(c.provenance));
    }
  }

  const Item& ref = corpus.item(user.reference_id);
  const Vec ref_sem = encoder.encode(ref.caption, ref.item_id).vec;
  const Vec u = user_embedding(corpus, user, params);

  RankOutcome outcome;
  for (const auto& c : candidates) {
    outcome.scores[c.provenance] = dot(u, item_embedding(params, c.feature, ref_sem));
  }
  std::vector<Provenance> order;
  for (const auto& [prov, score] : outcome.scores) order.push_back(prov);
  std::sort(order.begin(), order.end(), [&](Provenance a, Provenance b) {
    if (outcome.scores[a] != outcome.scores[b]) return outcome.scores[a] > outcome.scores[b];
    return tie_priority(a) < tie_priority(b);
  });
  for (size_t i = 0; i < order.size(); ++i) outcome.ranks[order[i]] = static_cast<int>(i) + 1;
  return outcome;
}

std::vector<std::string> rank_catalog(const Corpus& corpus, const UserSequence& user,
                                      const RankModelParams& params,
                                      const SemanticEncoder& encoder,
                                      const std::vector<std::string>& exclude_ids,
                                      const Vec* reference_feature) {
  const Vec& ref_feat =
      reference_feature ? *reference_feature : corpus.item(user.reference_id).visual_feature;
  const Vec u =
      mat_vec(params.user_proj, tower_user_mean(corpus, user, ref_feat, params.reference_weight));
  const std::set<std::string> excluded(exclude_ids.begin(), exclude_ids.end());
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& id : corpus.pool_item_ids) {
    if (excluded.count(id)) continue;
    const Item& it = corpus.item(id);
    const Vec sem = encoder.encode(it.caption, it.item_id).vec;
    scored.emplace_back(dot(u, item_embedding(params, it.visual_feature, sem)), id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (const auto& [score, id] : scored) out.push_back(id);
  return out;
}

double recall_at_k(const std::vector<std::string>& ranked,
                   const std::vector<std::string>& positives, int k) {
  if (k < 1) throw std::domain_error("recall_at_k: k must be >= 1");
  if (positives.empty()) throw std::domain_error("recall_at_k: no positives");
  const std::set<std::string> pos(positives.begin(), positives.end());
  int hits = 0;
  const int top = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int i = 0; i < top; ++i) {
    if (pos.count(ranked[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pos.size());
}

double ndcg_at_k(const std::vector<std::string>& ranked,
                 const std::vector<std::string>& positives, int k) {
  if (k < 1) throw std::domain_error("ndcg_at_k: k must be >= 1");
  if (positives.empty()) throw std::domain_error("ndcg_at_k: no positives");
  const std::set<std::string> pos(positives.begin(), positives.end());
  double dcg = 0.0;
  const int top = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int i = 0; i < top; ++i) {
    if (pos.count(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  const int ideal = std::min<int>(k, static_cast<int>(pos.size()));
  for (int i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

}  // namespace ragar
