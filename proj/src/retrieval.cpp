#include "ragar/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ragar {

std::string to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::kRet: return "ret";
    case SelectionStrategy::kExpRet: return "exp_ret";
    case SelectionStrategy::kRandom: return "random";
  }
  return "unknown";
}

Vec score_history(const Corpus& corpus, const UserSequence& user,
                  const SemanticEncoder& encoder) {
  const Item& ref = corpus.item(user.reference_id);
  const Vec ref_emb = encoder.encode(ref.caption, ref.item_id).vec;
  Vec scores;
  scores.reserve(user.history_ids.size());
  for (size_t i = 0; i < user.history_ids.size(); ++i) {
    const Item& it = corpus.item(user.history_ids[i]);
    try {
      const Vec emb = encoder.encode(it.caption, it.item_id).vec;
      scores.push_back(cosine_similarity(emb, ref_emb));
    } catch (const std::exception& e) {
      throw std::runtime_error("score_history: history index " + std::to_string(i) +
                               " (" + it.item_id + "): " + e.what());
    }
  }
  return scores;
}

namespace {

// Rank order shared by kRet and kExpRet: score desc, then original index asc.
std::vector<int> rank_order(const Vec& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return idx;
}

}  // namespace

std::vector<int> select(const Vec& scores, int k, SelectionStrategy strategy, Rng rng) {
  const int n = static_cast<int>(scores.size());
  if (k < 1) throw std::domain_error("select: k must be >= 1");
  switch (strategy) {
    case SelectionStrategy::kRet: {
      if (k > n) throw std::domain_error("select: k exceeds history length (k <= " + std::to_string(n) + ")");
      auto order = rank_order(scores);
      return std::vector<int>(order.begin(), order.begin() + k);
    }
    case SelectionStrategy::kExpRet: {
      if (2 * k > n) {
        throw std::domain_error("select: expanded band needs 2k <= history length (2k <= " +
                                std::to_string(n) + ")");
      }
      auto order = rank_order(scores);
      return std::vector<int>(order.begin() + k, order.begin() + 2 * k);
    }
    case SelectionStrategy::kRandom: {
      if (k > n) throw std::domain_error("select: k exceeds history length (k <= " + std::to_string(n) + ")");
      std::vector<int> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      for (int i = 0; i < k; ++i) {
        const int j = i + rng.uniform_int(n - i);
        std::swap(idx[i], idx[j]);
      }
      idx.resize(k);
      return idx;
    }
  }
  throw std::invalid_argument("select: unknown strategy");
}

RetrievalResult fuse(const Corpus& corpus, const UserSequence& user,
                     const std::vector<int>& selected, const Vec& scores,
                     const RetrievalConfig& cfg) {
  if (selected.empty()) throw std::domain_error("fuse: empty selection");
  if (cfg.score_temperature <= 0.0) throw std::domain_error("fuse: temperature must be positive");

  RetrievalResult result;
  result.strategy = cfg.strategy;
  result.selected.reserve(selected.size());
  for (int idx : selected) {
    if (idx < 0 || idx >= static_cast<int>(scores.size())) {
      throw std::invalid_argument("fuse: selected index out of range");
    }
    result.selected.emplace_back(idx, scores[idx]);
  }
  std::stable_sort(result.selected.begin(), result.selected.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vec sel_scores(result.selected.size());
  for (size_t i = 0; i < result.selected.size(); ++i) {
    sel_scores[i] = result.selected[i].second / cfg.score_temperature;
  }
  result.weights = softmax_weights(sel_scores);

  const int dim = corpus.config.dim_visual;
  result.p_ret.assign(dim, 0.0);
  for (size_t i = 0; i < result.selected.size(); ++i) {
    const Item& it = corpus.item(user.history_ids[result.selected[i].first]);
    axpy(result.p_ret, result.weights[i], it.visual_feature);
  }
  return result;
}

RetrievalResult retrieve(const Corpus& corpus, const UserSequence& user,
                         const SemanticEncoder& encoder, const RetrievalConfig& cfg,
                         Rng rng) {
  const Vec scores = score_history(corpus, user, encoder);
  if (cfg.k == 0) {
    // No-retrieval fallback: the whole history, equally weighted.
    std::vector<int> all(scores.size());
    std::iota(all.begin(), all.end(), 0);
    return fuse(corpus, user, all, Vec(scores.size(), 0.0), cfg);
  }
  const auto selected = select(scores, cfg.k, cfg.strategy, rng);
  return fuse(corpus, user, selected, scores, cfg);
}

}  // namespace ragar
