#pragma once

#include <string>
#include <vector>

#include "ragar/corpus.hpp"
#include "ragar/encoders.hpp"
#include "ragar/numerics.hpp"

namespace ragar {

enum class SelectionStrategy { kRet, kExpRet, kRandom };

std::string to_string(SelectionStrategy s);

/// Outcome of selecting and fusing history items against the reference:
/// selected (history index, raw score) pairs sorted score-desc, the softmax
/// weights over those scores, and the fused visual preference.
struct RetrievalResult {
  std::vector<std::pair<int, double>> selected;
  Vec weights;
  Vec p_ret;
  SelectionStrategy strategy = SelectionStrategy::kRet;
};

struct RetrievalConfig {
  int k = 5;
  double score_temperature = 1.0;
  SelectionStrategy strategy = SelectionStrategy::kRet;
};

/// Caption-embedding cosine of every history item against the reference,
/// history order preserved.
Vec score_history(const Corpus& corpus, const UserSequence& user,
                  const SemanticEncoder& encoder);

/// kRet: the k best scores. kExpRet: scores ranked (k, 2k]. kRandom: k
/// uniform draws without replacement. Ties always break toward the lower
/// history index.
std::vector<int> select(const Vec& scores, int k, SelectionStrategy strategy, Rng rng);

/// Softmax-weighted fusion of the selected items' visual features.
RetrievalResult fuse(const Corpus& corpus, const UserSequence& user,
                     const std::vector<int>& selected, const Vec& scores,
                     const RetrievalConfig& cfg);

/// score + select + fuse in one call. k == 0 is the no-retrieval fallback:
/// every history item selected with equal weight.
RetrievalResult retrieve(const Corpus& corpus, const UserSequence& user,
                         const SemanticEncoder& encoder, const RetrievalConfig& cfg,
                         Rng rng);

}  // namespace ragar
