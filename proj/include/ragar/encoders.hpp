#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragar/corpus.hpp"
#include "ragar/numerics.hpp"

namespace ragar {

/// Unit-norm embedding of a caption under the deterministic surrogate
/// encoder (bag of seeded token projections).
struct SemanticEmbedding {
  Vec vec;
  std::string source_item;
};

struct EncoderConfig {
  int dim = 32;
  // Definitional constant: token projections depend only on (seed, token),
  // never on the run seed, so embeddings match across runs and machines.
  uint64_t token_table_seed = 0x7A6AC0DE2024ULL;
  std::vector<std::string> stopwords = default_stopwords();
};

/// Projection of a single token. Entries are uniform in [-1,1) built from
/// the top 53 bits of a splitmix stream, i.e. exact dyadic rationals, so a
/// reimplementation in any language reproduces them bit for bit.
Vec token_vector(const std::string& token, int dim, uint64_t table_seed);

class SemanticEncoder {
 public:
  explicit SemanticEncoder(EncoderConfig cfg = {});

  /// L2-normalized sum of token projections, stopwords removed first.
  /// Order-invariant by construction; throws std::domain_error if nothing
  /// survives the stopword filter.
  SemanticEmbedding encode(const std::vector<std::string>& caption,
                           const std::string& source_item = "") const;

  bool is_stopword(const std::string& token) const;
  int dim() const { return cfg_.dim; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
};

/// Per-item keyword lists plus the cross-item filtered ranking
/// (count desc, then lexicographic asc; low-frequency keywords dropped).
struct KeywordSet {
  std::map<std::string, std::vector<std::string>> per_item;
  std::vector<std::pair<std::string, int>> filtered;

  std::vector<std::string> filtered_tokens() const;
};

struct KeywordExtractorConfig {
  enum class Mode { kDeterministic, kExternal };
  Mode mode = Mode::kDeterministic;
  std::vector<std::string> stopwords = default_stopwords();
  int min_count = 2;
  int top_n = 10;
  // external mode only
  std::string endpoint_url;
  int timeout_ms = 2000;
  int retries = 2;
  int batch_size = 16;
  int max_inflight = 4;
  bool fallback_to_deterministic = false;
};

/// Raised when the external keyword endpoint cannot be reached; carries the
/// number of attempts that were made.
struct EndpointError : std::runtime_error {
  int attempts;
  EndpointError(const std::string& msg, int attempts_)
      : std::runtime_error(msg), attempts(attempts_) {}
};

/// Deterministic mode: per-item keywords are the deduplicated caption+text
/// tokens minus stopwords. External mode posts {"texts": [...]} to the
/// endpoint and expects {"keywords": [[...], ...]}; filtering is identical
/// in both modes.
KeywordSet extract_keywords(const std::vector<const Item*>& items,
                            const KeywordExtractorConfig& cfg);

std::vector<std::string> load_stopword_file(const std::string& path);

}  // namespace ragar
