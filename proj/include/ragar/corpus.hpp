#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ragar/numerics.hpp"

namespace ragar {

/// One interactable thing: a caption/text pair plus a visual feature vector.
/// The pixel raster is optional in files; when absent it is rendered on
/// demand from the visual feature through the corpus renderer.
struct Item {
  std::string item_id;
  std::vector<std::string> caption;
  std::vector<std::string> text;
  Vec visual_feature;
  std::optional<Vec> pixel_grid;  // row-major pixel_side x pixel_side, values in [0,1]
  int pixel_side = 0;
  std::string category;
};

/// A user's interaction history plus the reference item the generation step
/// must stay semantically close to. planted_preference only exists for
/// synthetic corpora and is the ground truth the evaluation leans on.
struct UserSequence {
  std::string user_id;
  std::vector<std::string> history_ids;
  std::string reference_id;
  std::vector<std::string> held_out_ids;
  std::optional<Vec> planted_preference;
};

struct CorpusConfig {
  int users = 60;
  int history_len = 20;  // items per user excluding the reference
  int categories = 6;
  int items_per_category = 40;
  int dim_visual = 32;
  int caption_len = 6;
  int text_len = 10;
  int vocab_per_category = 12;
  int bridge_vocab = 6;   // tokens shared with each ring neighbour
  int anchor_tokens = 3;  // leading vocab tokens that mark a category's theme
  double anchor_prob = 0.85;
  int held_out_per_user = 5;
  double relevant_fraction = 0.25;
  int distractor_categories = 2;  // wrong-theme categories per user (0 = all)
  double distractor_relatedness_max = 0.95;  // tau ceiling for out-of-cluster items
  double feature_noise = 0.1;
  double preference_noise = 0.2;
  double preference_blend = 0.85;     // graded swap of prototype for preference in history features
  double prototype_ring_mix = 0.3; // blend of neighbour prototypes, gives graded category similarity
  double cluster_token_share = 0.9;  // chance a relevant token borrows from the cluster vocabulary
  double two_category_prob = 0.5;
  bool in_cluster_reference = true;
  int pixel_side = 16;
  double render_scale = 0.5;
  uint64_t renderer_seed = 0xC0FFEE12345ULL;  // shared across corpora by default
  uint64_t seed = 7;
};

class Corpus {
 public:
  std::map<std::string, Item> items;  // ordered: deterministic iteration
  std::vector<UserSequence> users;
  CorpusConfig config;
  std::map<std::string, Vec> category_prototypes;
  std::vector<std::string> pool_item_ids;  // the shared catalog (rank/eval candidates)

  const Item& item(const std::string& id) const;
  std::vector<const Item*> history(const UserSequence& user) const;

  /// clamp(W_render * feature) reshaped to pixel_side x pixel_side.
  Vec render_pixels(const Vec& feature) const;
  /// Stored raster if present, rendered otherwise.
  Vec item_pixels(const Item& it) const;

  const Mat& render_matrix() const { return render_; }
  void rebuild_renderer();  // derives W_render from config

 private:
  Mat render_;
};

/// Deterministic synthetic corpus with planted preferences. Same config and
/// seed produce byte-identical save() output.
Corpus generate_corpus(const CorpusConfig& config, uint64_t seed);

/// Line-delimited record format; schema documented in the README. load() of
/// a save()d corpus reproduces every field exactly.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(const std::string& text);

const std::vector<std::string>& default_stopwords();

}  // namespace ragar
