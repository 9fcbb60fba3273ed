#include "ragar/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ragar {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::string cat_name(int c) { return "cat" + std::to_string(c); }

// Readable synthetic tokens, three seeded syllables each.
std::string make_token(Rng& rng, std::set<std::string>& used) {
  static const std::vector<std::string> syllables = {
      "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du", "ka", "ke",
      "ki", "ko", "ku", "la", "le", "li", "lo", "lu", "ma", "me", "mi", "mo",
      "mu", "na", "ne", "ni", "no", "nu", "ra", "re", "ri", "ro", "ru", "sa",
      "se", "si", "so", "su", "ta", "te", "ti", "to", "tu", "va", "ve", "vi",
      "vo", "vu", "za", "ze", "zi", "zo", "zu"};
  for (;;) {
    std::string tok;
    for (int s = 0; s < 3; ++s) tok += syllables[rng.uniform_int(static_cast<int>(syllables.size()))];
    if (used.insert(tok).second) return tok;
  }
}

Vec random_unit(Rng& rng, int dim) {
  Vec v(dim);
  for (auto& x : v) x = rng.normal();
  return normalized(v);
}

struct Vocab {
  // own[c]: tokens unique to category c; bridge[c]: tokens shared by c and (c+1)%C
  std::vector<std::vector<std::string>> own;
  std::vector<std::vector<std::string>> bridge;

  std::vector<std::string> anchors(int c, int n) const {
    const int count = std::min<int>(n, static_cast<int>(own[c].size()));
    return std::vector<std::string>(own[c].begin(), own[c].begin() + count);
  }

  // Everything a category can draw from: its own tokens plus both bridges.
  std::vector<std::string> drawable(int c, int categories) const {
    std::vector<std::string> out = own[c];
    const auto& right = bridge[c];
    const auto& left = bridge[(c + categories - 1) % categories];
    out.insert(out.end(), right.begin(), right.end());
    out.insert(out.end(), left.begin(), left.end());
    return out;
  }
};

Vocab build_vocab(const CorpusConfig& cfg, Rng rng) {
  Vocab v;
  std::set<std::string> used(default_stopwords().begin(), default_stopwords().end());
  v.own.resize(cfg.categories);
  v.bridge.resize(cfg.categories);
  for (int c = 0; c < cfg.categories; ++c) {
    Rng r = rng.split(static_cast<uint64_t>(c));
    for (int i = 0; i < cfg.vocab_per_category; ++i) v.own[c].push_back(make_token(r, used));
    for (int i = 0; i < cfg.bridge_vocab; ++i) v.bridge[c].push_back(make_token(r, used));
  }
  return v;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[rng.uniform_int(static_cast<int>(pool.size()))];
}

// Captions mix theme-anchor tokens with filler. Anchors carry most of the
// similarity signal; `borrow` grades how strongly the text leans toward the
// borrowed theme instead of the item's own.
std::vector<std::string> draw_tokens(int total, int stop_count, double anchor_prob,
                                     const std::vector<std::string>& own_anchors,
                                     const std::vector<std::string>& own_pool,
                                     const std::vector<std::string>& borrow_anchors,
                                     const std::vector<std::string>& borrow_pool,
                                     double borrow, Rng& rng) {
  const int slots = total - stop_count;
  std::vector<std::string> toks;
  for (const auto& a : borrow_anchors) {
    if (static_cast<int>(toks.size()) < slots && rng.uniform() < anchor_prob * borrow) {
      toks.push_back(a);
    }
  }
  for (const auto& a : own_anchors) {
    if (static_cast<int>(toks.size()) >= slots) break;
    if (std::find(toks.begin(), toks.end(), a) != toks.end()) continue;
    if (rng.uniform() < anchor_prob * (1.0 - borrow)) toks.push_back(a);
  }
  while (static_cast<int>(toks.size()) < slots) {
    const bool borrowed = !borrow_pool.empty() && rng.uniform() < borrow;
    toks.push_back(pick(borrowed ? borrow_pool : own_pool, rng));
  }
  for (int i = 0; i < stop_count; ++i) toks.push_back(pick(default_stopwords(), rng));
  for (int i = static_cast<int>(toks.size()) - 1; i > 0; --i) {
    std::swap(toks[i], toks[rng.uniform_int(i + 1)]);
  }
  return toks;
}

json vec_to_json(const Vec& v) { return json(v); }

Vec vec_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw std::runtime_error("field '" + field + "' must be an array");
  Vec v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw std::runtime_error("field '" + field + "' must contain numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

json config_to_json(const CorpusConfig& c) {
  json j;
  j["users"] = c.users;
  j["history_len"] = c.history_len;
  j["categories"] = c.categories;
  j["items_per_category"] = c.items_per_category;
  j["dim_visual"] = c.dim_visual;
  j["caption_len"] = c.caption_len;
  j["text_len"] = c.text_len;
  j["vocab_per_category"] = c.vocab_per_category;
  j["bridge_vocab"] = c.bridge_vocab;
  j["held_out_per_user"] = c.held_out_per_user;
  j["relevant_fraction"] = c.relevant_fraction;
  j["distractor_categories"] = c.distractor_categories;
  j["distractor_relatedness_max"] = c.distractor_relatedness_max;
  j["feature_noise"] = c.feature_noise;
  j["preference_noise"] = c.preference_noise;
  j["preference_blend"] = c.preference_blend;
  j["prototype_ring_mix"] = c.prototype_ring_mix;
  j["cluster_token_share"] = c.cluster_token_share;
  j["two_category_prob"] = c.two_category_prob;
  j["in_cluster_reference"] = c.in_cluster_reference;
  j["pixel_side"] = c.pixel_side;
  j["render_scale"] = c.render_scale;
  j["renderer_seed"] = c.renderer_seed;
  j["seed"] = c.seed;
  return j;
}

CorpusConfig config_from_json(const json& j) {
  CorpusConfig c;
  c.users = j.at("users").get<int>();
  c.history_len = j.at("history_len").get<int>();
  c.categories = j.at("categories").get<int>();
  c.items_per_category = j.at("items_per_category").get<int>();
  c.dim_visual = j.at("dim_visual").get<int>();
  c.caption_len = j.at("caption_len").get<int>();
  c.text_len = j.at("text_len").get<int>();
  c.vocab_per_category = j.at("vocab_per_category").get<int>();
  c.bridge_vocab = j.at("bridge_vocab").get<int>();
  c.held_out_per_user = j.at("held_out_per_user").get<int>();
  c.relevant_fraction = j.at("relevant_fraction").get<double>();
  c.distractor_categories = j.at("distractor_categories").get<int>();
  c.distractor_relatedness_max = j.at("distractor_relatedness_max").get<double>();
  c.feature_noise = j.at("feature_noise").get<double>();
  c.preference_noise = j.at("preference_noise").get<double>();
  c.preference_blend = j.at("preference_blend").get<double>();
  c.prototype_ring_mix = j.at("prototype_ring_mix").get<double>();
  c.cluster_token_share = j.at("cluster_token_share").get<double>();
  c.two_category_prob = j.at("two_category_prob").get<double>();
  c.in_cluster_reference = j.at("in_cluster_reference").get<bool>();
  c.pixel_side = j.at("pixel_side").get<int>();
  c.render_scale = j.at("render_scale").get<double>();
  c.renderer_seed = j.at("renderer_seed").get<uint64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

void validate_item(const Item& it, const std::string& where) {
  if (it.item_id.empty()) throw std::runtime_error(where + ": empty item_id");
  if (it.visual_feature.empty()) throw std::runtime_error(where + ": empty visual_feature");
  check_finite(it.visual_feature, where + " visual_feature");
  if (norm(it.visual_feature) == 0.0) {
    throw std::runtime_error(where + ": visual_feature has zero norm");
  }
  if (it.pixel_grid) {
    if (static_cast<int>(it.pixel_grid->size()) != it.pixel_side * it.pixel_side) {
      throw std::runtime_error(where + ": pixel_grid size does not match pixel_side");
    }
    for (double p : *it.pixel_grid) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::runtime_error(where + ": pixel_grid value outside [0,1]");
      }
    }
  }
}

}  // namespace

const std::vector<std::string>& default_stopwords() {
  static const std::vector<std::string> words = {"the", "a",  "of",  "and",
                                                 "with", "in", "on",  "for"};
  return words;
}

const Item& Corpus::item(const std::string& id) const {
  auto it = items.find(id);
  if (it == items.end()) throw std::invalid_argument("unknown item id: " + id);
  return it->second;
}

std::vector<const Item*> Corpus::history(const UserSequence& user) const {
  std::vector<const Item*> out;
  out.reserve(user.history_ids.size());
  for (const auto& id : user.history_ids) out.push_back(&item(id));
  return out;
}

void Corpus::rebuild_renderer() {
  const int pixels = config.pixel_side * config.pixel_side;
  render_ = Mat::random_gaussian(pixels, config.dim_visual, config.render_scale,
                                 Rng(config.renderer_seed));
}

Vec Corpus::render_pixels(const Vec& feature) const {
  Vec px = mat_vec(render_, feature);
  for (auto& p : px) p = std::clamp(p, 0.0, 1.0);
  return px;
}

Vec Corpus::item_pixels(const Item& it) const {
  if (it.pixel_grid) return *it.pixel_grid;
  return render_pixels(it.visual_feature);
}

Corpus generate_corpus(const CorpusConfig& config, uint64_t seed) {
  if (config.categories < 2) throw std::invalid_argument("generate_corpus: need at least 2 categories");
  if (config.relevant_fraction < 0.0 || config.relevant_fraction > 1.0) {
    throw std::invalid_argument("generate_corpus: relevant_fraction must be in [0,1]");
  }
  if (config.history_len < 1 || config.users < 1 || config.items_per_category < 1) {
    throw std::invalid_argument("generate_corpus: counts must be positive");
  }
  if (config.held_out_per_user + 1 > config.items_per_category) {
    throw std::invalid_argument("generate_corpus: items_per_category too small for held-out split");
  }

  Corpus corpus;
  corpus.config = config;
  corpus.config.seed = seed;
  const Rng root(seed);
  const int C = config.categories;

  // Category prototypes: orthonormal base, then a ring blend so neighbouring
  // categories stay correlated. That gradation is what separates retrieving
  // the next-best items from picking random ones.
  {
    Rng proto_rng = root.split("prototypes");
    std::vector<Vec> base;
    for (int c = 0; c < C; ++c) {
      Vec v(config.dim_visual);
      for (auto& x : v) x = proto_rng.normal();
      for (const auto& b : base) axpy(v, -dot(v, b), b);
      base.push_back(normalized(v));
    }
    for (int c = 0; c < C; ++c) {
      Vec p = base[c];
      axpy(p, config.prototype_ring_mix, base[(c + 1) % C]);
      axpy(p, config.prototype_ring_mix, base[(c + C - 1) % C]);
      corpus.category_prototypes[cat_name(c)] = normalized(p);
    }
  }

  const Vocab vocab = build_vocab(config, root.split("vocab"));
  std::vector<std::vector<std::string>> drawable(C);
  std::vector<std::vector<std::string>> anchors(C);
  for (int c = 0; c < C; ++c) {
    drawable[c] = vocab.drawable(c, C);
    anchors[c] = vocab.anchors(c, config.anchor_tokens);
  }

  // Shared catalog items.
  for (int c = 0; c < C; ++c) {
    const Vec& proto = corpus.category_prototypes.at(cat_name(c));
    for (int i = 0; i < config.items_per_category; ++i) {
      Rng rng = root.split("pool").split(static_cast<uint64_t>(c) * 100000 + i);
      Item it;
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "it_c%d_%03d", c, i);
      it.item_id = idbuf;
      it.category = cat_name(c);
      Vec f = proto;
      for (int d = 0; d < config.dim_visual; ++d) f[d] += config.feature_noise * rng.normal();
      it.visual_feature = normalized(f);
      it.caption = draw_tokens(config.caption_len, 1, config.anchor_prob, anchors[c],
                               drawable[c], {}, {}, 0.0, rng);
      it.text = draw_tokens(config.text_len, 2, config.anchor_prob, anchors[c], drawable[c],
                            {}, {}, 0.0, rng);
      it.pixel_side = config.pixel_side;
      corpus.pool_item_ids.push_back(it.item_id);
      corpus.items.emplace(it.item_id, std::move(it));
    }
  }

  const int n_rel = static_cast<int>(std::llround(config.relevant_fraction * config.history_len));

  for (int u = 0; u < config.users; ++u) {
    Rng rng = root.split("users").split(static_cast<uint64_t>(u));
    UserSequence user;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "u%03d", u);
    user.user_id = idbuf;

    // Cluster of 1-2 adjacent categories plus a planted preference inside it.
    const int c0 = rng.uniform_int(C);
    const bool two = rng.uniform() < config.two_category_prob;
    const int c1 = two ? (c0 + 1) % C : c0;
    const double w0 = two ? rng.uniform(0.55, 0.85) : 1.0;
    Vec pref = scaled(corpus.category_prototypes.at(cat_name(c0)), w0);
    if (two) axpy(pref, 1.0 - w0, corpus.category_prototypes.at(cat_name(c1)));
    axpy(pref, config.preference_noise, random_unit(rng, config.dim_visual));
    user.planted_preference = normalized(pref);

    std::vector<std::string> cluster_pool = drawable[c0];
    if (two) {
      cluster_pool.insert(cluster_pool.end(), drawable[c1].begin(), drawable[c1].end());
    }

    // Distractors concentrate in a few wrong themes rather than spreading
    // uniformly; that concentration is what makes them distort an unweighted
    // preference estimate instead of averaging out.
    std::vector<int> wrong_cats;
    for (int c = 0; c < C; ++c) {
      if (c != c0 && c != c1) wrong_cats.push_back(c);
    }
    if (config.distractor_categories > 0 &&
        config.distractor_categories < static_cast<int>(wrong_cats.size())) {
      for (int i = static_cast<int>(wrong_cats.size()) - 1; i > 0; --i) {
        std::swap(wrong_cats[i], wrong_cats[rng.uniform_int(i + 1)]);
      }
      wrong_cats.resize(config.distractor_categories);
    }

    // History slots carry a latent relatedness tau in [0,1]: in-cluster slots
    // sit in the top band, distractors spread over the rest. Both the visual
    // preference component and the odds of borrowing cluster vocabulary scale
    // with tau, so semantic rank and preference signal rise together.
    for (int h = 0; h < config.history_len; ++h) {
      const bool relevant = h < n_rel;
      const double tau = relevant ? rng.uniform(0.75, 1.0)
                                  : rng.uniform(0.0, config.distractor_relatedness_max);
      int cat;
      if (relevant) {
        cat = (rng.uniform() < w0) ? c0 : c1;
      } else {
        cat = wrong_cats[rng.uniform_int(static_cast<int>(wrong_cats.size()))];
      }
      Item it;
      char hid[32];
      std::snprintf(hid, sizeof(hid), "%s_h%02d", user.user_id.c_str(), h);
      it.item_id = hid;
      it.category = cat_name(cat);
      // Graded blend: the preference component displaces the category
      // prototype as relatedness grows, so alignment rises smoothly with the
      // item's semantic rank instead of jumping at the cluster boundary.
      const double blend = config.preference_blend * tau;
      Vec f = scaled(corpus.category_prototypes.at(it.category), 1.0 - blend);
      axpy(f, blend, *user.planted_preference);
      for (int d = 0; d < config.dim_visual; ++d) f[d] += config.feature_noise * rng.normal();
      it.visual_feature = normalized(f);
      const double borrow = std::min(0.9, config.cluster_token_share * tau);
      it.caption = draw_tokens(config.caption_len, 1, config.anchor_prob, anchors[cat],
                               drawable[cat], anchors[c0], cluster_pool, borrow, rng);
      it.text = draw_tokens(config.text_len, 2, config.anchor_prob, anchors[cat], drawable[cat],
                            anchors[c0], cluster_pool, borrow, rng);
      it.pixel_side = config.pixel_side;
      user.history_ids.push_back(it.item_id);
      corpus.items.emplace(it.item_id, std::move(it));
    }
    for (int i = static_cast<int>(user.history_ids.size()) - 1; i > 0; --i) {
      std::swap(user.history_ids[i], user.history_ids[rng.uniform_int(i + 1)]);
    }

    // Reference from the catalog, in-cluster by default.
    int ref_cat = c0;
    if (!config.in_cluster_reference) {
      do {
        ref_cat = rng.uniform_int(C);
      } while (ref_cat == c0 || ref_cat == c1);
    }
    char ref_id[32];
    const int ref_idx = rng.uniform_int(config.items_per_category);
    std::snprintf(ref_id, sizeof(ref_id), "it_c%d_%03d", ref_cat, ref_idx);
    user.reference_id = ref_id;

    // Held-out positives: the cluster catalog items the user would actually
    // pick, i.e. the ones closest to the planted preference. Never the
    // reference.
    std::vector<std::pair<double, std::string>> candidates;
    for (int i = 0; i < config.items_per_category; ++i) {
      for (const int cc : two ? std::vector<int>{c0, c1} : std::vector<int>{c0}) {
        char cid[32];
        std::snprintf(cid, sizeof(cid), "it_c%d_%03d", cc, i);
        if (user.reference_id == cid) continue;
        const double affinity =
            cosine_similarity(corpus.items.at(cid).visual_feature, *user.planted_preference);
        candidates.emplace_back(affinity, cid);
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int k = 0; k < config.held_out_per_user; ++k) {
      user.held_out_ids.push_back(candidates[k].second);
    }
    std::sort(user.held_out_ids.begin(), user.held_out_ids.end());

    corpus.users.push_back(std::move(user));
  }

  std::sort(corpus.pool_item_ids.begin(), corpus.pool_item_ids.end());
  corpus.rebuild_renderer();
  return corpus;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::ostringstream out;
  json meta;
  meta["type"] = "meta";
  meta["schema_version"] = kSchemaVersion;
  meta["config"] = config_to_json(corpus.config);
  json protos = json::object();
  for (const auto& [name, vec] : corpus.category_prototypes) protos[name] = vec_to_json(vec);
  meta["category_prototypes"] = protos;
  out << meta.dump() << "\n";

  for (const auto& [id, it] : corpus.items) {
    json j;
    j["type"] = "item";
    j["item_id"] = it.item_id;
    j["caption"] = it.caption;
    j["text"] = it.text;
    j["visual_feature"] = vec_to_json(it.visual_feature);
    j["category"] = it.category;
    j["in_catalog"] = std::binary_search(corpus.pool_item_ids.begin(),
                                         corpus.pool_item_ids.end(), id);
    if (it.pixel_grid) {
      j["pixel_grid"] = vec_to_json(*it.pixel_grid);
      j["pixel_side"] = it.pixel_side;
    }
    out << j.dump() << "\n";
  }
  for (const auto& user : corpus.users) {
    json j;
    j["type"] = "user";
    j["user_id"] = user.user_id;
    j["history_ids"] = user.history_ids;
    j["reference_id"] = user.reference_id;
    j["held_out_ids"] = user.held_out_ids;
    if (user.planted_preference) j["planted_preference"] = vec_to_json(*user.planted_preference);
    out << j.dump() << "\n";
  }
  return out.str();
}

Corpus corpus_from_jsonl(const std::string& text) {
  Corpus corpus;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_meta = false;
  auto fail = [&](const std::string& msg) -> std::runtime_error {
    return std::runtime_error("corpus line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(std::string("invalid JSON record (") + e.what() + ")");
    }
    const std::string type = j.value("type", "");
    try {
      if (type == "meta") {
        if (j.at("schema_version").get<int>() != kSchemaVersion) {
          throw std::runtime_error("unsupported schema_version");
        }
        corpus.config = config_from_json(j.at("config"));
        for (const auto& [name, arr] : j.at("category_prototypes").items()) {
          corpus.category_prototypes[name] = vec_from_json(arr, "category_prototypes");
        }
        have_meta = true;
      } else if (type == "item") {
        Item it;
        it.item_id = j.at("item_id").get<std::string>();
        it.caption = j.at("caption").get<std::vector<std::string>>();
        it.text = j.at("text").get<std::vector<std::string>>();
        it.visual_feature = vec_from_json(j.at("visual_feature"), "visual_feature");
        it.category = j.at("category").get<std::string>();
        if (j.contains("pixel_grid")) {
          it.pixel_grid = vec_from_json(j.at("pixel_grid"), "pixel_grid");
          it.pixel_side = j.at("pixel_side").get<int>();
        } else {
          it.pixel_side = have_meta ? corpus.config.pixel_side : 0;
        }
        validate_item(it, "item '" + it.item_id + "'");
        if (j.value("in_catalog", true)) corpus.pool_item_ids.push_back(it.item_id);
        corpus.items.emplace(it.item_id, std::move(it));
      } else if (type == "user") {
        UserSequence user;
        user.user_id = j.at("user_id").get<std::string>();
        user.history_ids = j.at("history_ids").get<std::vector<std::string>>();
        user.reference_id = j.at("reference_id").get<std::string>();
        user.held_out_ids = j.at("held_out_ids").get<std::vector<std::string>>();
        if (j.contains("planted_preference")) {
          user.planted_preference = vec_from_json(j.at("planted_preference"), "planted_preference");
        }
        if (user.history_ids.empty()) throw std::runtime_error("history must be non-empty");
        corpus.users.push_back(std::move(user));
      } else {
        throw std::runtime_error("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw fail(std::string("missing or malformed field (") + e.what() + ")");
    } catch (const std::runtime_error& e) {
      throw fail(e.what());
    }
  }
  if (!have_meta) throw std::runtime_error("corpus file has no meta record");

  // Referential integrity.
  for (const auto& user : corpus.users) {
    for (const auto& id : user.history_ids) {
      if (!corpus.items.count(id)) throw std::runtime_error("user " + user.user_id + ": unresolved history id " + id);
      if (id == user.reference_id) throw std::runtime_error("user " + user.user_id + ": reference appears in history");
    }
    if (!corpus.items.count(user.reference_id)) {
      throw std::runtime_error("user " + user.user_id + ": unresolved reference id");
    }
    for (const auto& id : user.held_out_ids) {
      if (!corpus.items.count(id)) throw std::runtime_error("user " + user.user_id + ": unresolved held-out id " + id);
    }
  }
  std::sort(corpus.pool_item_ids.begin(), corpus.pool_item_ids.end());
  corpus.rebuild_renderer();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << corpus_to_jsonl(corpus);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return corpus_from_jsonl(buf.str());
}

}  // namespace ragar
