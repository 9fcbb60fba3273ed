#include "ragar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ragar/parallel.hpp"

namespace ragar {

using nlohmann::json;

double delta_r(int rk_ori, int rk_gen) {
  if (rk_ori < 1 || rk_gen < 1) throw std::domain_error("delta_r: ranks are 1-based");
  return static_cast<double>(rk_ori - rk_gen) / (1.0 + static_cast<double>(rk_ori));
}

double ssim(const Vec& x, const Vec& y, int side, int window, double k1, double k2) {
  if (side < 1 || static_cast<int>(x.size()) != side * side ||
      static_cast<int>(y.size()) != side * side) {
    throw std::invalid_argument("ssim: images must be square with matching dims");
  }
  if (window < 1 || window > side) {
    throw std::invalid_argument("ssim: window must be in [1, side]");
  }
  const double c1 = (k1 * 1.0) * (k1 * 1.0);
  const double c2 = (k2 * 1.0) * (k2 * 1.0);

  // Summed-area tables over x, y, x^2, y^2, xy; one pass per window after.
  const int s1 = side + 1;
  std::vector<double> sx(s1 * s1, 0.0), sy(s1 * s1, 0.0), sxx(s1 * s1, 0.0),
      syy(s1 * s1, 0.0), sxy(s1 * s1, 0.0);
  auto at = [s1](std::vector<double>& t, int r, int c) -> double& { return t[r * s1 + c]; };
  for (int r = 1; r <= side; ++r) {
    for (int c = 1; c <= side; ++c) {
      const double xv = x[(r - 1) * side + (c - 1)];
      const double yv = y[(r - 1) * side + (c - 1)];
      at(sx, r, c) = xv + at(sx, r - 1, c) + at(sx, r, c - 1) - at(sx, r - 1, c - 1);
      at(sy, r, c) = yv + at(sy, r - 1, c) + at(sy, r, c - 1) - at(sy, r - 1, c - 1);
      at(sxx, r, c) = xv * xv + at(sxx, r - 1, c) + at(sxx, r, c - 1) - at(sxx, r - 1, c - 1);
      at(syy, r, c) = yv * yv + at(syy, r - 1, c) + at(syy, r, c - 1) - at(syy, r - 1, c - 1);
      at(sxy, r, c) = xv * yv + at(sxy, r - 1, c) + at(sxy, r, c - 1) - at(sxy, r - 1, c - 1);
    }
  }
  auto window_sum = [s1, window](const std::vector<double>& t, int r, int c) {
    return t[(r + window) * s1 + (c + window)] - t[r * s1 + (c + window)] -
           t[(r + window) * s1 + c] + t[r * s1 + c];
  };

  const double n = static_cast<double>(window) * window;
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + window <= side; ++r) {
    for (int c = 0; c + window <= side; ++c) {
      const double mx = window_sum(sx, r, c) / n;
      const double my = window_sum(sy, r, c) / n;
      const double vx = window_sum(sxx, r, c) / n - mx * mx;
      const double vy = window_sum(syy, r, c) / n - my * my;
      const double cov = window_sum(sxy, r, c) / n - mx * my;
      const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
      const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

CosineMetrics cosine_metric_family(const Pipeline& pipe, const UserContext& ctx,
                                   const GeneratedImage& generated) {
  CosineMetrics m;
  const Vec projected = vec_mat(generated.feature, pipe.visual_to_semantic());
  m.cs = cosine_similarity(projected, ctx.e_sem_ref);
  m.cis = cosine_similarity(generated.feature,
                            pipe.corpus().item(ctx.user->reference_id).visual_feature);
  m.cps = cosine_similarity(projected, ctx.keyword_embedding);
  m.cpis = cosine_similarity(generated.feature, ctx.retrieval.p_ret);
  return m;
}

std::vector<std::string> sample_rank_pool(const Corpus& corpus, const UserSequence& user,
                                          int count, uint64_t pool_seed) {
  if (count < 1) throw std::invalid_argument("sample_rank_pool: count must be >= 1");
  std::set<std::string> excluded(user.held_out_ids.begin(), user.held_out_ids.end());
  excluded.insert(user.reference_id);
  // The slate is the reference item's own category: the rank change then
  // measures whether a rendition beats comparable items, not unrelated ones.
  const std::string& ref_cat = corpus.item(user.reference_id).category;
  std::vector<std::string> candidates;
  std::vector<std::string> fallback;
  for (const auto& id : corpus.pool_item_ids) {
    if (excluded.count(id)) continue;
    if (corpus.item(id).category == ref_cat) {
      candidates.push_back(id);
    } else {
      fallback.push_back(id);
    }
  }
  if (static_cast<int>(candidates.size() + fallback.size()) < count) {
    throw std::invalid_argument("sample_rank_pool: catalog too small for pool");
  }
  Rng rng = Rng(pool_seed).split(user.user_id);
  std::vector<std::string> pool;
  for (int i = 0; i < count; ++i) {
    auto& source = candidates.empty() ? fallback : candidates;
    const int j = rng.uniform_int(static_cast<int>(source.size()));
    pool.push_back(source[j]);
    source.erase(source.begin() + j);
  }
  return pool;
}

int rank_in_pool(const Pipeline& pipe, const UserContext& ctx, const Vec& target_feature,
                 const std::vector<std::string>& pool, const RankModelParams& rm) {
  const Corpus& corpus = pipe.corpus();
  const Vec u = user_embedding(corpus, *ctx.user, rm);
  const double target_score = dot(u, item_embedding(rm, target_feature, ctx.e_sem_ref));
  int rank = 1;
  for (const auto& id : pool) {
    const Item& it = corpus.item(id);
    const Vec sem = pipe.encoder().encode(it.caption, it.item_id).vec;
    const double s = dot(u, item_embedding(rm, it.visual_feature, sem));
    if (s >= target_score) ++rank;
  }
  return rank;
}

std::string MetricsReport::to_json() const {
  json j;
  j["aggregate"] = {{"delta_r", delta_r},
                    {"cps", cps},
                    {"cpis", cpis},
                    {"cs", cs},
                    {"cis", cis},
                    {"ssim_personal", ssim_personal},
                    {"ssim_semantic", ssim_semantic},
                    {"pref_alignment", pref_alignment}};
  json users = json::array();
  for (const auto& u : per_user) {
    users.push_back({{"user_id", u.user_id},
                     {"rk_ori", u.rk_ori},
                     {"rk_gen", u.rk_gen},
                     {"delta_r", u.delta_r},
                     {"cps", u.cps},
                     {"cpis", u.cpis},
                     {"cs", u.cs},
                     {"cis", u.cis},
                     {"ssim_personal", u.ssim_personal},
                     {"ssim_semantic", u.ssim_semantic},
                     {"pref_alignment", u.pref_alignment}});
  }
  j["per_user"] = users;
  return j.dump(2);
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "row,user_id,rk_ori,rk_gen,delta_r,cps,cpis,cs,cis,ssim_personal,ssim_semantic,"
         "pref_alignment\n";
  for (const auto& u : per_user) {
    out << "user," << u.user_id << ',' << u.rk_ori << ',' << u.rk_gen << ',' << u.delta_r << ','
        << u.cps << ',' << u.cpis << ',' << u.cs << ',' << u.cis << ',' << u.ssim_personal << ','
        << u.ssim_semantic << ',' << u.pref_alignment << "\n";
  }
  out << "summary,all,," << ',' << delta_r << ',' << cps << ',' << cpis << ',' << cs << ',' << cis
      << ',' << ssim_personal << ',' << ssim_semantic << ',' << pref_alignment << "\n";
  return out.str();
}

MetricsReport evaluate_run(const Pipeline& pipe,
                           const std::map<std::string, CalibratorParams>& per_user_params,
                           const RankModelParams& rm, const MetricsConfig& cfg) {
  const Corpus& corpus = pipe.corpus();
  MetricsReport report;
  report.per_user.resize(corpus.users.size());

  parallel_for(static_cast<int>(corpus.users.size()), cfg.jobs, [&](int ui) {
    const UserSequence& user = corpus.users[ui];
    auto it = per_user_params.find(user.user_id);
    if (it == per_user_params.end()) {
      throw std::invalid_argument("evaluate_run: no trained parameters for " + user.user_id);
    }
    const UserContext ctx = pipe.user_context(user, Rng(cfg.pool_seed).split(user.user_id));
    const ForwardPass fw = pipe.forward(ctx, it->second);
    const GeneratedImage gen = pipe.generator().generate(fw.p_gen(), 0);

    UserMetrics m;
    m.user_id = user.user_id;
    const auto pool = sample_rank_pool(corpus, user, cfg.distractors, cfg.pool_seed);
    m.rk_ori = rank_in_pool(pipe, ctx, ctx.ref_image.feature, pool, rm);
    m.rk_gen = rank_in_pool(pipe, ctx, gen.feature, pool, rm);
    m.delta_r = delta_r(m.rk_ori, m.rk_gen);

    const CosineMetrics cm = cosine_metric_family(pipe, ctx, gen);
    m.cps = cm.cps;
    m.cpis = cm.cpis;
    m.cs = cm.cs;
    m.cis = cm.cis;

    const Vec ref_pixels = corpus.item_pixels(corpus.item(user.reference_id));
    m.ssim_semantic = ssim(gen.pixels, ref_pixels, corpus.config.pixel_side, cfg.ssim_window,
                           cfg.ssim_k1, cfg.ssim_k2);
    const Vec pref_pixels = corpus.render_pixels(normalized(ctx.retrieval.p_ret));
    m.ssim_personal = ssim(gen.pixels, pref_pixels, corpus.config.pixel_side, cfg.ssim_window,
                           cfg.ssim_k1, cfg.ssim_k2);
    if (user.planted_preference) {
      m.pref_alignment = cosine_similarity(gen.feature, *user.planted_preference);
    }
    report.per_user[ui] = std::move(m);
  });

  const double n = static_cast<double>(report.per_user.size());
  for (const auto& u : report.per_user) {
    report.delta_r += u.delta_r / n;
    report.cps += u.cps / n;
    report.cpis += u.cpis / n;
    report.cs += u.cs / n;
    report.cis += u.cis / n;
    report.ssim_personal += u.ssim_personal / n;
    report.ssim_semantic += u.ssim_semantic / n;
    report.pref_alignment += u.pref_alignment / n;
  }
  return report;
}

}  // namespace ragar
