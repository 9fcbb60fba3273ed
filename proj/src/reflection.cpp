#include "ragar/reflection.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ragar {

using nlohmann::json;

std::string to_string(RewardMode m) {
  return m == RewardMode::kPenaltyDescent ? "penalty_descent" : "paper_literal";
}

void ReflectionConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("reflection: loss weights must be non-negative");
  }
  if (alpha + beta + gamma <= 0.0) {
    throw std::invalid_argument("reflection: at least one loss weight must be positive");
  }
  if (delta < 0.0) throw std::invalid_argument("reflection: margin must be non-negative");
  if (sigma <= 0.0) throw std::invalid_argument("reflection: sigma must be positive");
  if (noise_count < 1) throw std::invalid_argument("reflection: noise_count must be >= 1");
  if (steps < 0) throw std::invalid_argument("reflection: steps must be non-negative");
  if (lr < 0.0) throw std::invalid_argument("reflection: lr must be non-negative");
  if (lr_decay <= 0.0 || lr_decay > 1.0) {
    throw std::invalid_argument("reflection: lr_decay must be in (0,1]");
  }
}

std::string ReflectionStepLog::to_jsonl() const {
  json j;
  j["step"] = step;
  j["mean_penalty"] = mean_penalty;
  j["l_rank"] = l_rank;
  j["l_cal"] = l_cal;
  j["l_sem"] = l_sem;
  j["l_total"] = l_total;
  j["rho_ref"] = rho_ref;
  j["rho_glob"] = rho_glob;
  j["rho_gen"] = rho_gen;
  j["rank_ref"] = rank_ref;
  j["rank_glob"] = rank_glob;
  j["rank_gen"] = rank_gen;
  j["delta_r"] = delta_r;
  return j.dump();
}

double rank_penalty(double rho_ref, double rho_glob, double rho_gen, double delta) {
  return std::max(0.0, rho_ref - rho_gen) + std::max(0.0, rho_glob - rho_gen) + delta;
}

RankLossResult rank_loss(const Vec& p_gen, const std::vector<Vec>& perturbations,
                         const Vec& penalties, double sigma, RewardMode mode,
                         bool baseline_subtraction) {
  if (sigma <= 0.0) throw std::domain_error("rank_loss: sigma must be positive");
  if (perturbations.empty() || perturbations.size() != penalties.size()) {
    throw std::invalid_argument("rank_loss: perturbation/penalty count mismatch");
  }
  const double r = static_cast<double>(perturbations.size());
  const double sign = mode == RewardMode::kPenaltyDescent ? 1.0 : -1.0;

  double baseline = 0.0;
  if (baseline_subtraction) {
    for (double p : penalties) baseline += p;
    baseline /= r;
  }

  RankLossResult result;
  result.grad_p_gen.assign(p_gen.size(), 0.0);
  for (size_t t = 0; t < perturbations.size(); ++t) {
    if (perturbations[t].size() != p_gen.size()) {
      throw std::invalid_argument("rank_loss: perturbation dim mismatch");
    }
    const Vec sample = add(p_gen, perturbations[t]);
    const double log_density = gaussian_log_density(sample, p_gen, sigma);
    result.loss += sign * log_density * penalties[t] / r;
    // d/d mean of log N(sample; mean, sigma^2 I) at fixed sample is eps/sigma^2.
    const double coeff = sign * (penalties[t] - baseline) / (r * sigma * sigma);
    axpy(result.grad_p_gen, coeff, perturbations[t]);
  }
  return result;
}

double calibrator_loss(const Vec& p_gen, const Vec& p_ret) {
  return squared_distance(p_gen, p_ret);
}

double semantic_loss(const Vec& e_d, const Vec& e_sem_ref, const Mat& proj, Vec* grad_e_d) {
  const Vec projected = vec_mat(e_d, proj);
  const Vec residual = sub(projected, e_sem_ref);
  if (grad_e_d) {
    // d ||P'e_d - s||^2 / d e_d = 2 P residual (row-vector convention).
    *grad_e_d = scaled(mat_vec(proj, residual), 2.0);
  }
  return dot(residual, residual);
}

double joint_loss(double l_rank, double l_cal, double l_sem, const ReflectionConfig& cfg) {
  return cfg.alpha * l_rank + cfg.beta * l_cal + cfg.gamma * l_sem;
}

ReflectOutcome reflect(const Pipeline& pipe, const UserSequence& user,
                       CalibratorParams params, const RankModelParams& rm,
                       const ReflectionConfig& cfg) {
  cfg.validate();
  const Corpus& corpus = pipe.corpus();
  const uint64_t gen_checksum = pipe.generator().weights_checksum();

  const Rng root(cfg.seed);
  const UserContext ctx = pipe.user_context(user, root.split("context"));

  // Static per run: the candidate scores of reference and global images do
  // not depend on the perturbation draw, and the rank-change pool is the
  // same one the evaluator uses.
  const Vec u_emb = user_embedding(corpus, user, rm);
  auto rho_of = [&](const Vec& feature) {
    return dot(u_emb, item_embedding(rm, feature, ctx.e_sem_ref));
  };
  const double rho_ref = rho_of(ctx.ref_image.feature);
  const double rho_glob = rho_of(ctx.glob_image.feature);
  const auto pool =
      sample_rank_pool(corpus, user, cfg.delta_r_distractors, kRankPoolSeed);
  const int rk_ori = rank_in_pool(pipe, ctx, ctx.ref_image.feature, pool, rm);

  ReflectOutcome out;
  out.logs.reserve(cfg.steps);
  Rng noise_rng = root.split("perturbations");

  double step_lr = cfg.lr;
  for (int step = 0; step < cfg.steps; ++step) {
    const ForwardPass fw = pipe.forward(ctx, params);
    const Vec& p_gen = fw.p_gen();
    const GeneratedImage gen_img = pipe.generator().generate(p_gen, 0);

    const RankOutcome outcome = score_candidates(
        corpus, user, {ctx.ref_image, ctx.glob_image, gen_img}, rm, pipe.encoder());

    // Multi-action exploration: r Gaussian perturbations of the preference,
    // each generated and scored; penalties are constants to the gradient.
    std::vector<Vec> eps(cfg.noise_count);
    Vec penalties(cfg.noise_count);
    double mean_penalty = 0.0;
    for (int t = 0; t < cfg.noise_count; ++t) {
      eps[t].resize(p_gen.size());
      for (auto& e : eps[t]) e = cfg.sigma * noise_rng.normal();
      const GeneratedImage perturbed = pipe.generator().generate(add(p_gen, eps[t]), 0);
      penalties[t] = rank_penalty(rho_ref, rho_glob, rho_of(perturbed.feature), cfg.delta);
      mean_penalty += penalties[t] / static_cast<double>(cfg.noise_count);
    }

    const RankLossResult rank = rank_loss(p_gen, eps, penalties, cfg.sigma, cfg.reward_mode,
                                          cfg.baseline_subtraction);
    const double l_cal = calibrator_loss(p_gen, ctx.retrieval.p_ret);
    Vec d_e_d;
    const double l_sem = semantic_loss(fw.e_d(), ctx.e_sem_ref, pipe.detailed_to_semantic(),
                                       &d_e_d);

    ReflectionStepLog log;
    log.step = step;
    log.mean_penalty = mean_penalty;
    log.l_rank = rank.loss;
    log.l_cal = l_cal;
    log.l_sem = l_sem;
    log.l_total = joint_loss(rank.loss, l_cal, l_sem, cfg);
    log.rho_ref = outcome.scores.at(Provenance::kReference);
    log.rho_glob = outcome.scores.at(Provenance::kGlobal);
    log.rho_gen = outcome.scores.at(Provenance::kGenerated);
    log.rank_ref = outcome.ranks.at(Provenance::kReference);
    log.rank_glob = outcome.ranks.at(Provenance::kGlobal);
    log.rank_gen = outcome.ranks.at(Provenance::kGenerated);
    log.delta_r = delta_r(rk_ori, rank_in_pool(pipe, ctx, gen_img.feature, pool, rm));
    out.logs.push_back(log);

    // Single-step episode: exactly one parameter update per generation, no
    // return accumulation across steps.
    Vec d_p_gen = scaled(rank.grad_p_gen, cfg.alpha);
    axpy(d_p_gen, 2.0 * cfg.beta, sub(p_gen, ctx.retrieval.p_ret));
    for (auto& v : d_e_d) v *= cfg.gamma;
    CalibratorGradients grads =
        calibrator_backward(fw.detailed, fw.calib, params, pipe.config().dims, d_p_gen, d_e_d);
    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      visit_params(grads, [&sq](const std::string&, const Mat& m) {
        for (double v : m.data) sq += v * v;
      });
      const double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) {
        const double scale = cfg.grad_clip / norm;
        visit_params(grads, [scale](const std::string&, Mat& m) {
          for (auto& v : m.data) v *= scale;
        });
      }
    }
    if (step_lr > 0.0) apply_sgd(params, grads, step_lr);
    step_lr *= cfg.lr_decay;
  }

  if (pipe.generator().weights_checksum() != gen_checksum) {
    throw std::logic_error("reflect: generator constants changed during training");
  }
  out.params = std::move(params);
  return out;
}

}  // namespace ragar
