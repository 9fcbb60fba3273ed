#pragma once

#include <string>
#include <vector>

#include "ragar/metrics.hpp"
#include "ragar/pipeline.hpp"
#include "ragar/preference.hpp"
#include "ragar/ranker.hpp"

namespace ragar {

/// Sign convention of the perturbation loss. kPenaltyDescent is standard
/// score-function descent on the expected penalty (reward = -penalty);
/// kPaperLiteral keeps the widely-quoted negated form, under which gradient
/// descent raises the likelihood of high-penalty samples. Only
/// kPenaltyDescent carries convergence expectations.
enum class RewardMode { kPenaltyDescent, kPaperLiteral };

std::string to_string(RewardMode m);

struct ReflectionConfig {
  double alpha = 0.2;
  double beta = 0.5;
  double gamma = 0.3;
  double delta = 0.1;  // reward margin
  double sigma = 0.1;  // perturbation stddev
  int noise_count = 3;
  int steps = 200;
  double lr = 1e-5;  // runs typically scale this up; kept tiny by default
  double lr_decay = 1.0;   // per-step multiplicative decay (1 = constant rate)
  double grad_clip = 5.0;  // global-norm clip across all matrices, 0 = off
  RewardMode reward_mode = RewardMode::kPenaltyDescent;
  bool baseline_subtraction = false;  // variance reduction, off by default
  uint64_t seed = 0;
  int delta_r_distractors = 9;

  void validate() const;
};

struct ReflectionStepLog {
  int step = 0;
  double mean_penalty = 0.0;
  double l_rank = 0.0, l_cal = 0.0, l_sem = 0.0, l_total = 0.0;
  double rho_ref = 0.0, rho_glob = 0.0, rho_gen = 0.0;
  int rank_ref = 0, rank_glob = 0, rank_gen = 0;
  double delta_r = 0.0;

  std::string to_jsonl() const;
};

/// Hinge gap of the generated score below the reference and global scores,
/// plus the margin. Never smaller than delta.
double rank_penalty(double rho_ref, double rho_glob, double rho_gen, double delta);

struct RankLossResult {
  double loss = 0.0;
  Vec grad_p_gen;
};

/// Score-function (REINFORCE) estimator over Gaussian perturbations of the
/// general preference. Penalties are constants to the gradient: nothing
/// differentiates through the generator or the ranking model.
RankLossResult rank_loss(const Vec& p_gen, const std::vector<Vec>& perturbations,
                         const Vec& penalties, double sigma, RewardMode mode,
                         bool baseline_subtraction = false);

double calibrator_loss(const Vec& p_gen, const Vec& p_ret);

/// || proj * e_d - e_sem_ref ||^2 with the fixed detailed-to-semantic
/// projection; also returns d loss / d e_d.
double semantic_loss(const Vec& e_d, const Vec& e_sem_ref, const Mat& proj,
                     Vec* grad_e_d = nullptr);

double joint_loss(double l_rank, double l_cal, double l_sem, const ReflectionConfig& cfg);

struct ReflectOutcome {
  CalibratorParams params;
  std::vector<ReflectionStepLog> logs;
};

/// One reflection run for one user: forward chain, three-candidate scoring,
/// r perturbed generations, joint loss, hand-derived backward into the
/// calibrator, one SGD update per step. Deterministic given cfg.seed.
ReflectOutcome reflect(const Pipeline& pipe, const UserSequence& user,
                       CalibratorParams params, const RankModelParams& rm,
                       const ReflectionConfig& cfg);

}  // namespace ragar
