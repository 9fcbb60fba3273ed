#pragma once

#include <map>
#include <string>
#include <vector>

#include "ragar/corpus.hpp"
#include "ragar/metrics.hpp"
#include "ragar/pipeline.hpp"
#include "ragar/ranker.hpp"
#include "ragar/reflection.hpp"

namespace ragar {

/// One run's complete configuration. Serialized into every manifest so a run
/// directory always carries the exact settings that produced it.
struct RunConfig {
  uint64_t seed = 7;
  std::string out_dir = "out/run";
  int jobs = 1;
  CorpusConfig corpus;
  PipelineConfig pipeline;
  RankTrainConfig rank_train;
  ReflectionConfig reflection;
  MetricsConfig metrics;

  // Multi-seed experiment knobs; experiments use smaller per-seed corpora so
  // directional comparisons stay fast.
  int experiment_seeds = 10;
  int experiment_users = 48;
  int experiment_steps = 300;
  double auxiliary_reference_weight = 0.5;  // tower share of the substituted reference
  // Arms retrain gently: long retraining erodes the near-isometric tower
  // geometry the substitution effect lives in.
  int auxiliary_rank_epochs = 4;
  double auxiliary_rank_lr = 0.02;
  std::vector<int> ablate_values;  // empty = axis default sweep

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

RunConfig default_run_config();

/// Aggregate results of one experiment arm, with the per-seed breakdown that
/// every headline number traces back to.
struct ArmResult {
  std::string arm;
  std::map<std::string, double> mean_metrics;
  std::vector<std::map<std::string, double>> per_seed;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<ArmResult> arms;
  /// "a>b metric=<name> win_rate=<w>" paired-comparison verdicts over seeds.
  std::vector<std::string> verdicts;

  double win_rate(const std::string& arm_a, const std::string& arm_b,
                  const std::string& metric) const;
  const ArmResult& arm(const std::string& name) const;
  std::string to_json() const;
  std::string to_csv() const;
};

// ---- pipeline commands -----------------------------------------------------
// Each writes a manifest (config + seed + content checksums) into the run
// directory before its results. Returns a short status line for the CLI.

std::string cmd_gen_data(const RunConfig& cfg);
std::string cmd_train_rm(const RunConfig& cfg);
std::string cmd_reflect(const RunConfig& cfg);
std::string cmd_eval(const RunConfig& cfg);

// ---- experiments -------------------------------------------------------------

/// Sequence-construction study: top-k retrieved vs ranks (k,2k] vs random,
/// per seed on a fresh corpus, paired win-rates over seeds.
ExperimentReport cmd_validate_retrieval(const RunConfig& cfg);

/// Sweeps retrieval k (0 = no retrieval) or the perturbation count r through
/// the full reflect+eval loop.
ExperimentReport cmd_ablate(const RunConfig& cfg, const std::string& axis);

/// Retrains the rank model with the reference positive's visual feature
/// substituted per arm (original / reflection-generated / global) and
/// compares Recall@10 and NDCG@10 on held-out positives.
ExperimentReport cmd_auxiliary(const RunConfig& cfg);

/// Collects manifests and result files from run directories into one summary
/// CSV plus per-experiment plot-data files.
std::string cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path);

// ---- helpers shared with tests ---------------------------------------------

std::string resolve_out_dir(const std::string& out_dir);
void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::map<std::string, std::string>& artifact_files);

struct PerStrategyAlignment {
  double fused_alignment = 0.0;  // cosine(fused preference, planted preference)
  double rm_reference_score = 0.0;
};

PerStrategyAlignment strategy_alignment(const Pipeline& pipe, const UserSequence& user,
                                        SelectionStrategy strategy, int k,
                                        const RankModelParams& rm, Rng rng);

}  // namespace ragar
