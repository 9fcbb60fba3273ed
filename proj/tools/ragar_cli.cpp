#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ragar/harness.hpp"
#include "ragar/serde.hpp"

using ragar::RunConfig;

namespace {

RunConfig load_base_config(int argc, char** argv) {
  // The config file is applied first so that explicit flags always win.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) throw std::runtime_error(std::string("cannot open config file: ") + argv[i + 1]);
      std::ostringstream buf;
      buf << in.rdbuf();
      return RunConfig::from_json(buf.str());
    }
  }
  return ragar::default_run_config();
}

void add_common_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--config", "run config JSON file (applied before flags)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", cfg.seed, "master seed");
  cmd->add_option("--out", cfg.out_dir, "run output directory (RAGAR_OUT_ROOT prefixes relative paths)");
  cmd->add_option("--jobs", cfg.jobs, "parallel worker slots")->check(CLI::PositiveNumber);

  cmd->add_option("--corpus.users", cfg.corpus.users);
  cmd->add_option("--corpus.history-len", cfg.corpus.history_len);
  cmd->add_option("--corpus.categories", cfg.corpus.categories);
  cmd->add_option("--corpus.items-per-category", cfg.corpus.items_per_category);
  cmd->add_option("--corpus.relevant-fraction", cfg.corpus.relevant_fraction);
  cmd->add_option("--corpus.in-cluster-reference", cfg.corpus.in_cluster_reference);

  cmd->add_option("--retrieval.k", cfg.pipeline.retrieval.k);
  cmd->add_option("--retrieval.score-temperature", cfg.pipeline.retrieval.score_temperature);

  cmd->add_option_function<std::string>(
      "--keywords.mode",
      [&cfg](const std::string& mode) {
        if (mode == "deterministic") {
          cfg.pipeline.keywords.mode = ragar::KeywordExtractorConfig::Mode::kDeterministic;
        } else if (mode == "external") {
          cfg.pipeline.keywords.mode = ragar::KeywordExtractorConfig::Mode::kExternal;
        } else {
          throw CLI::ValidationError("--keywords.mode must be deterministic or external");
        }
      },
      "keyword extractor mode (deterministic|external)");
  cmd->add_option("--keywords.endpoint", cfg.pipeline.keywords.endpoint_url);
  cmd->add_option("--keywords.min-count", cfg.pipeline.keywords.min_count);
  cmd->add_option("--keywords.top-n", cfg.pipeline.keywords.top_n);
  cmd->add_option_function<std::string>(
      "--keywords.stopword-file",
      [&cfg](const std::string& path) {
        cfg.pipeline.keywords.stopwords = ragar::load_stopword_file(path);
        cfg.pipeline.encoder.stopwords = cfg.pipeline.keywords.stopwords;
      },
      "stopword list file, one token per line");

  cmd->add_option("--rank.epochs", cfg.rank_train.epochs);
  cmd->add_option("--rank.lr", cfg.rank_train.lr);
  cmd->add_option("--rank.fusion-weight", cfg.rank_train.fusion_weight);

  cmd->add_option("--reflection.steps", cfg.reflection.steps);
  cmd->add_option("--reflection.lr", cfg.reflection.lr);
  cmd->add_option("--reflection.alpha", cfg.reflection.alpha);
  cmd->add_option("--reflection.beta", cfg.reflection.beta);
  cmd->add_option("--reflection.gamma", cfg.reflection.gamma);
  cmd->add_option("--reflection.delta", cfg.reflection.delta);
  cmd->add_option("--reflection.sigma", cfg.reflection.sigma);
  cmd->add_option("--reflection.noise-count", cfg.reflection.noise_count);
  cmd->add_option_function<std::string>(
      "--reflection.reward-mode",
      [&cfg](const std::string& mode) {
        if (mode == "penalty_descent") {
          cfg.reflection.reward_mode = ragar::RewardMode::kPenaltyDescent;
        } else if (mode == "paper_literal") {
          cfg.reflection.reward_mode = ragar::RewardMode::kPaperLiteral;
        } else {
          throw CLI::ValidationError("--reflection.reward-mode must be penalty_descent or paper_literal");
        }
      },
      "perturbation loss sign convention");

  cmd->add_option("--metrics.distractors", cfg.metrics.distractors);

  cmd->add_option("--experiment.seeds", cfg.experiment_seeds);
  cmd->add_option("--experiment.users", cfg.experiment_users);
  cmd->add_option("--experiment.steps", cfg.experiment_steps);
  cmd->add_option("--ablate.values", cfg.ablate_values)->delimiter(',');
}

void emit_error(const std::string& command, const std::exception& e) {
  nlohmann::json err;
  err["error"] = e.what();
  err["command"] = command;
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    cfg = load_base_config(argc, argv);
  } catch (const std::exception& e) {
    emit_error("config", e);
    return 1;
  }

  CLI::App app{"retrieval-augmented personalized generation pipeline"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  auto* train = app.add_subcommand("train-rm", "train the ranking model");
  auto* reflect = app.add_subcommand("reflect", "run reflection training per user");
  auto* eval = app.add_subcommand("eval", "evaluate the trained pipeline");
  auto* validate = app.add_subcommand("validate-retrieval",
                                      "sequence-construction study (ret / exp-ret / random)");
  auto* ablate = app.add_subcommand("ablate", "sweep retrieval_k or noise_r");
  auto* aux = app.add_subcommand("auxiliary", "recommendation retraining with generated features");
  auto* report = app.add_subcommand("report", "collate run directories into summary CSVs");

  for (CLI::App* cmd : {gen, train, reflect, eval, validate, ablate, aux}) {
    add_common_options(cmd, cfg);
  }

  std::string ablate_axis = "retrieval_k";
  ablate->add_option("--axis", ablate_axis, "retrieval_k or noise_r");

  std::vector<std::string> report_dirs;
  std::string report_out = "out/report";
  report->add_option("dirs", report_dirs, "run directories to collate");
  report->add_option("--out", report_out, "report output directory");

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    std::string status;
    if (gen->parsed()) {
      status = ragar::cmd_gen_data(cfg);
    } else if (train->parsed()) {
      status = ragar::cmd_train_rm(cfg);
    } else if (reflect->parsed()) {
      status = ragar::cmd_reflect(cfg);
    } else if (eval->parsed()) {
      status = ragar::cmd_eval(cfg);
    } else if (validate->parsed()) {
      const auto rep = ragar::cmd_validate_retrieval(cfg);
      for (const auto& v : rep.verdicts) std::cout << v << "\n";
      status = "validate-retrieval: report under " + ragar::resolve_out_dir(cfg.out_dir) +
               "/experiments/validate_retrieval";
    } else if (ablate->parsed()) {
      const auto rep = ragar::cmd_ablate(cfg, ablate_axis);
      for (const auto& v : rep.verdicts) std::cout << v << "\n";
      status = "ablate: report under " + ragar::resolve_out_dir(cfg.out_dir) + "/experiments/" +
               rep.experiment;
    } else if (aux->parsed()) {
      const auto rep = ragar::cmd_auxiliary(cfg);
      for (const auto& v : rep.verdicts) std::cout << v << "\n";
      status = "auxiliary: report under " + ragar::resolve_out_dir(cfg.out_dir) +
               "/experiments/auxiliary_generation";
    } else if (report->parsed()) {
      status = ragar::cmd_report(report_dirs, report_out);
    }
    std::cout << status << std::endl;
  } catch (const std::exception& e) {
    emit_error(command, e);
    return 1;
  }
  return 0;
}
