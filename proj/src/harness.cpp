#include "ragar/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ragar/checkpoint.hpp"
#include "ragar/parallel.hpp"
#include "ragar/serde.hpp"

namespace ragar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t idx = 0) {
  return Rng(master).split(tag).split(idx).next_u64();
}

uint64_t bytes_checksum(std::string_view bytes) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex(uint64_t v) {
  std::ostringstream out;
  out << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::string corpus_path(const std::string& dir) { return dir + "/corpus.jsonl"; }
std::string rm_path(const std::string& dir) { return dir + "/rank_model.ckpt.json"; }
std::string calib_path(const std::string& dir) { return dir + "/calibrators.ckpt.json"; }

Corpus load_corpus_or_hint(const std::string& dir) {
  const std::string path = corpus_path(dir);
  if (!fs::exists(path)) {
    throw std::runtime_error("missing corpus at " + path + "; run gen-data first");
  }
  return load_corpus(path);
}

RankModelParams load_rm_or_hint(const std::string& dir) {
  const std::string path = rm_path(dir);
  if (!fs::exists(path)) {
    throw std::runtime_error("missing rank-model checkpoint at " + path + "; run train-rm first");
  }
  return rank_model_from_checkpoint(load_checkpoint(path));
}

std::map<std::string, CalibratorParams> load_calibrators_or_hint(const std::string& dir) {
  const std::string path = calib_path(dir);
  if (!fs::exists(path)) {
    throw std::runtime_error("missing calibrator checkpoint at " + path + "; run reflect first");
  }
  return calibrator_set_from_checkpoint(load_checkpoint(path), nullptr);
}

void write_text_file(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Mean over the map values of per-seed metric maps.
std::map<std::string, double> mean_of(const std::vector<std::map<std::string, double>>& rows) {
  std::map<std::string, double> mean;
  if (rows.empty()) return mean;
  for (const auto& row : rows) {
    for (const auto& [k, v] : row) mean[k] += v / static_cast<double>(rows.size());
  }
  return mean;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.reflection.lr = 0.05;  // the struct default 1e-5 is far below the desk scale
  cfg.reflection.steps = 200;
  return cfg;
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["jobs"] = jobs;
  j["corpus"] = corpus;
  j["pipeline"] = pipeline;
  j["rank_train"] = rank_train;
  j["reflection"] = reflection;
  j["metrics"] = metrics;
  j["experiment_seeds"] = experiment_seeds;
  j["experiment_users"] = experiment_users;
  j["experiment_steps"] = experiment_steps;
  j["auxiliary_reference_weight"] = auxiliary_reference_weight;
  j["auxiliary_rank_epochs"] = auxiliary_rank_epochs;
  j["auxiliary_rank_lr"] = auxiliary_rank_lr;
  j["ablate_values"] = ablate_values;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("run config: invalid JSON (") + e.what() + ")");
  }
  RunConfig cfg = default_run_config();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
  if (j.contains("corpus")) cfg.corpus = j.at("corpus").get<CorpusConfig>();
  if (j.contains("pipeline")) cfg.pipeline = j.at("pipeline").get<PipelineConfig>();
  if (j.contains("rank_train")) cfg.rank_train = j.at("rank_train").get<RankTrainConfig>();
  if (j.contains("reflection")) cfg.reflection = j.at("reflection").get<ReflectionConfig>();
  if (j.contains("metrics")) cfg.metrics = j.at("metrics").get<MetricsConfig>();
  if (j.contains("experiment_seeds")) cfg.experiment_seeds = j.at("experiment_seeds").get<int>();
  if (j.contains("experiment_users")) cfg.experiment_users = j.at("experiment_users").get<int>();
  if (j.contains("experiment_steps")) cfg.experiment_steps = j.at("experiment_steps").get<int>();
  if (j.contains("auxiliary_reference_weight")) {
    cfg.auxiliary_reference_weight = j.at("auxiliary_reference_weight").get<double>();
  }
  if (j.contains("auxiliary_rank_epochs")) {
    cfg.auxiliary_rank_epochs = j.at("auxiliary_rank_epochs").get<int>();
  }
  if (j.contains("auxiliary_rank_lr")) cfg.auxiliary_rank_lr = j.at("auxiliary_rank_lr").get<double>();
  if (j.contains("ablate_values")) cfg.ablate_values = j.at("ablate_values").get<std::vector<int>>();
  return cfg;
}

std::string resolve_out_dir(const std::string& out_dir) {
  fs::path p(out_dir);
  if (p.is_absolute()) return out_dir;
  if (const char* root = std::getenv("RAGAR_OUT_ROOT")) {
    return (fs::path(root) / p).string();
  }
  return out_dir;
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::map<std::string, std::string>& artifact_files) {
  const std::string dir = resolve_out_dir(cfg.out_dir);
  fs::create_directories(dir);
  json j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["config"] = json::parse(cfg.to_json());
  json sums = json::object();
  for (const auto& [name, path] : artifact_files) {
    sums[name] = fs::exists(path) ? hex(file_checksum(path)) : "absent";
  }
  j["input_checksums"] = sums;
  write_text_file(dir + "/manifest." + command + ".json", j.dump(2) + "\n");
}

// ---- pipeline commands -------------------------------------------------------

std::string cmd_gen_data(const RunConfig& cfg) {
  const std::string dir = resolve_out_dir(cfg.out_dir);
  fs::create_directories(dir);
  Corpus corpus = generate_corpus(cfg.corpus, cfg.seed);
  const std::string text = corpus_to_jsonl(corpus);
  const uint64_t fresh = bytes_checksum(text);

  write_manifest(cfg, "gen-data", {{"corpus", corpus_path(dir)}});
  const std::string path = corpus_path(dir);
  if (fs::exists(path) && file_checksum(path) == fresh) {
    return "gen-data: no-op, corpus unchanged (checksum " + hex(fresh) + ")";
  }
  write_text_file(path, text);
  return "gen-data: wrote " + path + " (" + std::to_string(corpus.items.size()) + " items, " +
         std::to_string(corpus.users.size()) + " users, checksum " + hex(fresh) + ")";
}

std::string cmd_train_rm(const RunConfig& cfg) {
  const std::string dir = resolve_out_dir(cfg.out_dir);
  const Corpus corpus = load_corpus_or_hint(dir);
  write_manifest(cfg, "train-rm", {{"corpus", corpus_path(dir)}});

  RankTrainConfig train_cfg = cfg.rank_train;
  train_cfg.seed = derive_seed(cfg.seed, "train-rm");
  const SemanticEncoder encoder(cfg.pipeline.encoder);
  const RankTrainResult result = train_rank_model(corpus, train_cfg, encoder);

  save_checkpoint(rank_model_checkpoint(result.params), rm_path(dir));
  std::ostringstream log;
  log.precision(17);
  log << "epoch,pairwise_auc,mean_loss\n";
  for (const auto& e : result.epochs) {
    log << e.epoch << ',' << e.pairwise_auc << ',' << e.mean_loss << "\n";
  }
  write_text_file(dir + "/rm_train_log.csv", log.str());
  const double auc = result.epochs.empty() ? 0.0 : result.epochs.back().pairwise_auc;
  std::ostringstream status;
  status << "train-rm: wrote " << rm_path(dir) << " (final pairwise AUC " << auc << ")";
  return status.str();
}

std::string cmd_reflect(const RunConfig& cfg) {
  const std::string dir = resolve_out_dir(cfg.out_dir);
  const Corpus corpus = load_corpus_or_hint(dir);
  const RankModelParams rm = load_rm_or_hint(dir);
  write_manifest(cfg, "reflect", {{"corpus", corpus_path(dir)}, {"rank_model", rm_path(dir)}});

  const Pipeline pipe(corpus, cfg.pipeline);
  const CalibratorParams init = pipe.init_params(derive_seed(cfg.seed, "calibrator-init"));

  std::vector<ReflectOutcome> outcomes(corpus.users.size());
  parallel_for(static_cast<int>(corpus.users.size()), cfg.jobs, [&](int ui) {
    ReflectionConfig rcfg = cfg.reflection;
    rcfg.seed = derive_seed(cfg.seed, "reflect", Rng::fnv1a(corpus.users[ui].user_id));
    outcomes[ui] = reflect(pipe, corpus.users[ui], init, rm, rcfg);
  });

  std::map<std::string, CalibratorParams> per_user;
  fs::create_directories(dir + "/logs");
  for (size_t ui = 0; ui < corpus.users.size(); ++ui) {
    const auto& user_id = corpus.users[ui].user_id;
    per_user.emplace(user_id, outcomes[ui].params);
    std::ostringstream lines;
    for (const auto& log : outcomes[ui].logs) lines << log.to_jsonl() << "\n";
    write_text_file(dir + "/logs/reflect_" + user_id + ".jsonl", lines.str());
  }
  save_checkpoint(calibrator_set_checkpoint(per_user, cfg.pipeline.dims), calib_path(dir));
  return "reflect: trained " + std::to_string(per_user.size()) + " users, wrote " +
         calib_path(dir);
}

std::string cmd_eval(const RunConfig& cfg) {
  const std::string dir = resolve_out_dir(cfg.out_dir);
  const Corpus corpus = load_corpus_or_hint(dir);
  const RankModelParams rm = load_rm_or_hint(dir);
  const auto per_user = load_calibrators_or_hint(dir);
  write_manifest(cfg, "eval", {{"corpus", corpus_path(dir)},
                               {"rank_model", rm_path(dir)},
                               {"calibrators", calib_path(dir)}});

  const Pipeline pipe(corpus, cfg.pipeline);
  MetricsConfig mcfg = cfg.metrics;
  mcfg.jobs = cfg.jobs;
  const MetricsReport report = evaluate_run(pipe, per_user, rm, mcfg);
  write_text_file(dir + "/metrics.json", report.to_json() + "\n");
  write_text_file(dir + "/metrics.csv", report.to_csv());
  std::ostringstream status;
  status.precision(6);
  status << "eval: delta_r=" << report.delta_r << " cpis=" << report.cpis
         << " cis=" << report.cis << " -> " << dir << "/metrics.{json,csv}";
  return status.str();
}

// ---- experiment helpers --------------------------------------------------------

PerStrategyAlignment strategy_alignment(const Pipeline& pipe, const UserSequence& user,
                                        SelectionStrategy strategy, int k,
                                        const RankModelParams& rm, Rng rng) {
  if (!user.planted_preference) {
    throw std::invalid_argument("strategy_alignment: user has no planted preference");
  }
  const Corpus& corpus = pipe.corpus();
  const Vec scores = score_history(corpus, user, pipe.encoder());
  RetrievalConfig rcfg = pipe.config().retrieval;
  rcfg.k = k;
  rcfg.strategy = strategy;
  const auto selected = select(scores, k, strategy, rng);
  const RetrievalResult fused = fuse(corpus, user, selected, scores, rcfg);

  PerStrategyAlignment out;
  out.fused_alignment = cosine_similarity(fused.p_ret, *user.planted_preference);

  Vec sel_mean(corpus.config.dim_visual, 0.0);
  for (const auto& [idx, score] : fused.selected) {
    axpy(sel_mean, 1.0 / static_cast<double>(fused.selected.size()),
         corpus.item(user.history_ids[idx]).visual_feature);
  }
  const Item& ref = corpus.item(user.reference_id);
  const Vec ref_sem = pipe.encoder().encode(ref.caption, ref.item_id).vec;
  out.rm_reference_score = dot(mat_vec(rm.user_proj, sel_mean),
                               item_embedding(rm, ref.visual_feature, ref_sem));
  return out;
}

double ExperimentReport::win_rate(const std::string& arm_a, const std::string& arm_b,
                                  const std::string& metric) const {
  const ArmResult& a = arm(arm_a);
  const ArmResult& b = arm(arm_b);
  if (a.per_seed.size() != b.per_seed.size() || a.per_seed.empty()) {
    throw std::invalid_argument("win_rate: seed counts differ or empty");
  }
  int wins = 0;
  for (size_t s = 0; s < a.per_seed.size(); ++s) {
    if (a.per_seed[s].at(metric) > b.per_seed[s].at(metric)) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(a.per_seed.size());
}

const ArmResult& ExperimentReport::arm(const std::string& name) const {
  for (const auto& a : arms) {
    if (a.arm == name) return a;
  }
  throw std::invalid_argument("experiment report: no arm named " + name);
}

std::string ExperimentReport::to_json() const {
  json j;
  j["experiment"] = experiment;
  json arms_j = json::array();
  for (const auto& a : arms) {
    json seeds = json::array();
    for (const auto& row : a.per_seed) seeds.push_back(row);
    arms_j.push_back({{"arm", a.arm}, {"mean", a.mean_metrics}, {"per_seed", seeds}});
  }
  j["arms"] = arms_j;
  j["verdicts"] = verdicts;
  return j.dump(2);
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "experiment,arm,seed,metric,value\n";
  for (const auto& a : arms) {
    for (size_t s = 0; s < a.per_seed.size(); ++s) {
      for (const auto& [metric, value] : a.per_seed[s]) {
        out << experiment << ',' << a.arm << ',' << s << ',' << metric << ',' << value << "\n";
      }
    }
    for (const auto& [metric, value] : a.mean_metrics) {
      out << experiment << ',' << a.arm << ",mean," << metric << ',' << value << "\n";
    }
  }
  return out.str();
}

namespace {

void write_experiment(const RunConfig& cfg, const ExperimentReport& report) {
  const std::string dir =
      resolve_out_dir(cfg.out_dir) + "/experiments/" + report.experiment;
  write_text_file(dir + "/report.json", report.to_json() + "\n");
  write_text_file(dir + "/report.csv", report.to_csv());
}

// Per-seed world of an experiment: fresh corpus and rank model, arms share both.
struct SeedWorld {
  Corpus corpus;
  RankModelParams rm;
};

SeedWorld make_seed_world(const RunConfig& cfg, std::string_view tag, int seed_idx) {
  SeedWorld world;
  CorpusConfig ccfg = cfg.corpus;
  ccfg.users = cfg.experiment_users;
  world.corpus = generate_corpus(ccfg, derive_seed(cfg.seed, tag, 1000 + seed_idx));
  RankTrainConfig tcfg = cfg.rank_train;
  tcfg.seed = derive_seed(cfg.seed, tag, 2000 + seed_idx);
  const SemanticEncoder encoder(cfg.pipeline.encoder);
  world.rm = train_rank_model(world.corpus, tcfg, encoder).params;
  return world;
}

}  // namespace

ExperimentReport cmd_validate_retrieval(const RunConfig& cfg) {
  const int k = cfg.pipeline.retrieval.k;
  if (2 * k > cfg.corpus.history_len) {
    throw std::invalid_argument("validate-retrieval: needs 2k <= history length (k=" +
                                std::to_string(k) + ")");
  }
  write_manifest(cfg, "validate-retrieval", {});

  const std::vector<SelectionStrategy> strategies = {
      SelectionStrategy::kRet, SelectionStrategy::kExpRet, SelectionStrategy::kRandom};
  const int seeds = cfg.experiment_seeds;
  std::vector<std::map<std::string, std::map<std::string, double>>> per_seed(seeds);

  parallel_for(seeds, cfg.jobs, [&](int s) {
    const SeedWorld world = make_seed_world(cfg, "validate", s);
    const Pipeline pipe(world.corpus, cfg.pipeline);
    for (const auto strategy : strategies) {
      double alignment = 0.0;
      double rm_score = 0.0;
      for (size_t ui = 0; ui < world.corpus.users.size(); ++ui) {
        Rng rng = Rng(derive_seed(cfg.seed, "validate-select", s)).split(ui);
        const auto res = strategy_alignment(pipe, world.corpus.users[ui], strategy, k,
                                            world.rm, rng.split(to_string(strategy)));
        alignment += res.fused_alignment / static_cast<double>(world.corpus.users.size());
        rm_score += res.rm_reference_score / static_cast<double>(world.corpus.users.size());
      }
      per_seed[s][to_string(strategy)] = {{"fused_alignment", alignment},
                                          {"rm_reference_score", rm_score}};
    }
  });

  ExperimentReport report;
  report.experiment = "validate_retrieval";
  for (const auto strategy : strategies) {
    ArmResult arm;
    arm.arm = to_string(strategy);
    for (int s = 0; s < seeds; ++s) arm.per_seed.push_back(per_seed[s].at(arm.arm));
    arm.mean_metrics = mean_of(arm.per_seed);
    report.arms.push_back(std::move(arm));
  }
  for (const auto& metric : {std::string("fused_alignment"), std::string("rm_reference_score")}) {
    for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{
             {"ret", "exp_ret"}, {"exp_ret", "random"}, {"ret", "random"}}) {
      std::ostringstream v;
      v << a << '>' << b << " metric=" << metric << " win_rate=" << report.win_rate(a, b, metric);
      report.verdicts.push_back(v.str());
    }
  }
  write_experiment(cfg, report);
  return report;
}

namespace {

// Shared by ablate and auxiliary: reflect every user of a seed world and
// return the per-user outcomes.
std::vector<ReflectOutcome> reflect_all_users(const RunConfig& cfg, const Pipeline& pipe,
                                              const SeedWorld& world, std::string_view tag,
                                              int seed_idx, const ReflectionConfig& rcfg_base) {
  const CalibratorParams init =
      pipe.init_params(derive_seed(cfg.seed, "calibrator-init", seed_idx));
  std::vector<ReflectOutcome> outcomes(world.corpus.users.size());
  for (size_t ui = 0; ui < world.corpus.users.size(); ++ui) {
    ReflectionConfig rcfg = rcfg_base;
    rcfg.seed = derive_seed(cfg.seed, tag,
                            10000ULL * (seed_idx + 1) + Rng::fnv1a(world.corpus.users[ui].user_id));
    outcomes[ui] = reflect(pipe, world.corpus.users[ui], init, world.rm, rcfg);
  }
  return outcomes;
}

std::map<std::string, double> summarize_reflection(const Pipeline& pipe, const SeedWorld& world,
                                                   const std::vector<ReflectOutcome>& outcomes) {
  std::map<std::string, double> m;
  const double n = static_cast<double>(world.corpus.users.size());
  for (size_t ui = 0; ui < world.corpus.users.size(); ++ui) {
    const UserSequence& user = world.corpus.users[ui];
    const UserContext ctx = pipe.user_context(user, Rng(kRankPoolSeed).split(user.user_id));
    const ForwardPass fw = pipe.forward(ctx, outcomes[ui].params);
    const GeneratedImage gen = pipe.generator().generate(fw.p_gen(), 0);
    if (user.planted_preference) {
      m["pref_alignment"] += cosine_similarity(gen.feature, *user.planted_preference) / n;
    }
    const auto& logs = outcomes[ui].logs;
    if (!logs.empty()) {
      m["delta_r"] += logs.back().delta_r / n;
      const int tail = std::min<int>(10, static_cast<int>(logs.size()));
      double penalty = 0.0;
      for (int i = 0; i < tail; ++i) {
        penalty += logs[logs.size() - 1 - i].mean_penalty / static_cast<double>(tail);
      }
      m["final_penalty"] += penalty / n;
    }
  }
  return m;
}

}  // namespace

ExperimentReport cmd_ablate(const RunConfig& cfg, const std::string& axis) {
  if (axis != "retrieval_k" && axis != "noise_r") {
    throw std::invalid_argument("ablate: axis must be retrieval_k or noise_r");
  }
  std::vector<int> values = cfg.ablate_values;
  if (values.empty()) {
    values = axis == "retrieval_k" ? std::vector<int>{0, 5, 10, 20} : std::vector<int>{1, 3, 5};
  }
  write_manifest(cfg, "ablate-" + axis, {});

  const int seeds = cfg.experiment_seeds;
  // per_seed[s][value-arm] -> metrics
  std::vector<std::map<std::string, std::map<std::string, double>>> per_seed(seeds);

  parallel_for(seeds, cfg.jobs, [&](int s) {
    const SeedWorld world = make_seed_world(cfg, "ablate-" + axis, s);
    for (int value : values) {
      RunConfig arm_cfg = cfg;
      ReflectionConfig rcfg = cfg.reflection;
      rcfg.steps = cfg.experiment_steps;
      if (axis == "retrieval_k") {
        arm_cfg.pipeline.retrieval.k = value;
      } else {
        rcfg.noise_count = value;
      }
      const Pipeline pipe(world.corpus, arm_cfg.pipeline);
      const auto outcomes = reflect_all_users(arm_cfg, pipe, world, "ablate", s, rcfg);
      const std::string arm_name =
          (axis == "retrieval_k" ? "k=" : "r=") + std::to_string(value);
      per_seed[s][arm_name] = summarize_reflection(pipe, world, outcomes);
    }
  });

  ExperimentReport report;
  report.experiment = "ablate_" + axis;
  for (int value : values) {
    ArmResult arm;
    arm.arm = (axis == "retrieval_k" ? "k=" : "r=") + std::to_string(value);
    for (int s = 0; s < seeds; ++s) arm.per_seed.push_back(per_seed[s].at(arm.arm));
    arm.mean_metrics = mean_of(arm.per_seed);
    report.arms.push_back(std::move(arm));
  }
  if (axis == "retrieval_k") {
    for (int value : values) {
      if (value == 5) continue;
      std::ostringstream v;
      v << "k=5>k=" << value << " metric=pref_alignment win_rate="
        << report.win_rate("k=5", "k=" + std::to_string(value), "pref_alignment");
      report.verdicts.push_back(v.str());
    }
  } else {
    for (int value : values) {
      if (value == values.front()) continue;
      std::ostringstream v;
      v << "r=" << value << "<=r=" << values.front() << " metric=final_penalty mean_delta="
        << report.arm("r=" + std::to_string(values.front())).mean_metrics.at("final_penalty") -
               report.arm("r=" + std::to_string(value)).mean_metrics.at("final_penalty");
      report.verdicts.push_back(v.str());
    }
  }
  write_experiment(cfg, report);
  return report;
}

ExperimentReport cmd_auxiliary(const RunConfig& cfg) {
  write_manifest(cfg, "auxiliary", {});
  const int seeds = cfg.experiment_seeds;
  const std::vector<std::string> arm_names = {"ori", "gen", "glob"};
  std::vector<std::map<std::string, std::map<std::string, double>>> per_seed(seeds);

  parallel_for(seeds, cfg.jobs, [&](int s) {
    const SeedWorld world = make_seed_world(cfg, "auxiliary", s);
    const Pipeline pipe(world.corpus, cfg.pipeline);
    ReflectionConfig rcfg = cfg.reflection;
    rcfg.steps = cfg.experiment_steps;
    const auto outcomes = reflect_all_users(cfg, pipe, world, "auxiliary", s, rcfg);

    // Candidate features per user for the substitution arms.
    std::map<std::string, Vec> gen_features;
    std::map<std::string, Vec> glob_features;
    for (size_t ui = 0; ui < world.corpus.users.size(); ++ui) {
      const UserSequence& user = world.corpus.users[ui];
      const UserContext ctx = pipe.user_context(user, Rng(kRankPoolSeed).split(user.user_id));
      const ForwardPass fw = pipe.forward(ctx, outcomes[ui].params);
      gen_features[user.user_id] = pipe.generator().generate(fw.p_gen(), 0).feature;
      glob_features[user.user_id] = ctx.glob_image.feature;
    }

    const SemanticEncoder encoder(cfg.pipeline.encoder);
    auto eval_arm = [&](const RankModelParams& rm, const std::map<std::string, Vec>* features) {
      double recall = 0.0, ndcg = 0.0;
      const double n = static_cast<double>(world.corpus.users.size());
      for (const auto& user : world.corpus.users) {
        const Vec* ref_feat =
            features && features->count(user.user_id) ? &features->at(user.user_id) : nullptr;
        const auto ranked =
            rank_catalog(world.corpus, user, rm, encoder, {user.reference_id}, ref_feat);
        recall += recall_at_k(ranked, user.held_out_ids, 10) / n;
        ndcg += ndcg_at_k(ranked, user.held_out_ids, 10) / n;
      }
      return std::map<std::string, double>{{"recall_at_10", recall}, {"ndcg_at_10", ndcg}};
    };

    // All arms share the training procedure and seed; only the reference
    // feature blended into the user tower differs.
    RankTrainConfig tcfg = cfg.rank_train;
    tcfg.seed = derive_seed(cfg.seed, "auxiliary", 2000 + s);  // same data order as the base train
    tcfg.reference_weight = cfg.auxiliary_reference_weight;
    tcfg.epochs = cfg.auxiliary_rank_epochs;
    tcfg.lr = cfg.auxiliary_rank_lr;
    per_seed[s]["ori"] = eval_arm(train_rank_model(world.corpus, tcfg, encoder).params, nullptr);
    per_seed[s]["gen"] = eval_arm(
        train_rank_model(world.corpus, tcfg, encoder, &gen_features).params, &gen_features);
    per_seed[s]["glob"] = eval_arm(
        train_rank_model(world.corpus, tcfg, encoder, &glob_features).params, &glob_features);
  });

  ExperimentReport report;
  report.experiment = "auxiliary_generation";
  for (const auto& name : arm_names) {
    ArmResult arm;
    arm.arm = name;
    for (int s = 0; s < seeds; ++s) arm.per_seed.push_back(per_seed[s].at(name));
    arm.mean_metrics = mean_of(arm.per_seed);
    report.arms.push_back(std::move(arm));
  }
  for (const auto& metric : {std::string("recall_at_10"), std::string("ndcg_at_10")}) {
    int at_least = 0;
    const auto& gen_arm = report.arm("gen");
    const auto& ori_arm = report.arm("ori");
    for (int s = 0; s < seeds; ++s) {
      if (gen_arm.per_seed[s].at(metric) >= ori_arm.per_seed[s].at(metric)) ++at_least;
    }
    std::ostringstream v;
    v << "gen>=ori metric=" << metric << " rate="
      << static_cast<double>(at_least) / static_cast<double>(seeds);
    report.verdicts.push_back(v.str());
  }
  write_experiment(cfg, report);
  return report;
}

std::string cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path) {
  std::ostringstream summary;
  summary.precision(17);
  summary << "run_dir,experiment,arm,seed,metric,value\n";
  std::map<std::string, std::ostringstream> plots;

  for (const auto& raw_dir : run_dirs) {
    const std::string dir = resolve_out_dir(raw_dir);
    bool has_manifest = false;
    if (fs::exists(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("manifest.", 0) == 0) has_manifest = true;
      }
    }
    if (!has_manifest) {
      throw std::runtime_error("report: no manifest in " + dir);
    }

    if (fs::exists(dir + "/metrics.json")) {
      std::ifstream in(dir + "/metrics.json");
      std::ostringstream buf;
      buf << in.rdbuf();
      const json m = json::parse(buf.str());
      for (const auto& [metric, value] : m.at("aggregate").items()) {
        summary << dir << ",pipeline_eval,all,mean," << metric << ','
                << value.get<double>() << "\n";
      }
    }
    const std::string exp_root = dir + "/experiments";
    if (fs::exists(exp_root)) {
      std::vector<std::string> exp_dirs;
      for (const auto& entry : fs::directory_iterator(exp_root)) exp_dirs.push_back(entry.path().string());
      std::sort(exp_dirs.begin(), exp_dirs.end());
      for (const auto& exp_dir : exp_dirs) {
        const std::string csv_path = exp_dir + "/report.csv";
        if (!fs::exists(csv_path)) continue;
        std::ifstream in(csv_path);
        std::string line;
        std::getline(in, line);  // header
        const std::string exp_name = fs::path(exp_dir).filename().string();
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          summary << dir << ',' << line << "\n";
          auto& plot = plots[exp_name];
          if (plot.tellp() == 0) plot << "experiment,arm,seed,metric,value\n";
          plot << line << "\n";
        }
      }
    }
  }

  write_text_file(out_path + "/report_summary.csv", summary.str());
  for (const auto& [name, data] : plots) {
    write_text_file(out_path + "/plot_" + name + ".csv", data.str());
  }
  return "report: wrote " + out_path + "/report_summary.csv (+" +
         std::to_string(plots.size()) + " plot files)";
}

}  // namespace ragar
