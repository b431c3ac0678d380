#include "lepus/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "lepus/dataset.hpp"
#include "lepus/error.hpp"
#include "lepus/eval.hpp"
#include "lepus/policy.hpp"
#include "lepus/pretrain.hpp"
#include "lepus/random.hpp"
#include "lepus/rnd_reward.hpp"
#include "lepus/trainer.hpp"

namespace lepus::pipeline {
namespace {

namespace fs = std::filesystem;
using config::RunConfig;
using config::Stage;
using nlohmann::json;

fs::path Prepare(const StageOptions& options) {
  if (options.out.empty()) throw ConfigError("no output directory");
  fs::create_directories(options.out);
  return options.out;
}

fs::path Require(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw Error("missing_artifact", what + " not found at " + path.string());
  return path;
}

void CheckDigest(const std::string& found, const std::string& expected, const std::string& what, bool force) {
  if (found == expected || force) return;
  throw Error("digest_mismatch", what + " was produced with config digest " + found + ", current config expects " +
                                     expected + " (pass --force to override)");
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io_error", "failed writing " + path.string());
}

expert::JointTrajectoryDataset LoadExperts(const RunConfig& config, const StageOptions& options) {
  auto dataset = expert::LoadDataset(Require(options.out / kExpertsFile, "expert dataset"));
  CheckDigest(dataset.config_digest(), config::StageDigest(config, Stage::kExperts), "expert dataset", options.force);
  if (dataset.n_agents() != config.scenario.sim.n_agents || dataset.obs_dim() != config.scenario.sim.obs_dim)
    throw ConfigError("expert dataset M/D do not match the scenario");
  return dataset;
}

// First (1 - holdout) of the rounds train the reward; the rest are held out.
std::pair<expert::JointTrajectoryDataset, expert::JointTrajectoryDataset> SplitRounds(
    const expert::JointTrajectoryDataset& dataset, double holdout) {
  const std::size_t n = dataset.num_rounds();
  std::size_t held = static_cast<std::size_t>(std::floor(holdout * static_cast<double>(n)));
  if (holdout > 0.0 && held == 0 && n > 1) held = 1;
  return {dataset.SliceRounds(0, n - held), dataset.SliceRounds(n - held, n)};
}

Eigen::MatrixXd ProbeStates(const expert::JointTrajectoryDataset& dataset, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.num_records() - 1);
  std::vector<std::size_t> idx(std::min<std::size_t>(1024, dataset.num_records()));
  for (auto& i : idx) i = pick(rng);
  return dataset.GatherStates(idx);
}

}  // namespace

json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_artifact", "cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + " is not valid JSON");
  return j;
}

void WriteJsonFile(const fs::path& path, const json& j, int indent) { WriteText(path, j.dump(indent) + "\n"); }

json GenExperts(const RunConfig& config, const StageOptions& options) {
  config.Validate();
  const fs::path out = Prepare(options);
  expert::GenerateConfig gen = config.expert.generate;
  gen.seed = DeriveSeed(config.seed, "expert");
  const sim::Track track = config.scenario.track.Build();
  auto result = expert::GenerateDataset(track, config.scenario.sim, gen);
  result.dataset.set_config_digest(config::StageDigest(config, Stage::kExperts));
  expert::SaveDataset(result.dataset, out / kExpertsFile);
  json summary = result.summary.ToJson();
  summary["config_digest"] = result.dataset.config_digest();
  summary["records"] = result.dataset.num_records();
  summary["payload_digest"] = DigestHex(result.dataset.PayloadDigest());
  WriteJsonFile(out / kExpertsSummaryFile, summary);
  return summary;
}

json TrainRnd(const RunConfig& config, const StageOptions& options) {
  config.Validate();
  const fs::path out = Prepare(options);
  const auto dataset = LoadExperts(config, options);
  if (dataset.empty()) throw ValueError("expert dataset is empty; cannot train the reward");
  const auto [train, held] = SplitRounds(dataset, config.rnd.holdout_fraction);
  const auto& s = config.scenario.sim;

  rnd::RndModel model = rnd::BuildRnd(s.n_agents, s.obs_dim, config.rnd.v, DeriveSeed(config.seed, "rnd_init"));
  rnd::FitNormalization(model, train);
  const auto losses = rnd::TrainDistillation(model, train, config.rnd.distill, DeriveSeed(config.seed, "rnd_train"));
  if (config.rnd.auto_calibrate && !train.empty())
    rnd::CalibrateSharpness(model, train, config.rnd.calibration_target);

  json ckpt = model.ToJson();
  ckpt["config_digest"] = config::StageDigest(config, Stage::kRnd);
  WriteJsonFile(out / kRndFile, ckpt, -1);

  std::ostringstream csv;
  csv << std::setprecision(17) << "iteration,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) csv << i << ',' << losses[i] << '\n';
  WriteText(out / kRndLossFile, csv.str());

  json summary = {{"config_digest", ckpt["config_digest"]},
                  {"iters", losses.size()},
                  {"v", model.sharpness()},
                  {"calibrated", config.rnd.auto_calibrate},
                  {"train_rounds", train.num_rounds()},
                  {"heldout_rounds", held.num_rounds()}};
  if (!losses.empty()) {
    summary["initial_loss"] = losses.front();
    summary["final_loss"] = losses.back();
  }
  if (!held.empty()) {
    const double expert_mean = rnd::MeanReward(model, held);
    const double random_mean = rnd::MeanRandomActionReward(model, held, DeriveSeed(config.seed, "rnd_probe"));
    summary["heldout_expert_reward"] = expert_mean;
    summary["heldout_random_action_reward"] = random_mean;
    summary["separation"] = expert_mean - random_mean;
  }
  WriteJsonFile(out / kRndSummaryFile, summary);
  return summary;
}

json Pretrain(const RunConfig& config, const StageOptions& options) {
  config.Validate();
  const fs::path out = Prepare(options);
  const auto dataset = LoadExperts(config, options);
  const auto& s = config.scenario.sim;
  const Eigen::VectorXd scale = sim::FeatureScale(s);

  Rng policy_rng = MakeRng(config.seed, "policy_init");
  nn::Mlp initial = policy::BuildPolicy(s.obs_dim, policy_rng);
  pretrain::Discriminator dis = pretrain::BuildDiscriminator(
      s.n_agents, s.obs_dim, config.pretrain.arch, config.pretrain.dis_learning_rate, scale,
      DeriveSeed(config.seed, "dis_init"));
  auto result = pretrain::AdversarialPretrain(initial, dis, dataset, config.pretrain,
                                              DeriveSeed(config.seed, "pretrain"));

  const std::string digest = config::StageDigest(config, Stage::kPretrain);
  json policy_ckpt = {{"format", "lepus.pretrained_policy"},
                      {"version", 1},
                      {"config_digest", digest},
                      {"policy", nn::ToJson(result.policy)},
                      {"adam", result.policy_adam.ToJson()}};
  WriteJsonFile(out / kPolicyFile, policy_ckpt, -1);
  json dis_ckpt = result.dis.ToJson();
  dis_ckpt["config_digest"] = digest;
  WriteJsonFile(out / kDiscriminatorFile, dis_ckpt, -1);

  std::ostringstream csv;
  csv << std::setprecision(17) << "iteration,dis_objective,policy_loss,policy_score\n";
  for (std::size_t i = 0; i < result.curves.dis_objective.size(); ++i)
    csv << i << ',' << result.curves.dis_objective[i] << ',' << result.curves.policy_loss[i] << ','
        << result.curves.policy_score[i] << '\n';
  WriteText(out / kPretrainCurvesFile, csv.str());

  json summary = {{"config_digest", digest},
                  {"dis_iter", config.pretrain.dis_iter},
                  {"discriminator", pretrain::ArchName(config.pretrain.arch)},
                  {"expert_fraction", config.pretrain.expert_fraction}};
  if (!dataset.empty()) {
    const Eigen::MatrixXd probe = ProbeStates(dataset, DeriveSeed(config.seed, "pretrain_probe"));
    Rng fresh_rng = MakeRng(config.seed, "fresh_policy");
    const nn::Mlp fresh = policy::BuildPolicy(s.obs_dim, fresh_rng);
    summary["score_initial_policy"] = pretrain::MeanPolicyScore(result.dis, initial, probe);
    summary["score_pretrained_policy"] = pretrain::MeanPolicyScore(result.dis, result.policy, probe);
    summary["score_fresh_policy"] = pretrain::MeanPolicyScore(result.dis, fresh, probe);
  }
  if (!result.curves.policy_score.empty()) {
    summary["curve_first_score"] = result.curves.policy_score.front();
    summary["curve_last_score"] = result.curves.policy_score.back();
  }
  WriteJsonFile(out / kPretrainSummaryFile, summary);
  return summary;
}

json Train(const RunConfig& config, const StageOptions& options) {
  config.Validate();
  const fs::path out = Prepare(options);
  const auto& s = config.scenario.sim;
  const json rnd_json = ReadJsonFile(Require(out / kRndFile, "reward checkpoint"));
  CheckDigest(rnd_json.value("config_digest", ""), config::StageDigest(config, Stage::kRnd), "reward checkpoint",
              options.force);
  const rnd::RndModel model = rnd::RndModel::FromJson(rnd_json);

  std::optional<nn::Mlp> warm;
  if (!options.no_pretrain) {
    const json p = ReadJsonFile(Require(out / kPolicyFile, "pre-trained policy (use --no-pretrain to skip)"));
    CheckDigest(p.value("config_digest", ""), config::StageDigest(config, Stage::kPretrain), "pre-trained policy",
                options.force);
    warm = nn::MlpFromJson(p.at("policy"));
  }

  trainer::AgentEnsemble ens =
      trainer::BuildEnsemble(s.n_agents, s.obs_dim, sim::FeatureScale(s), config.ensemble, config.seed, warm);
  const sim::Track track = config.scenario.track.Build();
  auto result = trainer::Train(std::move(ens), model, track, s, config.trainer, DeriveSeed(config.seed, "train"));
  result.ensemble.config_digest = config::StageDigest(config, Stage::kTrain, options.no_pretrain);

  json ckpt = result.ensemble.ToJson();
  ckpt["no_pretrain"] = options.no_pretrain;
  WriteJsonFile(out / kEnsembleFile, ckpt, -1);
  trainer::WriteMetricsCsv(result.metrics, s.n_agents, out / kTrainMetricsFile);

  json summary = {{"config_digest", result.ensemble.config_digest},
                  {"no_pretrain", options.no_pretrain},
                  {"episodes", result.metrics.size()},
                  {"ticks", result.ticks},
                  {"budget_exhausted", result.budget_exhausted},
                  {"policy_digest", DigestHex(result.ensemble.policy.Digest())}};
  WriteJsonFile(out / kTrainSummaryFile, summary);
  return summary;
}

json Evaluate(const RunConfig& config, const StageOptions& options) {
  config.Validate();
  const fs::path out = Prepare(options);
  const json ckpt = ReadJsonFile(Require(out / kEnsembleFile, "ensemble checkpoint"));
  const bool no_pretrain = ckpt.value("no_pretrain", false);
  const trainer::AgentEnsemble ens = trainer::AgentEnsemble::FromJson(ckpt);
  CheckDigest(ens.config_digest, config::StageDigest(config, Stage::kTrain, no_pretrain), "ensemble checkpoint",
              options.force);
  const auto& s = config.scenario.sim;
  if (ens.n_agents != s.n_agents || ens.obs_dim != s.obs_dim)
    throw ConfigError("ensemble M/D do not match the scenario");

  eval::PolicyController controller(ens);
  const sim::Track track = config.scenario.track.Build();
  const auto rounds = eval::RunRounds(controller, track, s, config.eval_rounds, DeriveSeed(config.seed, "eval"));
  const eval::EvalReport report = eval::Aggregate(rounds, s.n_agents);
  eval::EmitReport(report, out / kEvalStem);
  eval::WriteRoundsCsv(rounds, out / kEvalRoundsFile);
  json summary = report.ToJson();
  summary["config_digest"] = config::StageDigest(config, Stage::kEval, no_pretrain);
  return summary;
}

}  // namespace lepus::pipeline
