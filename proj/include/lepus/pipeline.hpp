#pragma once

// Pipeline stages behind the command-line tool. Every stage reads its inputs
// from and writes its outputs to one run directory.

#include <filesystem>
#include <nlohmann/json.hpp>

#include "lepus/config.hpp"

namespace lepus::pipeline {

struct StageOptions {
  std::filesystem::path out;
  bool no_pretrain = false;
  bool force = false;  // accept upstream artifacts with a different config digest
};

// File names inside a run directory.
inline constexpr const char* kExpertsFile = "experts.bin";
inline constexpr const char* kExpertsSummaryFile = "experts_summary.json";
inline constexpr const char* kRndFile = "rnd.json";
inline constexpr const char* kRndLossFile = "rnd_loss.csv";
inline constexpr const char* kRndSummaryFile = "rnd_summary.json";
inline constexpr const char* kPolicyFile = "pretrain_policy.json";
inline constexpr const char* kDiscriminatorFile = "discriminator.json";
inline constexpr const char* kPretrainCurvesFile = "pretrain_curves.csv";
inline constexpr const char* kPretrainSummaryFile = "pretrain_summary.json";
inline constexpr const char* kEnsembleFile = "ensemble.json";
inline constexpr const char* kTrainMetricsFile = "train_metrics.csv";
inline constexpr const char* kTrainSummaryFile = "train_summary.json";
inline constexpr const char* kEvalStem = "eval_report";
inline constexpr const char* kEvalRoundsFile = "eval_rounds.csv";

// Each returns the stage summary (also written to the run directory).
nlohmann::json GenExperts(const config::RunConfig& config, const StageOptions& options);
nlohmann::json TrainRnd(const config::RunConfig& config, const StageOptions& options);
nlohmann::json Pretrain(const config::RunConfig& config, const StageOptions& options);
nlohmann::json Train(const config::RunConfig& config, const StageOptions& options);
nlohmann::json Evaluate(const config::RunConfig& config, const StageOptions& options);

nlohmann::json ReadJsonFile(const std::filesystem::path& path);
void WriteJsonFile(const std::filesystem::path& path, const nlohmann::json& j, int indent = 2);

}  // namespace lepus::pipeline
