#pragma once

// Run configuration: one JSON document layered over a named preset, with
// strict key checking and per-stage digests.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lepus/expert.hpp"
#include "lepus/pretrain.hpp"
#include "lepus/rnd_reward.hpp"
#include "lepus/sim.hpp"
#include "lepus/trainer.hpp"

namespace lepus::config {

struct TrackSpec {
  std::string kind = "oval";  // "oval" or "file"
  double lap_length = 400.0;
  double half_width = 6.0;
  double radius = 30.0;
  std::string file;  // control-point JSON when kind == "file"

  sim::Track Build() const;
};

struct ScenarioConfig {
  TrackSpec track;
  sim::SimConfig sim;
};

struct ExpertStageConfig {
  expert::GenerateConfig generate;  // seed comes from the master seed
};

struct RndStageConfig {
  double v = 250000.0;
  bool auto_calibrate = false;
  double calibration_target = 0.9;
  double holdout_fraction = 0.1;
  rnd::DistillConfig distill;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> variants{"lepus", "lepus-p"};
  std::vector<double> expert_fractions;
  std::vector<int> pretrain_steps;
  bool discriminator_b = false;
  long total_tick_budget = 0;  // summed training ticks over all runs; 0 = unlimited
};

struct RunConfig {
  std::string preset = "desk3";
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  ScenarioConfig scenario;
  ExpertStageConfig expert;
  RndStageConfig rnd;
  pretrain::PretrainConfig pretrain;
  trainer::EnsembleConfig ensemble;
  trainer::TrainConfig trainer;
  int eval_rounds = 20;
  AblationConfig ablation;

  // Cross-field checks (M, D, schedules) before any stage runs.
  void Validate() const;
};

std::vector<std::string> PresetNames();
RunConfig Preset(const std::string& name);

nlohmann::json ToJson(const RunConfig& config);
// Strict: every key must exist in the schema.
RunConfig FromJson(const nlohmann::json& j);

// Preset (from `preset_override`, else the document's "preset", else desk3),
// then the document, then dotted key=value overrides.
RunConfig Load(const nlohmann::json& document, const std::string& preset_override = "",
               const std::vector<std::string>& overrides = {});
RunConfig LoadFile(const std::filesystem::path& path, const std::string& preset_override = "",
                   const std::vector<std::string>& overrides = {});

// Stage digests cover exactly the sections each stage (and its inputs) read.
enum class Stage { kExperts, kRnd, kPretrain, kTrain, kEval };
std::string StageDigest(const RunConfig& config, Stage stage, bool no_pretrain = false);

}  // namespace lepus::config
