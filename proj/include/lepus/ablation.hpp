#pragma once

// Ablation runner: trains and evaluates configuration variants under shared
// seeds and budgets, then compares their stability.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lepus/config.hpp"
#include "lepus/eval.hpp"

namespace lepus::ablation {

struct Variant {
  std::string name;
  bool pretrain = true;
  double expert_fraction = 0.5;
  int dis_iter = 0;
  pretrain::DiscriminatorArch arch = pretrain::DiscriminatorArch::kTanh300x600;

  nlohmann::json ToJson() const;
};

// Named variants ("lepus", "lepus-p", "lepus-dis-b", "lepus-frac-<f>",
// "lepus-steps-<n>") plus the configured grids, deduplicated by name.
std::vector<Variant> ExpandVariants(const config::RunConfig& config);
Variant ParseVariant(const std::string& name, const config::RunConfig& config);

struct VariantResult {
  Variant variant;
  std::vector<std::uint64_t> seeds;  // seeds that completed
  std::vector<eval::EvalReport> reports;
  std::vector<std::string> report_paths;
  double mean_stability = 0.0;
  bool complete = true;
};

struct AblationReport {
  std::vector<VariantResult> variants;
  bool incomplete = false;
  long ticks_used = 0;

  nlohmann::json ToJson() const;
};

// Runs under <out>/ablation; writes ablation_index.json there. Stages whose
// summary already records the same config digest are reused.
AblationReport RunAblation(const config::RunConfig& config, const std::filesystem::path& out);

}  // namespace lepus::ablation
