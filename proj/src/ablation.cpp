#include "lepus/ablation.hpp"

#include <iomanip>
#include <sstream>

#include "lepus/error.hpp"
#include "lepus/pipeline.hpp"

namespace lepus::ablation {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string FormatNumber(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

void LinkOrCopy(const fs::path& from, const fs::path& to) {
  fs::remove(to);
  std::error_code ec;
  fs::create_hard_link(from, to, ec);
  if (ec) fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

// True when `summary` exists and records `digest`, so the stage can be reused.
bool Current(const fs::path& summary, const std::string& digest) {
  if (!fs::exists(summary)) return false;
  try {
    return pipeline::ReadJsonFile(summary).value("config_digest", "") == digest;
  } catch (const Error&) {
    return false;
  }
}

config::RunConfig VariantConfig(const config::RunConfig& base, const Variant& v, std::uint64_t seed) {
  config::RunConfig c = base;
  c.seed = seed;
  c.pretrain.expert_fraction = v.expert_fraction;
  c.pretrain.dis_iter = v.dis_iter;
  c.pretrain.arch = v.arch;
  return c;
}

}  // namespace

json Variant::ToJson() const {
  return {{"name", name},
          {"pretrain", pretrain},
          {"expert_fraction", expert_fraction},
          {"dis_iter", dis_iter},
          {"discriminator", pretrain::ArchName(arch)}};
}

Variant ParseVariant(const std::string& name, const config::RunConfig& config) {
  Variant v{name, true, config.pretrain.expert_fraction, config.pretrain.dis_iter, config.pretrain.arch};
  auto number_after = [&](const std::string& prefix) { return name.substr(prefix.size()); };
  try {
    if (name == "lepus") return v;
    if (name == "lepus-p") {
      v.pretrain = false;
      return v;
    }
    if (name == "lepus-dis-b") {
      v.arch = pretrain::DiscriminatorArch::kLeaky128x64x32;
      return v;
    }
    if (name.rfind("lepus-frac-", 0) == 0) {
      v.expert_fraction = std::stod(number_after("lepus-frac-"));
      if (!(v.expert_fraction > 0.0 && v.expert_fraction <= 1.0)) throw ConfigError("fraction out of range");
      return v;
    }
    if (name.rfind("lepus-steps-", 0) == 0) {
      v.dis_iter = std::stoi(number_after("lepus-steps-"));
      if (v.dis_iter < 0) throw ConfigError("negative step count");
      return v;
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError("unknown ablation variant '" + name + "'");
}

std::vector<Variant> ExpandVariants(const config::RunConfig& config) {
  std::vector<std::string> names = config.ablation.variants;
  for (double f : config.ablation.expert_fractions) names.push_back("lepus-frac-" + FormatNumber(f));
  for (int n : config.ablation.pretrain_steps) names.push_back("lepus-steps-" + std::to_string(n));
  if (config.ablation.discriminator_b) names.push_back("lepus-dis-b");
  std::vector<Variant> out;
  for (const auto& n : names) {
    bool seen = false;
    for (const auto& v : out) seen = seen || v.name == n;
    if (!seen) out.push_back(ParseVariant(n, config));
  }
  if (out.size() < 2) throw ConfigError("ablation needs at least two variants");
  return out;
}

json AblationReport::ToJson() const {
  json variants_json = json::array();
  for (const auto& vr : variants) {
    json runs = json::array();
    for (std::size_t k = 0; k < vr.reports.size(); ++k)
      runs.push_back({{"seed", vr.seeds[k]}, {"report", vr.report_paths[k]}, {"stability", vr.reports[k].stability}});
    variants_json.push_back({{"variant", vr.variant.ToJson()},
                             {"runs", runs},
                             {"mean_stability", vr.mean_stability},
                             {"complete", vr.complete}});
  }
  json deltas = json::array();
  if (!variants.empty())
    for (std::size_t i = 1; i < variants.size(); ++i)
      deltas.push_back({{"baseline", variants[0].variant.name},
                        {"variant", variants[i].variant.name},
                        {"delta_stability", variants[0].mean_stability - variants[i].mean_stability}});
  return {{"format", "lepus.ablation"},
          {"version", 1},
          {"variants", variants_json},
          {"deltas", deltas},
          {"incomplete", incomplete},
          {"ticks_used", ticks_used}};
}

AblationReport RunAblation(const config::RunConfig& config, const fs::path& out) {
  config.Validate();
  const std::vector<Variant> variants = ExpandVariants(config);
  const fs::path root = out / "ablation";
  fs::create_directories(root);

  AblationReport report;
  for (const auto& v : variants) report.variants.push_back({v, {}, {}, {}, 0.0, true});

  for (std::uint64_t seed : config.ablation.seeds) {
    // Expert data and the reward model depend only on the seed, so all
    // variants share them.
    const fs::path common = root / ("seed-" + std::to_string(seed)) / "common";
    config::RunConfig base = config;
    base.seed = seed;
    if (!Current(common / pipeline::kExpertsSummaryFile, config::StageDigest(base, config::Stage::kExperts)))
      pipeline::GenExperts(base, {common});
    if (!Current(common / pipeline::kRndSummaryFile, config::StageDigest(base, config::Stage::kRnd)))
      pipeline::TrainRnd(base, {common});

    for (auto& vr : report.variants) {
      const long used = report.ticks_used;
      const long total = config.ablation.total_tick_budget;
      if (total > 0 && used >= total) {
        vr.complete = false;
        report.incomplete = true;
        continue;
      }
      config::RunConfig c = VariantConfig(config, vr.variant, seed);
      bool capped_by_total = false;
      if (total > 0) {
        const long remaining = total - used;
        capped_by_total = config.trainer.tick_budget == 0 || remaining < config.trainer.tick_budget;
        c.trainer.tick_budget = c.trainer.tick_budget > 0 ? std::min(c.trainer.tick_budget, remaining) : remaining;
      }
      const fs::path dir = root / vr.variant.name / ("seed-" + std::to_string(seed));
      fs::create_directories(dir);
      LinkOrCopy(common / pipeline::kRndFile, dir / pipeline::kRndFile);
      pipeline::StageOptions opts{dir, !vr.variant.pretrain, false};
      if (vr.variant.pretrain &&
          !Current(dir / pipeline::kPretrainSummaryFile, config::StageDigest(c, config::Stage::kPretrain))) {
        LinkOrCopy(common / pipeline::kExpertsFile, dir / pipeline::kExpertsFile);
        pipeline::Pretrain(c, opts);
        fs::remove(dir / pipeline::kExpertsFile);
      }
      const std::string train_digest = config::StageDigest(c, config::Stage::kTrain, opts.no_pretrain);
      const json train_summary = Current(dir / pipeline::kTrainSummaryFile, train_digest)
                                     ? pipeline::ReadJsonFile(dir / pipeline::kTrainSummaryFile)
                                     : pipeline::Train(c, opts);
      const long ticks = train_summary.at("ticks").get<long>();
      report.ticks_used += ticks;
      if (capped_by_total && train_summary.at("budget_exhausted").get<bool>()) {
        // Cut short by the ablation-wide budget rather than the per-run one.
        vr.complete = false;
        report.incomplete = true;
      }
      const fs::path report_file = dir / (std::string(pipeline::kEvalStem) + ".json");
      if (!Current(report_file, config::StageDigest(c, config::Stage::kEval, opts.no_pretrain)))
        pipeline::Evaluate(c, opts);
      const json rj = pipeline::ReadJsonFile(dir / (std::string(pipeline::kEvalStem) + ".json"));
      vr.reports.push_back(eval::EvalReport::FromJson(rj));
      vr.seeds.push_back(seed);
      vr.report_paths.push_back(fs::relative(dir / (std::string(pipeline::kEvalStem) + ".json"), root).string());
    }
  }
  for (auto& vr : report.variants) {
    if (vr.seeds.size() != config.ablation.seeds.size()) vr.complete = false;
    double sum = 0.0;
    for (const auto& r : vr.reports) sum += r.stability;
    vr.mean_stability = vr.reports.empty() ? 0.0 : sum / static_cast<double>(vr.reports.size());
  }
  pipeline::WriteJsonFile(root / "ablation_index.json", report.ToJson());
  return report;
}

}  // namespace lepus::ablation
