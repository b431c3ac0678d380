#include "lepus/config.hpp"

#include <cmath>
#include <fstream>

#include "lepus/digest.hpp"
#include "lepus/error.hpp"

namespace lepus::config {
namespace {

using nlohmann::json;

void CheckKeys(const json& doc, const json& schema, const std::string& path) {
  if (!doc.is_object()) throw ConfigError("'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + full + "'");
    if (schema.at(key).is_object() && !schema.at(key).empty()) CheckKeys(value, schema.at(key), full);
  }
}

json GainsJson(const expert::PidGains& g) { return json::array({g.kp, g.ki, g.kd}); }
expert::PidGains GainsFrom(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("PID gains must be [kp, ki, kd]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::uint64_t Digest(const json& j) { return HashString(j.dump()); }

}  // namespace

sim::Track TrackSpec::Build() const {
  if (kind == "oval") return sim::Track::Oval(lap_length, half_width, radius);
  if (kind == "file") {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open track file '" + file + "'");
    try {
      return sim::Track::FromJson(json::parse(in));
    } catch (const json::exception& e) {
      throw ConfigError("malformed track file '" + file + "': " + e.what());
    }
  }
  throw ConfigError("unknown track kind '" + kind + "'");
}

void RunConfig::Validate() const {
  scenario.sim.Validate();
  const auto& s = scenario.sim;
  if (scenario.track.kind == "oval" && s.spacing * s.n_agents > scenario.track.lap_length)
    throw ConfigError("cars do not fit on the track at the configured spacing");
  if (expert.generate.n_rounds < 0) throw ConfigError("expert.n_rounds must be >= 0");
  if (expert.generate.max_steps_keep < 1) throw ConfigError("expert.max_steps_keep must be >= 1");
  if (!(rnd.v > 0.0)) throw ConfigError("rnd.v must be positive");
  if (!(rnd.calibration_target > 0.0 && rnd.calibration_target < 1.0))
    throw ConfigError("rnd.calibration_target must lie in (0, 1)");
  if (!(rnd.holdout_fraction >= 0.0 && rnd.holdout_fraction < 1.0))
    throw ConfigError("rnd.holdout_fraction must lie in [0, 1)");
  if (rnd.distill.iters < 0 || rnd.distill.minibatch < 1 || !(rnd.distill.learning_rate > 0.0))
    throw ConfigError("invalid rnd schedule");
  if (pretrain.dis_iter < 0 || pretrain.batch < 1 || !(pretrain.dis_learning_rate > 0.0) ||
      !(pretrain.policy_learning_rate > 0.0))
    throw ConfigError("invalid pretrain schedule");
  if (!(pretrain.expert_fraction > 0.0 && pretrain.expert_fraction <= 1.0))
    throw ConfigError("pretrain.expert_fraction must lie in (0, 1]");
  if (!(ensemble.tau > 0.0 && ensemble.tau <= 1.0)) throw ConfigError("trainer.tau must lie in (0, 1]");
  if (!(ensemble.gamma >= 0.0 && ensemble.gamma <= 1.0)) throw ConfigError("trainer.gamma must lie in [0, 1]");
  if (trainer.episodes < 0 || trainer.tick_budget < 0 || trainer.minibatch < 1 || trainer.buffer_capacity < 1)
    throw ConfigError("invalid trainer schedule");
  if (trainer.warmup < trainer.minibatch) throw ConfigError("trainer.warmup must be >= trainer.minibatch");
  if (eval_rounds < 1) throw ConfigError("eval.rounds must be >= 1");
  if (ablation.seeds.empty()) throw ConfigError("ablation.seeds must not be empty");
  for (double f : ablation.expert_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("ablation expert fractions must lie in (0, 1]");
  for (int n : ablation.pretrain_steps)
    if (n < 0) throw ConfigError("ablation pretrain steps must be >= 0");
}

std::vector<std::string> PresetNames() { return {"desk3", "desk4", "paper3", "paper4"}; }

RunConfig Preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  auto& s = c.scenario.sim;
  s.obs_dim = 65;
  if (name == "desk3" || name == "desk4") {
    s.n_agents = name == "desk3" ? 3 : 4;
    s.dt = 0.1;
    s.lateral_jitter = 0.5;
    s.heading_jitter = 0.05;
    c.scenario.track = {"oval", 400.0, 6.0, 30.0, ""};
    c.expert.generate.n_rounds = 100;
    c.expert.generate.max_steps_keep = expert::KeepThresholdSteps(400.0, s.dt);
    c.rnd.auto_calibrate = true;
    c.pretrain.dis_iter = s.n_agents == 3 ? 2000 : 3000;
    c.trainer.episodes = 1000;
    c.trainer.tick_budget = 20000;
    c.trainer.buffer_capacity = 50000;
    c.ablation.expert_fractions = {0.3, 0.5, 1.0};
    c.ablation.pretrain_steps = {c.pretrain.dis_iter / 2, c.pretrain.dis_iter, c.pretrain.dis_iter * 5 / 2};
    c.ablation.discriminator_b = true;
    return c;
  }
  if (name == "paper3" || name == "paper4") {
    s.n_agents = name == "paper3" ? 3 : 4;
    s.dt = 0.2;
    s.lateral_jitter = 0.5;
    s.heading_jitter = 0.05;
    s.rules.slow_window = 500;
    s.rules.max_ticks = 5000;
    c.scenario.track = {"oval", 2057.56, 7.5, 150.0, ""};
    c.expert.generate.n_rounds = 1000;
    c.expert.generate.max_steps_keep = 750;
    c.pretrain.dis_iter = s.n_agents == 3 ? 20000 : 30000;
    c.trainer.episodes = 2000;
    c.trainer.tick_budget = 0;
    c.ablation.expert_fractions = {0.3, 0.5, 1.0};
    c.ablation.pretrain_steps = {c.pretrain.dis_iter / 2, c.pretrain.dis_iter, c.pretrain.dis_iter * 5 / 2};
    c.ablation.discriminator_b = true;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk3, desk4, paper3 or paper4)");
}

json ToJson(const RunConfig& c) {
  const auto& s = c.scenario.sim;
  const auto& g = c.expert.generate;
  return {{"preset", c.preset},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"scenario",
           {{"track",
             {{"kind", c.scenario.track.kind},
              {"lap_length", c.scenario.track.lap_length},
              {"half_width", c.scenario.track.half_width},
              {"radius", c.scenario.track.radius},
              {"file", c.scenario.track.file}}},
            {"n_agents", s.n_agents},
            {"obs_dim", s.obs_dim},
            {"dt", s.dt},
            {"spacing", s.spacing},
            {"collision_radius", s.collision_radius},
            {"edge_rays", s.edge_rays},
            {"sensor_range", s.sensor_range},
            {"lateral_jitter", s.lateral_jitter},
            {"heading_jitter", s.heading_jitter},
            {"dynamics",
             {{"steer_gain", s.dynamics.steer_gain},
              {"accel_gain", s.dynamics.accel_gain},
              {"brake_gain", s.dynamics.brake_gain},
              {"drag", s.dynamics.drag}}},
            {"rules",
             {{"reverse_window", s.rules.reverse_window},
              {"slow_window", s.rules.slow_window},
              {"grace_ticks", s.rules.grace_ticks},
              {"max_ticks", s.rules.max_ticks},
              {"slow_threshold_kmh", s.rules.slow_threshold_kmh}}}}},
          {"expert",
           {{"n_rounds", g.n_rounds},
            {"max_steps_keep", g.max_steps_keep},
            {"min_keep_fraction", g.min_keep_fraction},
            {"target_speed_kmh", g.expert.target_speed_kmh},
            {"speed_gains", GainsJson(g.expert.speed)},
            {"angle_gains", GainsJson(g.expert.angle)}}},
          {"rnd",
           {{"v", c.rnd.v},
            {"auto_calibrate", c.rnd.auto_calibrate},
            {"calibration_target", c.rnd.calibration_target},
            {"holdout_fraction", c.rnd.holdout_fraction},
            {"iters", c.rnd.distill.iters},
            {"minibatch", c.rnd.distill.minibatch},
            {"lr", c.rnd.distill.learning_rate}}},
          {"pretrain",
           {{"dis_iter", c.pretrain.dis_iter},
            {"batch", c.pretrain.batch},
            {"dis_lr", c.pretrain.dis_learning_rate},
            {"policy_lr", c.pretrain.policy_learning_rate},
            {"expert_fraction", c.pretrain.expert_fraction},
            {"discriminator", pretrain::ArchName(c.pretrain.arch)}}},
          {"trainer",
           {{"gamma", c.ensemble.gamma},
            {"tau", c.ensemble.tau},
            {"policy_lr", c.ensemble.policy_lr},
            {"critic_lr", c.ensemble.critic_lr},
            {"minibatch", c.trainer.minibatch},
            {"buffer_capacity", c.trainer.buffer_capacity},
            {"warmup", c.trainer.warmup},
            {"episodes", c.trainer.episodes},
            {"tick_budget", c.trainer.tick_budget},
            {"reward_scale", c.trainer.reward_scale},
            {"ou", {{"theta", c.trainer.ou.theta}, {"sigma", c.trainer.ou.sigma}, {"mu", c.trainer.ou.mu}}}}},
          {"eval", {{"rounds", c.eval_rounds}}},
          {"ablation",
           {{"seeds", c.ablation.seeds},
            {"variants", c.ablation.variants},
            {"expert_fractions", c.ablation.expert_fractions},
            {"pretrain_steps", c.ablation.pretrain_steps},
            {"discriminator_b", c.ablation.discriminator_b},
            {"total_tick_budget", c.ablation.total_tick_budget}}}};
}

RunConfig FromJson(const json& j) {
  CheckKeys(j, ToJson(RunConfig{}), "");
  // Start from defaults so partial documents work; every present key is read.
  json full = ToJson(RunConfig{});
  full.merge_patch(j);
  try {
    RunConfig c;
    c.preset = full.at("preset").get<std::string>();
    c.seed = full.at("seed").get<std::uint64_t>();
    c.output_dir = full.at("output_dir").get<std::string>();
    const json& sc = full.at("scenario");
    const json& tr = sc.at("track");
    c.scenario.track = {tr.at("kind").get<std::string>(), tr.at("lap_length").get<double>(),
                        tr.at("half_width").get<double>(), tr.at("radius").get<double>(),
                        tr.at("file").get<std::string>()};
    auto& s = c.scenario.sim;
    s.n_agents = sc.at("n_agents").get<int>();
    s.obs_dim = sc.at("obs_dim").get<int>();
    s.dt = sc.at("dt").get<double>();
    s.spacing = sc.at("spacing").get<double>();
    s.collision_radius = sc.at("collision_radius").get<double>();
    s.edge_rays = sc.at("edge_rays").get<int>();
    s.sensor_range = sc.at("sensor_range").get<double>();
    s.lateral_jitter = sc.at("lateral_jitter").get<double>();
    s.heading_jitter = sc.at("heading_jitter").get<double>();
    const json& dy = sc.at("dynamics");
    s.dynamics = {dy.at("steer_gain").get<double>(), dy.at("accel_gain").get<double>(),
                  dy.at("brake_gain").get<double>(), dy.at("drag").get<double>()};
    const json& ru = sc.at("rules");
    s.rules = {ru.at("reverse_window").get<int>(), ru.at("slow_window").get<int>(), ru.at("grace_ticks").get<int>(),
               ru.at("max_ticks").get<int>(), ru.at("slow_threshold_kmh").get<double>()};
    const json& ex = full.at("expert");
    auto& g = c.expert.generate;
    g.n_rounds = ex.at("n_rounds").get<int>();
    g.max_steps_keep = ex.at("max_steps_keep").get<int>();
    g.min_keep_fraction = ex.at("min_keep_fraction").get<double>();
    g.expert.target_speed_kmh = ex.at("target_speed_kmh").get<double>();
    g.expert.speed = GainsFrom(ex.at("speed_gains"));
    g.expert.angle = GainsFrom(ex.at("angle_gains"));
    const json& rd = full.at("rnd");
    c.rnd.v = rd.at("v").get<double>();
    c.rnd.auto_calibrate = rd.at("auto_calibrate").get<bool>();
    c.rnd.calibration_target = rd.at("calibration_target").get<double>();
    c.rnd.holdout_fraction = rd.at("holdout_fraction").get<double>();
    c.rnd.distill = {rd.at("iters").get<int>(), rd.at("minibatch").get<int>(), rd.at("lr").get<double>()};
    const json& pt = full.at("pretrain");
    c.pretrain.dis_iter = pt.at("dis_iter").get<int>();
    c.pretrain.batch = pt.at("batch").get<int>();
    c.pretrain.dis_learning_rate = pt.at("dis_lr").get<double>();
    c.pretrain.policy_learning_rate = pt.at("policy_lr").get<double>();
    c.pretrain.expert_fraction = pt.at("expert_fraction").get<double>();
    c.pretrain.arch = pretrain::ArchFromName(pt.at("discriminator").get<std::string>());
    const json& tn = full.at("trainer");
    c.ensemble = {tn.at("gamma").get<double>(), tn.at("tau").get<double>(), tn.at("policy_lr").get<double>(),
                  tn.at("critic_lr").get<double>()};
    c.trainer.minibatch = tn.at("minibatch").get<std::size_t>();
    c.trainer.buffer_capacity = tn.at("buffer_capacity").get<std::size_t>();
    c.trainer.warmup = tn.at("warmup").get<std::size_t>();
    c.trainer.episodes = tn.at("episodes").get<int>();
    c.trainer.tick_budget = tn.at("tick_budget").get<long>();
    c.trainer.reward_scale = tn.at("reward_scale").get<double>();
    const json& ou = tn.at("ou");
    c.trainer.ou = {ou.at("theta").get<double>(), ou.at("sigma").get<double>(), ou.at("mu").get<double>()};
    c.eval_rounds = full.at("eval").at("rounds").get<int>();
    const json& ab = full.at("ablation");
    c.ablation.seeds = ab.at("seeds").get<std::vector<std::uint64_t>>();
    c.ablation.variants = ab.at("variants").get<std::vector<std::string>>();
    c.ablation.expert_fractions = ab.at("expert_fractions").get<std::vector<double>>();
    c.ablation.pretrain_steps = ab.at("pretrain_steps").get<std::vector<int>>();
    c.ablation.discriminator_b = ab.at("discriminator_b").get<bool>();
    c.ablation.total_tick_budget = ab.at("total_tick_budget").get<long>();
    c.Validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

RunConfig Load(const json& document, const std::string& preset_override, const std::vector<std::string>& overrides) {
  CheckKeys(document, ToJson(RunConfig{}), "");
  std::string preset = "desk3";
  if (document.contains("preset")) preset = document.at("preset").get<std::string>();
  if (!preset_override.empty()) preset = preset_override;
  json merged = ToJson(Preset(preset));
  merged.merge_patch(document);
  merged["preset"] = preset;
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' must be key=value");
    std::string pointer = "/" + item.substr(0, eq);
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    const json::json_pointer ptr(pointer);
    if (!merged.contains(ptr)) throw ConfigError("unknown config key '" + item.substr(0, eq) + "'");
    const std::string raw = item.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    merged[ptr] = value;
  }
  return FromJson(merged);
}

RunConfig LoadFile(const std::filesystem::path& path, const std::string& preset_override,
                   const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
  return Load(doc, preset_override, overrides);
}

std::string StageDigest(const RunConfig& config, Stage stage, bool no_pretrain) {
  const json j = ToJson(config);
  json parts = {{"seed", j.at("seed")}, {"scenario", j.at("scenario")}, {"expert", j.at("expert")}};
  if (stage == Stage::kRnd || stage == Stage::kTrain || stage == Stage::kEval) parts["rnd"] = j.at("rnd");
  if (stage == Stage::kPretrain || ((stage == Stage::kTrain || stage == Stage::kEval) && !no_pretrain))
    parts["pretrain"] = j.at("pretrain");
  if (stage == Stage::kTrain || stage == Stage::kEval) {
    parts["trainer"] = j.at("trainer");
    parts["no_pretrain"] = no_pretrain;
  }
  if (stage == Stage::kEval) parts["eval"] = j.at("eval");
  return DigestHex(Digest(parts));
}

}  // namespace lepus::config
