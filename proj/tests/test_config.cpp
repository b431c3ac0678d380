#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lepus/ablation.hpp"
#include "lepus/config.hpp"
#include "lepus/error.hpp"

using namespace lepus;
using config::Stage;
using nlohmann::json;

TEST_CASE("default hyperparameters are carried by every preset") {
  for (const auto& name : config::PresetNames()) {
    const auto c = config::Preset(name);
    CHECK(c.rnd.distill.iters == 200);
    CHECK(c.rnd.distill.minibatch == 256);
    CHECK(c.rnd.distill.learning_rate == 1e-3);
    CHECK(c.rnd.v == 250000.0);
    CHECK(c.pretrain.dis_learning_rate == 1e-4);
    CHECK(c.ensemble.policy_lr == 1e-4);
    CHECK(c.ensemble.critic_lr == 1e-3);
    CHECK(c.ensemble.tau == 1e-3);
    CHECK(c.ensemble.gamma == 0.99);
    CHECK(c.trainer.minibatch == 32);
    CHECK(c.eval_rounds == 20);
    CHECK(c.scenario.sim.obs_dim == 65);
    c.Validate();
  }
  CHECK(config::Preset("paper3").pretrain.dis_iter == 20000);
  CHECK(config::Preset("paper4").pretrain.dis_iter == 30000);
  CHECK(config::Preset("paper4").scenario.sim.n_agents == 4);
  CHECK(config::Preset("paper3").expert.generate.n_rounds == 1000);
  CHECK(config::Preset("paper3").expert.generate.max_steps_keep == 750);
  CHECK(config::Preset("desk3").pretrain.dis_iter == 2000);
  CHECK(config::Preset("desk3").scenario.track.lap_length == 400.0);
  CHECK_THROWS_AS(config::Preset("desk9"), ConfigError);
}

TEST_CASE("json round trip") {
  const auto c = config::Preset("desk4");
  const auto back = config::FromJson(json::parse(config::ToJson(c).dump()));
  CHECK(config::ToJson(back) == config::ToJson(c));
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(config::Load(json{{"trainer", {{"gama", 0.9}}}}), ConfigError);
  CHECK_THROWS_AS(config::Load(json{{"extra", 1}}), ConfigError);
  CHECK_THROWS_AS(config::Load(json::object(), "", {"trainer.nope=1"}), ConfigError);
  CHECK_THROWS_AS(config::Load(json::object(), "", {"trainer.gamma"}), ConfigError);
  CHECK_THROWS_AS(config::Load(json{{"trainer", {{"gamma", "high"}}}}), ConfigError);
}

TEST_CASE("layering: preset, document, overrides") {
  const json doc = {{"preset", "desk4"}, {"seed", 5}, {"trainer", {{"gamma", 0.95}}}};
  const auto a = config::Load(doc);
  CHECK(a.preset == "desk4");
  CHECK(a.scenario.sim.n_agents == 4);
  CHECK(a.seed == 5);
  CHECK(a.ensemble.gamma == 0.95);
  CHECK(a.ensemble.tau == 1e-3);

  const auto b = config::Load(doc, "desk3", {"trainer.gamma=0.5", "pretrain.discriminator=B"});
  CHECK(b.scenario.sim.n_agents == 3);
  CHECK(b.ensemble.gamma == 0.5);
  CHECK(b.pretrain.arch == pretrain::DiscriminatorArch::kLeaky128x64x32);
}

TEST_CASE("cross-field validation") {
  CHECK_THROWS_AS(config::Load(json{{"scenario", {{"obs_dim", 10}}}}), ConfigError);
  CHECK_THROWS_AS(config::Load(json{{"scenario", {{"n_agents", 30}}}}), ConfigError);
  CHECK_THROWS_AS(config::Load(json{{"trainer", {{"warmup", 4}, {"minibatch", 32}}}}), ConfigError);
  CHECK_THROWS_AS(config::Load(json{{"rnd", {{"v", -1.0}}}}), ConfigError);
  CHECK_THROWS_AS(config::Load(json{{"pretrain", {{"expert_fraction", 0.0}}}}), ConfigError);
}

TEST_CASE("config files") {
  const auto dir = std::filesystem::temp_directory_path() / "lepus_test_config";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.json";
  std::ofstream(good) << R"({"preset": "desk3", "eval": {"rounds": 3}})";
  CHECK(config::LoadFile(good).eval_rounds == 3);
  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(config::LoadFile(bad), ConfigError);
  CHECK_THROWS_AS(config::LoadFile(dir / "missing.json"), ConfigError);
}

TEST_CASE("stage digests cover their inputs only") {
  const auto base = config::Preset("desk3");
  auto changed_eval = base;
  changed_eval.eval_rounds = 7;
  CHECK(config::StageDigest(base, Stage::kTrain) == config::StageDigest(changed_eval, Stage::kTrain));
  CHECK(config::StageDigest(base, Stage::kEval) != config::StageDigest(changed_eval, Stage::kEval));

  auto changed_pre = base;
  changed_pre.pretrain.dis_iter = 10;
  CHECK(config::StageDigest(base, Stage::kRnd) == config::StageDigest(changed_pre, Stage::kRnd));
  CHECK(config::StageDigest(base, Stage::kTrain) != config::StageDigest(changed_pre, Stage::kTrain));
  CHECK(config::StageDigest(base, Stage::kTrain, true) == config::StageDigest(changed_pre, Stage::kTrain, true));
  CHECK(config::StageDigest(base, Stage::kTrain, true) != config::StageDigest(base, Stage::kTrain, false));

  auto reseeded = base;
  reseeded.seed = 1;
  CHECK(config::StageDigest(base, Stage::kExperts) != config::StageDigest(reseeded, Stage::kExperts));
}

TEST_CASE("ablation variants") {
  const auto base = config::Preset("desk3");
  const auto v = ablation::ParseVariant("lepus-p", base);
  CHECK(!v.pretrain);
  CHECK(ablation::ParseVariant("lepus", base).pretrain);
  CHECK(ablation::ParseVariant("lepus-frac-0.3", base).expert_fraction == 0.3);
  CHECK(ablation::ParseVariant("lepus-steps-500", base).dis_iter == 500);
  CHECK(ablation::ParseVariant("lepus-dis-b", base).arch == pretrain::DiscriminatorArch::kLeaky128x64x32);
  CHECK_THROWS_AS(ablation::ParseVariant("lepus-frac-2", base), ConfigError);
  CHECK_THROWS_AS(ablation::ParseVariant("other", base), ConfigError);

  auto grid = base;
  grid.ablation.variants = {"lepus", "lepus-p"};
  const auto all = ablation::ExpandVariants(grid);
  int fractions = 0;
  for (const auto& x : all) fractions += x.name.rfind("lepus-frac-", 0) == 0;
  CHECK(fractions == 3);
  grid.ablation.variants = {"lepus"};
  grid.ablation.expert_fractions.clear();
  grid.ablation.pretrain_steps.clear();
  grid.ablation.discriminator_b = false;
  CHECK_THROWS_AS(ablation::ExpandVariants(grid), ConfigError);
}
