// lepus gen-experts|train-rnd|pretrain|train|eval|ablate --config <path>
//       [--seed S] [--out DIR] [--no-pretrain] [--preset NAME] [--set key=value]... [--force]

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lepus/ablation.hpp"
#include "lepus/config.hpp"
#include "lepus/error.hpp"
#include "lepus/pipeline.hpp"

namespace {

int Fail(const std::string& command, const std::string& code, const std::string& message, int exit_code) {
  nlohmann::json err = {{"error", {{"code", code}, {"message", message}, {"command", command}}}};
  std::cerr << err.dump() << std::endl;
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent cooperative driving: expert data, reward learning, pre-training, training, evaluation"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool no_pretrain = false;
  bool force = false;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-experts", "Generate the PID joint expert dataset"},
      {"train-rnd", "Train the joint random-distillation reward"},
      {"pretrain", "Adversarially pre-train the shared policy"},
      {"train", "Joint actor-critic training"},
      {"eval", "Evaluate the trained ensemble"},
      {"ablate", "Run the ablation variants"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--out", out_dir, "Run directory (overrides the config)");
    sub->add_flag("--no-pretrain", no_pretrain, "Train without the pre-trained policy (Lepus-p)");
    sub->add_option("--preset", preset, "Base preset: desk3, desk4, paper3, paper4");
    sub->add_option("--set", overrides, "Override a config key, e.g. --set trainer.episodes=10");
    sub->add_flag("--force", force, "Accept upstream artifacts produced under a different config");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Fail("", "usage_error", e.what(), 2);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    lepus::config::RunConfig config =
        config_path.empty() ? lepus::config::Load(nlohmann::json::object(), preset, overrides)
                            : lepus::config::LoadFile(config_path, preset, overrides);
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.output_dir = out_dir;
    config.Validate();
    const lepus::pipeline::StageOptions options{config.output_dir, no_pretrain, force};

    nlohmann::json summary;
    if (command == "gen-experts") {
      summary = lepus::pipeline::GenExperts(config, options);
    } else if (command == "train-rnd") {
      summary = lepus::pipeline::TrainRnd(config, options);
    } else if (command == "pretrain") {
      summary = lepus::pipeline::Pretrain(config, options);
    } else if (command == "train") {
      summary = lepus::pipeline::Train(config, options);
    } else if (command == "eval") {
      summary = lepus::pipeline::Evaluate(config, options);
    } else {
      summary = lepus::ablation::RunAblation(config, config.output_dir).ToJson();
    }
    std::cout << summary.dump(2) << std::endl;
    return 0;
  } catch (const lepus::ConfigError& e) {
    return Fail(command, e.code(), e.what(), 2);
  } catch (const lepus::Error& e) {
    return Fail(command, e.code(), e.what(), 1);
  } catch (const nlohmann::json::exception& e) {
    return Fail(command, "format_error", e.what(), 1);
  } catch (const std::exception& e) {
    return Fail(command, "internal_error", e.what(), 1);
  }
}
