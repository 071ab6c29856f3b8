// Command-line front end for the staged pipeline.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hybridct/error.hpp"
#include "hybridct/json_io.hpp"
#include "hybridct/pipeline.hpp"

namespace {

struct Args {
  std::string config;
  std::string run_dir;
  std::string data_root;
  std::optional<std::uint64_t> seed;
  std::string backbone;
  bool force = false;
};

void add_common(CLI::App* cmd, Args& args) {
  cmd->add_option("--config", args.config, "Run configuration (JSON); missing keys take defaults");
  cmd->add_option("--run-dir", args.run_dir, "Run directory (default: output_dir from the config)");
  cmd->add_option("--data-root", args.data_root, "Dataset root; overrides data_root from the config");
  cmd->add_option("--seed", args.seed, "Master seed; overrides the config");
  cmd->add_flag("--force", args.force, "Replace artifacts built with a different configuration");
}

hybridct::RunConfig resolve_config(const Args& args) {
  hybridct::RunConfig config = args.config.empty() ? hybridct::RunConfig{} : hybridct::load_run_config(args.config);
  if (!args.data_root.empty()) config.data_root = args.data_root;
  if (args.seed) {
    config.seed = *args.seed;
    config.train.seed = *args.seed;
  }
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid CNN-feature + SVC classifier for COVID-19 CT scans"};
  app.require_subcommand(1);
  Args args;

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"prepare", "Scan the dataset and write the stratified split manifest"},
      {"train", "Fine-tune the classification head of one backbone (all three without --backbone)"},
      {"extract", "Extract penultimate-layer features for TRAIN and TEST"},
      {"fuse", "Fit per-backbone standardization + PCA and stack the reduced features"},
      {"fit-svc", "Fit the support-vector classifier on the stacked TRAIN features"},
      {"evaluate", "Evaluate the individual models and the hybrid on TEST and render reports"},
      {"run-all", "Run every stage in order, skipping those already up to date"},
      {"show-config", "Print the fully resolved configuration"},
  };
  for (const Command& c : commands) {
    CLI::App* cmd = app.add_subcommand(c.name, c.help);
    add_common(cmd, args);
    if (std::string(c.name) == "train") {
      cmd->add_option("--backbone", args.backbone, "vgg16, densenet121 or mobilenetv2");
    }
  }
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    hybridct::apply_thread_override();
    const hybridct::RunConfig config = resolve_config(args);
    if (name == "show-config") {
      std::cout << hybridct::run_config_to_json(config).dump(2) << "\n";
      std::cerr << "config_hash " << hybridct::config_hash(config) << "\n";
      return 0;
    }
    const std::filesystem::path run_dir = args.run_dir.empty() ? config.output_dir : std::filesystem::path(args.run_dir);
    hybridct::Pipeline pipeline(config, run_dir, {args.force, nullptr});

    // A single named stage with --force reruns even when up to date.
    auto single = [&](const std::string& stage, auto&& fn) {
      if (args.force) pipeline.invalidate(stage);
      fn();
    };
    if (name == "prepare") {
      single("prepare", [&] { pipeline.prepare(); });
    } else if (name == "train") {
      if (args.backbone.empty()) {
        for (auto id : hybridct::kCanonicalBackbones) pipeline.train(id);
      } else {
        const auto id = hybridct::parse_backbone(args.backbone);
        single("train/" + std::string(hybridct::to_string(id)), [&] { pipeline.train(id); });
      }
    } else if (name == "extract") {
      single("extract", [&] { pipeline.extract(); });
    } else if (name == "fuse") {
      single("fuse", [&] { pipeline.fuse(); });
    } else if (name == "fit-svc") {
      single("fit-svc", [&] { pipeline.fit_svc(); });
    } else if (name == "evaluate") {
      single("evaluate", [&] { pipeline.evaluate(); });
    } else if (name == "run-all") {
      pipeline.run_all();
    }
    return 0;
  } catch (const hybridct::Error& e) {
    std::cerr << "error [" << name << "] (" << hybridct::to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [" << name << "]: " << e.what() << "\n";
    return 1;
  }
}
