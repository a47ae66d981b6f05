#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "equivae/commands.hpp"
#include "equivae/logging.hpp"

namespace {

equivae::RunConfig load_config(const std::string& config_path, int64_t seed_override,
                               const std::string& out_override) {
    equivae::RunConfig config = equivae::load_run_config(config_path);
    if (seed_override >= 0) {
        config.seed = static_cast<uint64_t>(seed_override);
    }
    if (!out_override.empty()) {
        config.output_dir = out_override;
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    equivae::init_logging();

    CLI::App app{"EquiVAE: invariant-equivariant variational autoencoder"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir;
    std::string probe;
    std::string split = "test";
    int64_t seed_override = -1;

    auto add_common = [&](CLI::App* cmd, bool needs_checkpoint) {
        cmd->add_option("--config", config_path, "run-config JSON path")->required();
        cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_option("--out", out_dir, "output directory override");
        if (needs_checkpoint) {
            cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
        }
    };

    CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(train, false);

    CLI::App* eval = app.add_subcommand("eval", "distance-classifier report on the test split");
    add_common(eval, true);

    CLI::App* generate = app.add_subcommand("generate", "write generative probe image grids");
    add_common(generate, true);
    generate->add_option("--probe", probe,
                         "one of: prior-samples, interpolate, style-grid, latent-grid")
        ->required();

    CLI::App* embed = app.add_subcommand("embed", "export latent embeddings as CSV");
    add_common(embed, true);
    embed->add_option("--split", split, "train|unlabelled|validation|test");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            equivae::cmd_train(load_config(config_path, seed_override, out_dir));
        } else if (*eval) {
            equivae::RunConfig config = load_config(config_path, seed_override, out_dir);
            const auto report_path =
                (std::filesystem::path(config.output_dir) / "report.json").string();
            std::filesystem::create_directories(config.output_dir);
            equivae::cmd_eval(config, checkpoint_path, report_path);
        } else if (*generate) {
            equivae::RunConfig config = load_config(config_path, seed_override, out_dir);
            equivae::cmd_generate(config, checkpoint_path, probe, config.output_dir);
        } else if (*embed) {
            equivae::RunConfig config = load_config(config_path, seed_override, out_dir);
            const auto csv_path = (std::filesystem::path(config.output_dir) /
                                   ("embeddings_" + split + ".csv"))
                                      .string();
            equivae::cmd_embed(config, checkpoint_path, split, csv_path);
        }
    } catch (const equivae::Error& e) {
        equivae::log_message(equivae::LogLevel::Error, e.what());
        return 1;
    }
    return 0;
}
