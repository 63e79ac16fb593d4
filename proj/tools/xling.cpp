// Pipeline driver: every stage of the embedding-transfer and zero-shot
// sentiment workflow runs off one declarative JSON config. Logs go to
// stderr; machine-readable results are written to files only.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "xling/pipeline.hpp"

namespace {

constexpr int kExitMissingInput = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xling: cross-lingual embedding transfer, alignment and zero-shot "
                 "sentiment pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string stage_filter;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto* run = app.add_subcommand("run", "Run pipeline stages from a JSON config");
    run->add_option("--config", config_path, "Pipeline config JSON")->required();
    run->add_option("--stage", stage_filter, "Run only entries matching this stage name or id");
    run->add_option("--out-dir", out_dir, "Override the config's output directory");
    run->add_option("--seed", seed, "Override the config's global seed")
        ->each([&](const std::string&) { seed_set = true; });

    CLI11_PARSE(app, argc, argv);

    try {
        const auto config = xling::pipeline::load_pipeline_config(config_path);
        const auto summary = xling::pipeline::run_all(
            config,
            stage_filter.empty() ? std::nullopt : std::optional<std::string>(stage_filter),
            seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
            out_dir.empty() ? std::nullopt
                            : std::optional<std::filesystem::path>(out_dir));
        std::cerr << "done: " << summary.executed << " stage(s) executed, " << summary.skipped
                  << " skipped\n";
        return 0;
    } catch (const xling::MissingInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingInput;
    } catch (const xling::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const xling::parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
