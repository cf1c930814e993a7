// protoscope: DICOM-metadata MRI protocol analysis toolkit.
//
//   protoscope ingest|build|train|explain|synth [--config PATH] [--seed N] [--out DIR]

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "protoscope/config.hpp"
#include "protoscope/pipeline.hpp"

namespace {

using protoscope::config::RunConfig;
using protoscope::pipeline::RunReport;

struct CommonFlags {
    std::string config_path;
    std::string input_dir;
    std::string out_dir;
    std::int64_t seed = -1;
    bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "flat key=value config file");
    cmd->add_option("--in", flags.input_dir, "input directory");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--seed", flags.seed, "random seed")->each([&](const std::string&) {
        flags.has_seed = true;
    });
}

RunConfig resolve(const CommonFlags& flags) {
    RunConfig config;
    if (!flags.config_path.empty())
        config = protoscope::config::parse_config_text(
            protoscope::pipeline::read_text_file(flags.config_path));
    if (!flags.input_dir.empty()) config.input_dir = flags.input_dir;
    if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
    if (flags.has_seed) config.seed = static_cast<std::uint64_t>(flags.seed);
    return config;
}

int finish(const RunReport& report) {
    for (const auto& msg : report.messages) std::cerr << "warning: " << msg << "\n";
    if (report.warnings > 0)
        std::cerr << report.warnings << " warning(s); see run manifest\n";
    return report.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AI-assisted MRI protocol analysis from DICOM metadata"};
    app.require_subcommand(1);

    CommonFlags ingest_flags, build_flags, train_flags, explain_flags, synth_flags;
    bool write_scrubbed = false;

    auto* ingest = app.add_subcommand("ingest", "extract metadata from a DICOM tree");
    add_common(ingest, ingest_flags);
    ingest->add_flag("--write-scrubbed", write_scrubbed, "also emit scrubbed .dcm copies");

    auto* build = app.add_subcommand("build", "assemble the labeled dataset");
    add_common(build, build_flags);

    auto* train = app.add_subcommand("train", "nested CV + holdout for the five model kinds");
    add_common(train, train_flags);

    auto* explain = app.add_subcommand("explain", "SHAP attributions, trends and figures");
    add_common(explain, explain_flags);

    auto* synth = app.add_subcommand("synth", "generate a synthetic physics-driven cohort");
    add_common(synth, synth_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed())
            return finish(protoscope::pipeline::cmd_ingest(resolve(ingest_flags), write_scrubbed));
        if (build->parsed()) return finish(protoscope::pipeline::cmd_build(resolve(build_flags)));
        if (train->parsed()) return finish(protoscope::pipeline::cmd_train(resolve(train_flags)));
        if (explain->parsed())
            return finish(protoscope::pipeline::cmd_explain(resolve(explain_flags)));
        if (synth->parsed()) return finish(protoscope::pipeline::cmd_synth(resolve(synth_flags)));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
