#include <catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "protoscope/pipeline.hpp"

using namespace protoscope;
using namespace protoscope::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

config::RunConfig synth_config(const fs::path& out, std::uint64_t seed, std::size_t n = 60) {
    config::RunConfig cfg;
    cfg.out_dir = out.string();
    cfg.seed = seed;
    cfg.synth_n = n;
    cfg.physics.rows = cfg.physics.cols = 32;
    return cfg;
}

} // namespace

TEST_CASE("config text parses and rejects unknown keys", "[pipeline]") {
    const std::string text =
        "# comment\n"
        "seed = 42\n"
        "test_fraction = 0.25\n"
        "corr_both=0.6\n"
        "cohort_filter = SPINE/T1/SYN-SPINE/sagittal\n"
        "synth_n = 120\n";
    const auto cfg = config::parse_config_text(text);
    CHECK(cfg.seed == 42u);
    CHECK(cfg.test_fraction == 0.25);
    CHECK(cfg.correlation.both == 0.6);
    CHECK(cfg.cohort_filter == "SPINE/T1/SYN-SPINE/sagittal");
    CHECK(cfg.synth_n == 120u);
    CHECK_THROWS_AS(config::parse_config_text("bogus_key = 1\n"), BadConfig);
    CHECK_THROWS_AS(config::parse_config_text("no equals sign\n"), BadConfig);
}

TEST_CASE("ingest of an empty directory warns and writes an empty table", "[pipeline]") {
    TempDir tmp("protoscope_test_ingest_empty");
    config::RunConfig cfg;
    cfg.input_dir = (tmp.path / "none").string();
    cfg.out_dir = (tmp.path / "out").string();
    const auto report = cmd_ingest(cfg);
    CHECK(report.warnings == 1);
    const auto csv = read_text_file(tmp.path / "out" / "metadata.csv");
    CHECK(csv.find("study_id") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1); // header only
}

TEST_CASE("synth then ingest yields one row per file; corrupt files are logged", "[pipeline]") {
    TempDir tmp("protoscope_test_ingest");
    auto cfg = synth_config(tmp.path / "synth", 7);
    cmd_synth(cfg);

    config::RunConfig ingest_cfg;
    ingest_cfg.input_dir = (tmp.path / "synth" / "dicom").string();
    ingest_cfg.out_dir = (tmp.path / "ingest").string();
    auto report = cmd_ingest(ingest_cfg);
    CHECK(report.warnings == 0);
    auto csv = read_text_file(tmp.path / "ingest" / "metadata.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 61); // header + 60 rows

    // corrupt one file: ingest continues with a warning
    write_binary_file(tmp.path / "synth" / "dicom" / "00000.dcm", {0x00, 0x01, 0x02});
    report = cmd_ingest(ingest_cfg);
    CHECK(report.warnings == 1);
    csv = read_text_file(tmp.path / "ingest" / "metadata.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 60); // header + 59 rows
}

TEST_CASE("build is deterministic and honors the small-cohort warning", "[pipeline]") {
    TempDir tmp("protoscope_test_build");
    auto cfg = synth_config(tmp.path / "synth", 11, 60);
    cmd_synth(cfg);

    config::RunConfig build_cfg;
    build_cfg.input_dir = (tmp.path / "synth" / "dicom").string();
    build_cfg.out_dir = (tmp.path / "out").string();
    build_cfg.seed = 11;
    build_cfg.min_cohort_rows = 292;
    const auto report = cmd_build(build_cfg);
    CHECK(report.exit_code == 0);

    const auto csv1 = read_text_file(tmp.path / "out" / "dataset.csv");
    const auto manifest = nlohmann::json::parse(read_text_file(tmp.path / "out" / "manifest.json"));
    CHECK(manifest.at("rows").get<int>() == 60);
    CHECK(manifest.at("small_cohort_warning").get<bool>() == true);
    CHECK(manifest.at("cohort_key").get<std::string>() == "SPINE/T1/SYN-SPINE/sagittal");
    const auto train = manifest.at("split").at("train").get<std::vector<std::size_t>>();
    const auto test = manifest.at("split").at("test").get<std::vector<std::size_t>>();
    CHECK(train.size() == 48);
    CHECK(test.size() == 12);

    // byte-identical rerun
    cmd_build(build_cfg);
    CHECK(read_text_file(tmp.path / "out" / "dataset.csv") == csv1);
}

TEST_CASE("train and explain produce the documented artifacts", "[pipeline]") {
    TempDir tmp("protoscope_test_train");
    auto cfg = synth_config(tmp.path, 13, 120);
    cfg.physics.label_noise = 0.05;
    cmd_synth(cfg);

    config::RunConfig run_cfg;
    run_cfg.input_dir = (tmp.path / "dicom").string();
    run_cfg.out_dir = tmp.path.string();
    run_cfg.seed = 13;
    run_cfg.outer_folds = 4;
    run_cfg.inner_folds = 2;
    run_cfg.explain_rows = 12;
    run_cfg.background_size = 20;
    run_cfg.n_coalitions = 2048;
    // one-cell grids keep this unit test fast
    run_cfg.grids["LR"] = {learners::HyperParams{}.set("lambda", 0.01)};
    run_cfg.grids["DT"] = {learners::HyperParams{}.set("max_depth", 3)};
    run_cfg.grids["RF"] = {
        learners::HyperParams{}.set("n_trees", 30).set("max_depth", 6).set("min_leaf", 1)};
    run_cfg.grids["GB"] = {learners::HyperParams{}
                               .set("n_stages", 40)
                               .set("shrinkage", 0.1)
                               .set("max_depth", 2)};
    run_cfg.grids["MLP"] = {learners::HyperParams{}
                                .set("h1", 8)
                                .set("h2", 0)
                                .set("learning_rate", 0.01)
                                .set("epochs", 60)};
    cmd_build(run_cfg);
    cmd_train(run_cfg);

    const auto evaluation =
        nlohmann::json::parse(read_text_file(tmp.path / "evaluation.json"));
    REQUIRE(evaluation.at("models").size() == 5);
    for (const auto kind : learners::kAllKinds) {
        const auto& block = evaluation.at("models").at(learners::kind_name(kind));
        CHECK(block.at("ncv").at("per_fold").size() == 4);
        const auto display =
            block.at("ncv").at("mean_std").at("f1").at("display").get<std::string>();
        CHECK(display.find(" ± ") != std::string::npos);
        CHECK(block.contains("holdout"));
        CHECK(fs::exists(tmp.path / "models" /
                         (std::string(learners::kind_name(kind)) + ".json")));
    }

    cmd_explain(run_cfg);
    for (const auto kind : learners::kAllKinds) {
        const std::string name = learners::kind_name(kind);
        CHECK(fs::exists(tmp.path / "attributions" / (name + ".csv")));
        CHECK(fs::exists(tmp.path / "figures" / ("beeswarm_" + name + ".svg")));
    }
    CHECK(fs::exists(tmp.path / "figures" / "top5.svg"));
    CHECK(fs::exists(tmp.path / "figures" / "bubble.svg"));

    const auto summary = nlohmann::json::parse(read_text_file(tmp.path / "summary.json"));
    CHECK(summary.at("models").size() == 5);
    CHECK(summary.at("feature_universe").size() == 12);

    // bubble SVG encodes the direction palette
    const auto bubble = read_text_file(tmp.path / "figures" / "bubble.svg");
    CHECK(bubble.find("<svg") != std::string::npos);
    CHECK(bubble.find("circle") != std::string::npos);
}

TEST_CASE("synth command writes fixtures and the ground-truth manifest", "[pipeline]") {
    TempDir tmp("protoscope_test_synth");
    auto cfg = synth_config(tmp.path, 17);
    const auto report = cmd_synth(cfg);
    CHECK(report.exit_code == 0);
    CHECK(list_dicom_files(tmp.path / "dicom").size() == 60);
    const auto truth = nlohmann::json::parse(read_text_file(tmp.path / "ground_truth.json"));
    CHECK(truth.at("n").get<int>() == 60);
    CHECK(truth.at("directions").at("percent_phase_fov").get<std::string>() == "direct");
    CHECK(truth.at("directions").at("age_years").get<std::string>() == "none");

    // deterministic rerun: identical bytes for a sample file
    const auto first = read_binary_file(tmp.path / "dicom" / "00000.dcm");
    cmd_synth(cfg);
    CHECK(read_binary_file(tmp.path / "dicom" / "00000.dcm") == first);
}
