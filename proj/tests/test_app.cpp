#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "trl3d/app/commands.hpp"
#include "trl3d/app/config.hpp"
#include "trl3d/app/csv.hpp"
#include "trl3d/app/experiments.hpp"

using namespace trl3d;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("trl3d_app_" + name);
    fs::remove_all(dir);
    return dir;
}

// A model and dataset small enough for every command to finish in well under a second.
RunConfig tiny(const std::string& kind) {
    return RunConfig::parse("data.kind=" + kind +
                            "\n"
                            "data.image_size=16\n"
                            "data.train_per_class=2\ndata.test_per_class=1\n"
                            "data.frames=8\ndata.train_pairs=2\ndata.test_pairs=2\n"
                            "model.depth=2\nmodel.embed_dim=8\nmodel.insert_at=1\n"
                            "layer.stem_hidden=4\n"
                            "optim.steps=4\noptim.batch=2\n"
                            "ablate.seeds=1\n");
}

std::vector<std::vector<std::string>> rows_of(const fs::path& csv) { return read_csv(csv); }

}  // namespace

TEST_CASE("run config parsing") {
    const RunConfig cfg = RunConfig::parse("# comment\n  optim.lr = 0.5  # trailing\n\nmodel.insert_at=1,3\n");
    CHECK(cfg.real("optim.lr") == 0.5);
    CHECK(cfg.counts("model.insert_at") == std::vector<std::size_t>{1, 3});
    CHECK(cfg.count("model.depth") == 4);
    CHECK(cfg.words("ablate.variants") == std::vector<std::string>{"baseline", "mlp", "trl3d", "direct_xyz", "concat"});
    CHECK(cfg.flag("data.backdrop"));

    RunConfig empty = cfg;
    empty.set("model.insert_at", "");
    CHECK(empty.counts("model.insert_at").empty());

    CHECK_THROWS_AS(RunConfig::parse("no_such.key=1"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("optim.lr"), ConfigError);
    RunConfig bad;
    bad.set("optim.steps", "-3");
    CHECK_THROWS_AS(bad.count("optim.steps"), ConfigError);
    bad.set("optim.lr", "0.1x");
    CHECK_THROWS_AS(bad.real("optim.lr"), ConfigError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/cfg"), ConfigError);

    // resolved() lists every key once, sorted.
    std::istringstream lines(cfg.resolved());
    std::string line, previous;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        CHECK(line.find('=') != std::string::npos);
        CHECK(previous < line);
        previous = line;
        ++n;
    }
    CHECK(n == RunConfig::known_keys().size());
    CHECK(RunConfig::parse(cfg.resolved()).resolved() == cfg.resolved());
}

TEST_CASE("csv writer and number formatting") {
    CHECK(fmt(0.25) == "0.25");
    CHECK(fmt(1.0 / 3.0) == "0.3333333333");
    CHECK(fmt(-std::numeric_limits<double>::infinity()) == "-inf");
    CsvWriter csv({"a", "b"});
    csv.row({"1", "x"}).row({"2", "y"});
    CHECK(csv.text() == "a,b\n1,x\n2,y\n");
    CHECK_THROWS(csv.row({"only one"}));
    const fs::path dir = scratch("csv");
    fs::create_directories(dir);
    csv.save(dir / "t.csv");
    const auto rows = read_csv(dir / "t.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[2] == std::vector<std::string>{"2", "y"});
    fs::remove_all(dir);
}

TEST_CASE("run manifest echoes command, version and config") {
    RunConfig cfg;
    cfg.set("optim.lr", "0.02");
    const auto j = nlohmann::json::parse(run_manifest("train-align", cfg));
    CHECK(j.at("command") == "train-align");
    CHECK(j.at("library_version") == kLibraryVersion);
    CHECK(j.at("config").at("optim.lr") == "0.02");
    CHECK(j.at("config").size() == RunConfig::known_keys().size());
}

TEST_CASE("learning rate schedules") {
    TrainOptions opt;
    opt.lr = 0.1;
    opt.steps = 10;
    CHECK(scheduled_lr(opt, 7) == 0.1);
    opt.schedule = "cosine";
    CHECK(scheduled_lr(opt, 0) == 0.1);
    CHECK(scheduled_lr(opt, 5) == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(scheduled_lr(opt, 10) == doctest::Approx(0.0));
    for (std::size_t s = 1; s <= 10; ++s) CHECK(scheduled_lr(opt, s) <= scheduled_lr(opt, s - 1));

    RunConfig cfg;
    cfg.set("optim.schedule", "linear");
    CHECK_THROWS_AS(train_options(cfg), ConfigError);
}

TEST_CASE("ablation variants") {
    CHECK(ablation_variants() == std::vector<std::string>{"baseline", "mlp", "trl3d", "direct_xyz", "concat"});
    const BackboneConfig base = backbone_config(RunConfig{});
    CHECK(apply_variant(base, "baseline").insert_at.empty());
    CHECK(apply_variant(base, "mlp").insert_kind == InsertKind::mlp_control);
    CHECK(apply_variant(base, "direct_xyz").layer.coord_mode == CoordMode::direct_xyz);
    CHECK(apply_variant(base, "concat").layer.fusion_mode == FusionMode::concat);
    CHECK_THROWS(apply_variant(base, "nope"));
}

TEST_CASE("untrained model aligns a sequence with itself perfectly") {
    const RunConfig cfg = tiny("align");
    const Dataset ds = generate_dataset(data_config(cfg));
    BackboneConfig b = backbone_config(cfg);
    b.num_classes = 0;
    const Model model(b, 3);
    for (const auto* seq : ds.select("test_seen", "a")) {
        const Embeddings e = embed_sequence(model, *seq);
        // Ties between identical frames would make the nearest neighbour ambiguous.
        for (Eigen::Index i = 0; i < e.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < e.rows(); ++j) REQUIRE((e.row(i) - e.row(j)).norm() > 1e-9);
        }
        const AlignmentReport rep = evaluate_alignment(e, e);
        CHECK(rep.alignment_error == 0.0);
        CHECK(rep.kendall_tau == 1.0);
    }
}

TEST_CASE("commands run end to end on a tiny setup") {
    const fs::path root = scratch("commands");
    std::ostringstream log;
    CHECK_THROWS(run_command("fly", RunConfig{}, root / "x", log));
    CHECK(command_names().size() == 8);

    // Alignment pipeline.
    RunConfig align = tiny("align");
    REQUIRE(run_command("gen-data", align, root / "align_data", log) == 0);
    align.set("data_dir", (root / "align_data").string());
    REQUIRE(run_command("train-align", align, root / "train", log) == 0);
    for (const char* name : {"checkpoint.bin", "loss.csv", "run.json", "checkpoint_000.bin", "checkpoint_100.bin"}) {
        CHECK(fs::exists(root / "train" / name));
    }
    CHECK(rows_of(root / "train" / "loss.csv").size() == 5);

    align.set("checkpoint", (root / "train" / "checkpoint.bin").string());
    REQUIRE(run_command("eval-align", align, root / "eval", log) == 0);
    const auto summary = rows_of(root / "eval" / "summary.csv");
    CHECK(summary.size() == 5);
    for (std::size_t r = 1; r < summary.size(); ++r) {
        const double err = std::stod(summary[r][3]);
        CHECK(err >= 0.0);
        CHECK(err <= 0.75);
    }
    REQUIRE(run_command("eval-depth", align, root / "depth", log) == 0);
    CHECK(rows_of(root / "depth" / "depth.csv").size() == 4);
    align.set("checkpoints", (root / "train" / "checkpoint_000.bin").string() + "," +
                                 (root / "train" / "checkpoint.bin").string());
    REQUIRE(run_command("eval-camera", align, root / "camera", log) == 0);
    CHECK(rows_of(root / "camera" / "camera_summary.csv").size() == 3);

    // Classification pipeline, and the wrong kind of data is refused.
    RunConfig cls = tiny("classify");
    REQUIRE(run_command("gen-data", cls, root / "cls_data", log) == 0);
    cls.set("data_dir", (root / "cls_data").string());
    REQUIRE(run_command("train-classify", cls, root / "cls", log) == 0);
    CHECK(fs::exists(root / "cls" / "accuracy.csv"));
    cls.set("ablate.variants", "baseline,trl3d");
    REQUIRE(run_command("ablate", cls, root / "ablate", log) == 0);
    CHECK(rows_of(root / "ablate" / "ablation.csv").size() == 3);
    CHECK_THROWS(run_command("eval-align", cls, root / "wrong", log));
    RunConfig no_data = tiny("align");
    CHECK_THROWS(run_command("train-align", no_data, root / "none", log));

    fs::remove_all(root);
}

TEST_CASE("gradcheck command passes on a tiny model") {
    const fs::path root = scratch("gradcheck");
    std::ostringstream log;
    REQUIRE(run_command("gradcheck", tiny("classify"), root, log) == 0);
    const auto rows = rows_of(root / "gradcheck.csv");
    REQUIRE(rows.size() > 10);
    for (std::size_t r = 1; r < rows.size(); ++r) CHECK(rows[r][4] == "PASS");
    fs::remove_all(root);
}
