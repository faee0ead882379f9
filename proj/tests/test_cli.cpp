#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifdef WAFERSSL_BIN
#include <sys/wait.h>
#endif

#include "testutil.hpp"
#include "waferssl/commands.hpp"
#include "waferssl/errors.hpp"

using namespace waferssl;

namespace {

RunConfig tiny_run_config(const testutil::TempDir& tmp, Variant variant) {
    RunConfig cfg;
    cfg.variant = variant;
    cfg.dataset_path = tmp.file("train.txt");
    cfg.val_path = tmp.file("val.txt");
    cfg.labeled_fraction = 0.5;
    cfg.split_seed = 3;
    cfg.out_dir = tmp.file("out");
    cfg.model.input_height = 16;
    cfg.model.input_width = 16;
    cfg.model.stem_channels = 4;
    cfg.model.blocks = 1;
    cfg.model.embed_dim = 8;
    cfg.model.proj_dim = 4;
    cfg.train.epochs = 2;
    cfg.train.batch_labeled = 8;
    cfg.train.batch_unlabeled = 8;
    cfg.train.lr = 0.02;
    cfg.train.seed = 5;
    cfg.train.augment.die_noise_rate = 0.05;
    return cfg;
}

void write_tiny_datasets(const testutil::TempDir& tmp) {
    std::array<std::size_t, kNumClasses> counts{};
    counts.fill(4);
    save_dataset(generate_synthetic_dataset(counts, 16, 16, 51, 0.05), tmp.file("train.txt"));
    counts.fill(2);
    save_dataset(generate_synthetic_dataset(counts, 16, 16, 52, 0.05), tmp.file("val.txt"));
}

// last CSV row, split on commas
std::vector<std::string> last_csv_row(const std::string& path) {
    std::ifstream in(path);
    std::string line, last;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    std::vector<std::string> cells;
    std::istringstream ss(last);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

#ifdef WAFERSSL_BIN
int run_binary(const std::string& args) {
    const std::string cmd = std::string(WAFERSSL_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}
#endif

}  // namespace

TEST_CASE("run_generate writes the requested records and counts") {
    testutil::TempDir tmp;
    std::array<std::size_t, kNumClasses> counts{};
    counts.fill(200);
    std::ostringstream log;
    run_generate(counts, 24, 24, 1, 0.05, tmp.file("d.txt"), log);
    const Dataset d = load_dataset(tmp.file("d.txt"));
    CHECK(d.size() == 1800);
    CHECK(log.str().find("1800") != std::string::npos);

    // all-zero counts still produce a valid, empty file
    std::array<std::size_t, kNumClasses> zeros{};
    run_generate(zeros, 24, 24, 1, 0.0, tmp.file("empty.txt"), log);
    CHECK(load_dataset(tmp.file("empty.txt")).empty());
}

TEST_CASE("run_resample rebalances files and reports counts") {
    testutil::TempDir tmp;
    std::array<std::size_t, kNumClasses> counts{};
    counts.fill(6);
    counts[0] = 20;
    save_dataset(generate_synthetic_dataset(counts, 16, 16, 9, 0.05), tmp.file("in.txt"));

    ResamplePlan plan;
    plan.target_per_class = 10;
    plan.smote_k = 3;
    plan.seed = 4;
    std::ostringstream log;
    run_resample(tmp.file("in.txt"), plan, tmp.file("out.txt"), log);
    const Dataset out = load_dataset(tmp.file("out.txt"));
    for (std::size_t c = 0; c < kNumClasses; ++c) CHECK(out.counts_per_class[c] == 10);
    CHECK(log.str().find("before:") != std::string::npos);
    CHECK(log.str().find("after:") != std::string::npos);

    // resample must not mutate its input
    const std::string before = testutil::read_file(tmp.file("in.txt"));
    run_resample(tmp.file("in.txt"), plan, tmp.file("out2.txt"), log);
    CHECK(testutil::read_file(tmp.file("in.txt")) == before);
}

TEST_CASE("run_resample surfaces the too-small class by name") {
    testutil::TempDir tmp;
    std::array<std::size_t, kNumClasses> counts{};
    counts[static_cast<std::size_t>(ClassLabel::Scratch)] = 1;
    counts[static_cast<std::size_t>(ClassLabel::None)] = 4;
    save_dataset(generate_synthetic_dataset(counts, 16, 16, 9, 0.0), tmp.file("in.txt"));
    ResamplePlan plan;
    plan.target_per_class = 3;
    std::ostringstream log;
    try {
        run_resample(tmp.file("in.txt"), plan, tmp.file("out.txt"), log);
        FAIL("expected TooFewSamples");
    } catch (const WaferError& e) {
        CHECK(std::string(e.what()).find("Scratch") != std::string::npos);
    }
}

TEST_CASE("identical train runs produce identical artifacts") {
    testutil::TempDir tmp;
    write_tiny_datasets(tmp);

    RunConfig cfg1 = tiny_run_config(tmp, Variant::MeanTeacherSupCon);
    cfg1.out_dir = tmp.file("run1");
    std::ostringstream log;
    run_train(cfg1, log);

    RunConfig cfg2 = tiny_run_config(tmp, Variant::MeanTeacherSupCon);
    cfg2.out_dir = tmp.file("run2");
    run_train(cfg2, log);

    CHECK(testutil::read_file(tmp.file("run1") + "/history.csv") ==
          testutil::read_file(tmp.file("run2") + "/history.csv"));
    CHECK(testutil::read_file(tmp.file("run1") + "/checkpoint_final.txt") ==
          testutil::read_file(tmp.file("run2") + "/checkpoint_final.txt"));

    // history has one row per epoch
    std::ifstream hist(tmp.file("run1") + "/history.csv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(hist, line)) ++rows;
    CHECK(rows == 1 + cfg1.train.epochs);

    // periodic checkpoints at evaluated epochs before the final one
    CHECK(std::filesystem::exists(tmp.file("run1") + "/checkpoint_epoch0001.txt"));
    CHECK_FALSE(std::filesystem::exists(tmp.file("run1") + "/checkpoint_epoch0002.txt"));
}

TEST_CASE("missing inputs fail cleanly before any outputs are created") {
    testutil::TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp, Variant::Baseline);
    cfg.dataset_path = tmp.file("nope.txt");
    std::ostringstream log;
    CHECK_THROWS_AS(run_train(cfg, log), WaferError);
    CHECK_FALSE(std::filesystem::exists(cfg.out_dir));
}

TEST_CASE("baseline and supcon variants never read the unlabeled file") {
    testutil::TempDir tmp;
    write_tiny_datasets(tmp);
    for (Variant v : {Variant::Baseline, Variant::SupCon}) {
        RunConfig cfg = tiny_run_config(tmp, v);
        cfg.unlabeled_path = tmp.file("does-not-exist.txt");
        cfg.out_dir = tmp.file(std::string("out-") + variant_name(v));
        std::ostringstream log;
        CHECK_NOTHROW(run_train(cfg, log));
    }
    RunConfig mt = tiny_run_config(tmp, Variant::MeanTeacher);
    mt.unlabeled_path = tmp.file("does-not-exist.txt");
    mt.out_dir = tmp.file("out-mt");
    std::ostringstream log;
    CHECK_THROWS_AS(run_train(mt, log), WaferError);
}

TEST_CASE("variant masking equals manual weight zeroing, bit for bit") {
    testutil::TempDir tmp;
    write_tiny_datasets(tmp);

    // supcon variant (ignores unlabeled, consistency forced to 0) ...
    RunConfig a = tiny_run_config(tmp, Variant::SupCon);
    a.out_dir = tmp.file("variant-supcon");
    std::ostringstream log;
    run_train(a, log);

    // ... must equal the full path with no unlabeled data and zero weight
    RunConfig b = tiny_run_config(tmp, Variant::MeanTeacherSupCon);
    b.train.loss.consistency_weight_max = 0.0;
    b.variant = Variant::SupCon;  // same unlabeled handling
    b.out_dir = tmp.file("manual-supcon");
    run_train(b, log);

    CHECK(testutil::read_file(tmp.file("variant-supcon") + "/history.csv") ==
          testutil::read_file(tmp.file("manual-supcon") + "/history.csv"));
    CHECK(testutil::read_file(tmp.file("variant-supcon") + "/checkpoint_final.txt") ==
          testutil::read_file(tmp.file("manual-supcon") + "/checkpoint_final.txt"));
}

TEST_CASE("run_eval agrees with the final history row") {
    testutil::TempDir tmp;
    write_tiny_datasets(tmp);
    RunConfig cfg = tiny_run_config(tmp, Variant::MeanTeacher);
    cfg.out_dir = tmp.file("run");
    std::ostringstream log;
    const TrainOutputs outputs = run_train(cfg, log);

    const MetricsReport report =
        run_eval(outputs.final_checkpoint_path, cfg.val_path, "teacher", tmp.file("report.txt"), log);

    const auto row = last_csv_row(outputs.history_path);
    REQUIRE(row.size() == 9);
    CHECK(std::fabs(report.accuracy - std::stod(row[5])) < 1e-12);
    CHECK(std::fabs(report.macro_precision - std::stod(row[6])) < 1e-12);
    CHECK(std::fabs(report.macro_recall - std::stod(row[7])) < 1e-12);
    CHECK(std::fabs(report.macro_f1 - std::stod(row[8])) < 1e-12);

    const std::string doc = testutil::read_file(tmp.file("report.txt"));
    CHECK(doc.find("overall.accuracy = ") != std::string::npos);

    CHECK_THROWS_AS(run_eval(outputs.final_checkpoint_path, cfg.val_path, "nonsense", "", log), WaferError);

    // empty dataset surfaces EmptyMatrix
    save_dataset(Dataset{}, tmp.file("empty.txt"));
    CHECK_THROWS_AS(run_eval(outputs.final_checkpoint_path, tmp.file("empty.txt"), "teacher", "", log),
                    WaferError);
}

TEST_CASE("config files parse, reject unknown keys, and round-trip") {
    testutil::TempDir tmp;
    const std::string path = tmp.file("cfg.txt");
    testutil::write_file(path,
                         "# comment\n"
                         "variant = mean_teacher\n"
                         "dataset = a.txt\n"
                         "val = b.txt\n"
                         "out_dir = out\n"
                         "labeled_fraction = 0.25\n"
                         "lr = 0.125\n"
                         "rotate_90s = false\n");
    const RunConfig cfg = parse_run_config(path);
    CHECK(cfg.variant == Variant::MeanTeacher);
    CHECK(cfg.labeled_fraction == 0.25);
    CHECK(cfg.train.lr == 0.125);
    CHECK_FALSE(cfg.train.augment.rotate_90s);

    testutil::write_file(path, "variant = baseline\nmystery_key = 3\n");
    try {
        parse_run_config(path);
        FAIL("expected ConfigInvalid");
    } catch (const WaferError& e) {
        CHECK(std::string(e.what()).find("mystery_key") != std::string::npos);
    }

    testutil::write_file(path, "dataset = a.txt\n");
    CHECK_THROWS_AS(parse_run_config(path), WaferError);  // variant is required

    // render -> parse round trip
    RunConfig full = tiny_run_config(tmp, Variant::SupCon);
    testutil::write_file(path, render_run_config(full));
    const RunConfig parsed = parse_run_config(path);
    CHECK(parsed.variant == Variant::SupCon);
    CHECK(parsed.train.epochs == full.train.epochs);
    CHECK(parsed.model.stem_channels == full.model.stem_channels);
}

TEST_CASE("verify suites run individually and honor fault injection") {
    std::ostringstream log;
    CHECK(run_verify("supcon", false, log));
    CHECK(log.str().find("supcon-oracle") != std::string::npos);
    CHECK(log.str().find("grad-model") == std::string::npos);

    std::ostringstream log2;
    CHECK_FALSE(run_verify("ema", true, log2));
    CHECK(log2.str().find("FAIL") != std::string::npos);

    std::ostringstream log3;
    CHECK_THROWS_AS(run_verify("bogus", false, log3), WaferError);
}

#ifdef WAFERSSL_BIN
TEST_CASE("the binary maps errors to documented exit codes") {
    testutil::TempDir tmp;
    // usage error: missing required --out
    CHECK(run_binary("generate --per-class 2") == 2);
    // unknown subcommand
    CHECK(run_binary("frobnicate") == 2);
    // success
    CHECK(run_binary("generate --per-class 2 --size 16 --out " + tmp.file("d.txt")) == 0);
    CHECK(load_dataset(tmp.file("d.txt")).size() == 18);
    // runtime failure: input file does not exist
    CHECK(run_binary("resample --in " + tmp.file("missing.txt") + " --target 4 --out " +
                     tmp.file("r.txt")) == 1);
    // verify subcommand: healthy suite passes, injected fault fails
    CHECK(run_binary("verify --suite ema") == 0);
    CHECK(run_binary("verify --suite ema --inject-fault") == 1);
}
#endif
