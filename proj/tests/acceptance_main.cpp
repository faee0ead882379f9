// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. `--only N` runs a single criterion (1-7).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "waferssl/commands.hpp"
#include "waferssl/dataset.hpp"
#include "waferssl/errors.hpp"
#include "waferssl/eval.hpp"
#include "waferssl/rng.hpp"
#include "waferssl/train.hpp"
#include "waferssl/verify.hpp"

using namespace waferssl;

namespace {

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Criterion timed(const std::string& name, double budget_s, bool (*body)(std::string&)) {
    Criterion c;
    c.name = name;
    const double t0 = now_seconds();
    try {
        c.pass = body(c.detail);
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = std::string("exception: ") + e.what();
    }
    c.seconds = now_seconds() - t0;
    if (budget_s > 0.0 && c.seconds > budget_s) {
        c.pass = false;
        c.detail += " [over time budget]";
    }
    return c;
}

bool criterion_gradients(std::string& detail) {
    const SuiteResult model = verify_model_gradients();
    const SuiteResult losses = verify_loss_gradients();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "model %.3e (<1e-4), losses %.3e (<1e-6)", model.worst_error,
                  losses.worst_error);
    detail = buf;
    return model.pass && losses.pass;
}

bool criterion_supcon(std::string& detail) {
    const SuiteResult r = verify_supcon_oracle();
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max |vectorized - naive| = %.3e (<1e-9)", r.worst_error);
    detail = buf;
    return r.pass;
}

bool criterion_ema(std::string& detail) {
    const SuiteResult r = verify_ema_contraction();
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max elementwise error = %.3e (<1e-12)", r.worst_error);
    detail = buf;
    return r.pass;
}

bool criterion_smote(std::string& detail) {
    const SuiteResult r = verify_smote_properties();
    char buf[96];
    std::snprintf(buf, sizeof(buf), "worst deviation = %.3e (<1e-9)", r.worst_error);
    detail = buf;
    return r.pass;
}

bool criterion_metrics(std::string& detail) {
    const ConfusionMatrix cm = confusion({0, 1, 1, 2}, {0, 0, 1, 2});
    const MetricsReport r = compute_metrics(cm);
    const bool hand = r.per_class[0].precision == 1.0 && r.per_class[0].recall == 0.5 &&
                      std::fabs(r.per_class[0].f1 - 2.0 / 3.0) < 1e-15 && r.accuracy == 0.75;

    MetricsReport table;
    table.accuracy = 0.8463;
    table.macro_precision = 0.8624;
    table.macro_recall = 0.8441;
    table.macro_f1 = 0.8340;
    const std::string rendered = render_report(table, ReportStyle::Overall);
    const bool bytes = rendered == "84.63%, 86.24%, 84.41%, 83.40%";
    detail = "hand case " + std::string(hand ? "ok" : "WRONG") + ", rendering '" + rendered + "'";
    return hand && bytes;
}

// ----- the desk-scale ablation benchmark ---------------------------------

struct BenchmarkRun {
    double final_f1 = 0.0;
    double epoch1_f1 = 0.0;
};

BenchmarkRun run_variant(Variant variant, std::uint64_t seed) {
    std::array<std::size_t, kNumClasses> counts{};
    counts.fill(200);
    const Dataset pool = generate_synthetic_dataset(counts, 24, 24, derive_seed(seed, {0xda7aULL}), 0.08);
    std::array<std::size_t, kNumClasses> val_counts{};
    val_counts.fill(40);
    const Dataset val =
        generate_synthetic_dataset(val_counts, 24, 24, derive_seed(seed, {0x7a1ULL}), 0.08);

    auto [labeled, unlabeled] = split_labeled_fraction(pool, 0.1, seed);
    if (!variant_uses_unlabeled(variant)) unlabeled = Dataset{};

    ModelConfig mc;
    mc.input_height = 24;
    mc.input_width = 24;
    mc.stem_channels = 8;
    mc.blocks = 2;
    mc.embed_dim = 32;
    mc.proj_dim = 16;

    TrainConfig tc;
    tc.epochs = 30;
    tc.batch_labeled = 16;
    tc.batch_unlabeled = 16;
    tc.lr = 0.05;
    tc.momentum = 0.9;
    tc.ema_alpha = 0.95;
    tc.seed = seed;
    tc.eval_every = 1;
    tc.loss.temperature = 0.1;
    tc.augment.rotate_90s = true;
    tc.augment.flip = true;
    tc.augment.die_noise_rate = 0.05;
    switch (variant) {
        case Variant::Baseline:
            tc.loss.consistency_weight_max = 0.0;
            tc.loss.supcon_weight = 0.0;
            break;
        case Variant::MeanTeacher:
            tc.loss.supcon_weight = 0.0;
            break;
        case Variant::SupCon:
            tc.loss.consistency_weight_max = 0.0;
            break;
        case Variant::MeanTeacherSupCon:
            break;
    }

    const TrainResult result = train(labeled, unlabeled, val, mc, tc);
    BenchmarkRun run;
    run.final_f1 = result.history.epochs.back().val.macro_f1;
    run.epoch1_f1 = result.history.epochs.front().val.macro_f1;
    return run;
}

bool criterion_ablation(std::string& detail) {
    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    double mean_f1[4] = {0.0, 0.0, 0.0, 0.0};
    bool progress_ok = true;
    const Variant variants[4] = {Variant::Baseline, Variant::MeanTeacher, Variant::SupCon,
                                 Variant::MeanTeacherSupCon};
    for (std::uint64_t seed : seeds) {
        for (int v = 0; v < 4; ++v) {
            const BenchmarkRun run = run_variant(variants[v], seed);
            mean_f1[v] += run.final_f1 / static_cast<double>(seeds.size());
            std::printf("    seed %llu %-19s final macro-F1 %.4f (epoch1 %.4f)\n",
                        static_cast<unsigned long long>(seed), variant_name(variants[v]), run.final_f1,
                        run.epoch1_f1);
            std::fflush(stdout);
            if (variants[v] == Variant::MeanTeacherSupCon && run.final_f1 <= run.epoch1_f1) {
                progress_ok = false;
            }
        }
    }
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "seed-mean macro-F1: baseline %.4f, mean_teacher %.4f, supcon %.4f, both %.4f",
                  mean_f1[0], mean_f1[1], mean_f1[2], mean_f1[3]);
    detail = buf;
    const bool combo = mean_f1[3] >= mean_f1[0] + 0.01;
    const bool mt_ok = mean_f1[1] >= mean_f1[0] - 0.005;
    const bool sc_ok = mean_f1[2] >= mean_f1[0] - 0.005;
    if (!progress_ok) detail += " [no learning progress]";
    return combo && mt_ok && sc_ok && progress_ok;
}

bool criterion_determinism(std::string& detail) {
    testutil::TempDir tmp;
    std::array<std::size_t, kNumClasses> counts{};
    counts.fill(6);
    save_dataset(generate_synthetic_dataset(counts, 16, 16, 61, 0.05), tmp.file("train.txt"));
    counts.fill(2);
    save_dataset(generate_synthetic_dataset(counts, 16, 16, 62, 0.05), tmp.file("val.txt"));

    RunConfig cfg;
    cfg.variant = Variant::MeanTeacherSupCon;
    cfg.dataset_path = tmp.file("train.txt");
    cfg.val_path = tmp.file("val.txt");
    cfg.labeled_fraction = 0.5;
    cfg.split_seed = 9;
    cfg.model.input_height = 16;
    cfg.model.input_width = 16;
    cfg.model.stem_channels = 4;
    cfg.model.blocks = 1;
    cfg.model.embed_dim = 8;
    cfg.model.proj_dim = 4;
    cfg.train.epochs = 3;
    cfg.train.batch_labeled = 8;
    cfg.train.batch_unlabeled = 8;
    cfg.train.lr = 0.02;
    cfg.train.seed = 17;
    cfg.train.augment.die_noise_rate = 0.1;

    std::ostringstream log;
    cfg.out_dir = tmp.file("a");
    run_train(cfg, log);
    cfg.out_dir = tmp.file("b");
    run_train(cfg, log);

    const bool history_same = testutil::read_file(tmp.file("a") + "/history.csv") ==
                              testutil::read_file(tmp.file("b") + "/history.csv");
    const bool ckpt_same = testutil::read_file(tmp.file("a") + "/checkpoint_final.txt") ==
                           testutil::read_file(tmp.file("b") + "/checkpoint_final.txt");
    detail = std::string("history ") + (history_same ? "identical" : "DIFFERS") + ", checkpoint " +
             (ckpt_same ? "identical" : "DIFFERS");
    return history_same && ckpt_same;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
    }

    struct Entry {
        int id;
        const char* name;
        double budget;
        bool (*body)(std::string&);
    };
    const Entry entries[] = {
        {1, "gradient fidelity (model < 1e-4, losses < 1e-6)", 60.0, criterion_gradients},
        {2, "supcon oracle equivalence (< 1e-9)", 10.0, criterion_supcon},
        {3, "EMA contraction law (< 1e-12)", 5.0, criterion_ema},
        {4, "SMOTE convexity / k-NN / uniform counts", 30.0, criterion_smote},
        {5, "metrics hand case + report rendering", 0.0, criterion_metrics},
        {6, "ablation direction on the synthetic benchmark", 900.0, criterion_ablation},
        {7, "bit-identical reruns of cmd_train", 0.0, criterion_determinism},
    };

    bool all_pass = true;
    for (const Entry& e : entries) {
        if (only != 0 && e.id != only) continue;
        const Criterion c = timed(e.name, e.budget, e.body);
        std::printf("[%s] %d. %s — %s (%.1fs)\n", c.pass ? "PASS" : "FAIL", e.id, e.name,
                    c.detail.c_str(), c.seconds);
        std::fflush(stdout);
        all_pass = all_pass && c.pass;
    }
    return all_pass ? 0 : 1;
}
