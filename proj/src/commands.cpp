#include "waferssl/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "waferssl/errors.hpp"
#include "waferssl/eval.hpp"
#include "waferssl/verify.hpp"

namespace waferssl {

namespace {

void print_class_counts(const Dataset& dataset, std::ostream& log) {
    char buf[80];
    for (int c = 0; c < kNumClasses; ++c) {
        std::snprintf(buf, sizeof(buf), "  %-9s %zu", class_name(c).c_str(),
                      dataset.counts_per_class[static_cast<std::size_t>(c)]);
        log << buf << '\n';
    }
    if (dataset.unlabeled_count > 0) {
        log << "  (unlabeled) " << dataset.unlabeled_count << '\n';
    }
}

}  // namespace

void run_generate(const std::array<std::size_t, kNumClasses>& per_class_counts, int height, int width,
                  std::uint64_t seed, double noise_rate, const std::string& out_path, std::ostream& log) {
    const Dataset dataset = generate_synthetic_dataset(per_class_counts, height, width, seed, noise_rate);
    save_dataset(dataset, out_path);
    log << "wrote " << dataset.size() << " records to " << out_path << '\n';
    print_class_counts(dataset, log);
}

void run_resample(const std::string& in_path, const ResamplePlan& plan, const std::string& out_path,
                  std::ostream& log) {
    const Dataset input = load_dataset(in_path);
    log << "before:\n";
    print_class_counts(input, log);
    const Dataset balanced = balance_dataset(input, plan);
    save_dataset(balanced, out_path);
    log << "after:\n";
    print_class_counts(balanced, log);
    log << "wrote " << balanced.size() << " records to " << out_path << '\n';
}

TrainOutputs run_train(RunConfig config, std::ostream& log) {
    config.apply_variant_masking();
    config.validate();

    // Load and split everything up front; no outputs are created until the
    // inputs are known to be good.
    Dataset pool = load_dataset(config.dataset_path);
    if (!pool.fully_labeled()) {
        raise(ErrorCode::UnlabeledInput, "training dataset must be fully labeled");
    }
    Dataset labeled, split_unlabeled;
    if (config.labeled_fraction < 1.0) {
        std::tie(labeled, split_unlabeled) =
            split_labeled_fraction(pool, config.labeled_fraction, config.split_seed);
    } else {
        labeled = std::move(pool);
    }
    Dataset unlabeled;
    if (variant_uses_unlabeled(config.variant)) {
        unlabeled = std::move(split_unlabeled);
        if (!config.unlabeled_path.empty()) {
            Dataset extra = load_dataset(config.unlabeled_path);
            for (WaferMap& w : extra.records) {
                w.label = std::nullopt;
                unlabeled.push(std::move(w));
            }
        }
    }
    const Dataset val = load_dataset(config.val_path);
    if (!val.fully_labeled()) raise(ErrorCode::UnlabeledInput, "validation dataset must be fully labeled");

    if (config.resample_target > 0) {
        log << "rebalancing labeled split to " << config.resample_target << " per class\n";
        labeled = balance_dataset(labeled, config.resample);
    }

    log << "variant " << variant_name(config.variant) << ": " << labeled.size() << " labeled, "
        << unlabeled.size() << " unlabeled, " << val.size() << " validation records\n";

    std::filesystem::create_directories(config.out_dir);
    const EpochCallback write_periodic = [&](const EpochRecord& record, const ParamSet& student,
                                             const ParamSet& teacher, const ParamGrads& velocity,
                                             std::uint64_t step) {
        if (record.epoch == config.train.epochs) return;  // the final epoch gets checkpoint_final
        Checkpoint periodic;
        periodic.config = config.model;
        periodic.student = student;
        periodic.teacher = teacher;
        periodic.velocity = velocity;
        periodic.step = step;
        char name[48];
        std::snprintf(name, sizeof(name), "/checkpoint_epoch%04zu.txt", record.epoch);
        save_checkpoint(periodic, config.out_dir + name);
    };
    TrainResult result = train(labeled, unlabeled, val, config.model, config.train, write_periodic);

    TrainOutputs outputs;
    outputs.history_path = config.out_dir + "/history.csv";
    write_history_csv(result.history, outputs.history_path);

    Checkpoint ckpt;
    ckpt.config = config.model;
    ckpt.student = std::move(result.student);
    ckpt.teacher = std::move(result.teacher);
    ckpt.velocity = std::move(result.velocity);
    ckpt.step = result.steps;
    outputs.final_checkpoint_path = config.out_dir + "/checkpoint_final.txt";
    save_checkpoint(ckpt, outputs.final_checkpoint_path);

    for (const EpochRecord& r : result.history.epochs) {
        if (r.evaluated && r.epoch == result.history.epochs.size()) {
            outputs.final_report = r.val;
        }
    }
    log << variant_name(config.variant) << "  " << render_report(outputs.final_report, ReportStyle::Overall)
        << '\n';
    return outputs;
}

MetricsReport run_eval(const std::string& checkpoint_path, const std::string& dataset_path,
                       const std::string& network, const std::string& report_path, std::ostream& log) {
    if (network != "teacher" && network != "student") {
        raise(ErrorCode::ConfigInvalid, "network must be 'teacher' or 'student'");
    }
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const Dataset dataset = load_dataset(dataset_path);
    const ParamSet& params = network == "teacher" ? ckpt.teacher : ckpt.student;
    const MetricsReport report = evaluate_checkpoint(params, dataset, ckpt.config);
    log << "overall (accuracy, precision, recall, F1):\n"
        << render_report(report, ReportStyle::Overall) << '\n';
    log << "per class:\n" << render_report(report, ReportStyle::PerClass) << '\n';
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) raise(ErrorCode::Io, "cannot write report: " + report_path);
        out << report_key_values(report);
        log << "wrote " << report_path << '\n';
    }
    return report;
}

bool run_verify(const std::string& suite, bool inject_fault, std::ostream& log) {
    return run_verification(suite, inject_fault, log);
}

}  // namespace waferssl
