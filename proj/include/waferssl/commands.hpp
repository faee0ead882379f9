#pragma once

#include <array>
#include <iosfwd>
#include <string>

#include "waferssl/config.hpp"
#include "waferssl/dataset.hpp"
#include "waferssl/resample.hpp"

namespace waferssl {

// Library-level command bodies; the CLI binary is a thin wrapper and the test
// suites call these directly. All of them throw WaferError on failure.

void run_generate(const std::array<std::size_t, kNumClasses>& per_class_counts, int height, int width,
                  std::uint64_t seed, double noise_rate, const std::string& out_path, std::ostream& log);

void run_resample(const std::string& in_path, const ResamplePlan& plan, const std::string& out_path,
                  std::ostream& log);

struct TrainOutputs {
    std::string history_path;
    std::string final_checkpoint_path;
    MetricsReport final_report;
};

// Validates the config, loads datasets (the unlabeled file is opened only for
// variants that use it), runs the variant end to end, writes history.csv and
// checkpoints under out_dir, prints the final overall report row.
TrainOutputs run_train(RunConfig config, std::ostream& log);

// network: "teacher" (default) or "student".
MetricsReport run_eval(const std::string& checkpoint_path, const std::string& dataset_path,
                       const std::string& network, const std::string& report_path, std::ostream& log);

bool run_verify(const std::string& suite, bool inject_fault, std::ostream& log);

}  // namespace waferssl
