#pragma once

#include <string>

#include "waferssl/model.hpp"
#include "waferssl/resample.hpp"
#include "waferssl/train.hpp"

namespace waferssl {

// Table-style method variants; each forces the loss weights it ablates to
// zero and decides whether the unlabeled data is read at all.
enum class Variant {
    Baseline,          // classification only, unlabeled ignored
    MeanTeacher,       // classification + consistency
    SupCon,            // classification + supcon, unlabeled ignored
    MeanTeacherSupCon  // all three terms
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

inline bool variant_uses_unlabeled(Variant v) {
    return v == Variant::MeanTeacher || v == Variant::MeanTeacherSupCon;
}

// Everything a training run needs, parsed from a flat `key = value` config
// document. Unknown keys are rejected.
struct RunConfig {
    Variant variant = Variant::MeanTeacherSupCon;
    std::string dataset_path;    // fully labeled training pool
    std::string val_path;
    std::string unlabeled_path;  // optional extra unlabeled file
    double labeled_fraction = 1.0;  // < 1 splits dataset_path per class
    std::uint64_t split_seed = 1;
    std::string out_dir;
    std::size_t resample_target = 0;  // > 0 rebalances the labeled split before training
    ResamplePlan resample;
    ModelConfig model;
    TrainConfig train;

    void validate() const;
    // Forces the weights the variant ablates to zero.
    void apply_variant_masking();
};

RunConfig parse_run_config(const std::string& path);

// Serialization helper so generated configs round-trip through the parser.
std::string render_run_config(const RunConfig& config);

}  // namespace waferssl
