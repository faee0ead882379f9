#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "waferssl/augment.hpp"
#include "waferssl/dataset.hpp"
#include "waferssl/eval.hpp"
#include "waferssl/losses.hpp"
#include "waferssl/model.hpp"

namespace waferssl {

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_labeled = 32;
    std::size_t batch_unlabeled = 32;
    double lr = 0.05;
    double momentum = 0.9;
    double ema_alpha = 0.99;
    std::uint64_t seed = 1;
    LossConfig loss;
    AugmentPolicy augment;
    std::size_t eval_every = 1;            // epochs between validation passes
    bool consistency_on_labeled = true;    // include labeled records in the consistency term
    bool augment_teacher = true;           // independently augment the teacher's inputs

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    LossBreakdown losses;   // means over the epoch's steps
    bool evaluated = false;
    MetricsReport val;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    ParamSet student;
    ParamSet teacher;
    ParamGrads velocity;
    TrainHistory history;
    std::uint64_t steps = 0;
};

// Invoked after each evaluated epoch; run_train uses it to emit periodic
// checkpoints.
using EpochCallback = std::function<void(const EpochRecord&, const ParamSet& student,
                                         const ParamSet& teacher, const ParamGrads& velocity,
                                         std::uint64_t step)>;

// Mean Teacher loop: mixed labeled/unlabeled batches, independent student and
// teacher augmentation, composite loss on the student, SGD student update,
// EMA teacher update. The teacher starts as a copy of the student and is only
// ever written by the EMA. Validation runs the teacher in eval mode.
TrainResult train(const Dataset& labeled, const Dataset& unlabeled, const Dataset& val,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_eval = {});

// Eval-mode forward over the dataset, argmax over logits (ties -> lower
// class), confusion-matrix metrics.
MetricsReport evaluate_checkpoint(const ParamSet& params, const Dataset& dataset,
                                  const ModelConfig& model_config);

// One CSV row per epoch:
// epoch,classification,consistency,supcontrast,total,val_accuracy,
// val_macro_precision,val_macro_recall,val_macro_f1
void write_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace waferssl
