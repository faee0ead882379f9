#include <doctest.h>

#include <cmath>

#include "waferssl/errors.hpp"
#include "waferssl/train.hpp"

using namespace waferssl;

namespace {

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.input_height = 16;
    cfg.input_width = 16;
    cfg.stem_channels = 4;
    cfg.blocks = 1;
    cfg.embed_dim = 8;
    cfg.proj_dim = 4;
    return cfg;
}

Dataset small_dataset(std::size_t per_class, std::uint64_t seed) {
    std::array<std::size_t, kNumClasses> counts{};
    counts.fill(per_class);
    return generate_synthetic_dataset(counts, 16, 16, seed, 0.05);
}

TrainConfig small_train(std::size_t epochs) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_labeled = 8;
    cfg.batch_unlabeled = 8;
    cfg.lr = 0.02;
    cfg.seed = 5;
    cfg.augment.die_noise_rate = 0.05;
    return cfg;
}

bool bit_equal(const ParamSet& a, const ParamSet& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (a.entries[i].name != b.entries[i].name) return false;
        if (a.entries[i].value.data != b.entries[i].value.data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("alpha 0 without noise sources keeps teacher identical to student") {
    const Dataset labeled = small_dataset(2, 3);
    const Dataset val = small_dataset(1, 4);
    TrainConfig cfg = small_train(2);
    cfg.ema_alpha = 0.0;
    cfg.augment.rotate_90s = false;
    cfg.augment.flip = false;
    cfg.augment.die_noise_rate = 0.0;
    cfg.loss.consistency_weight_max = 0.0;
    const TrainResult r = train(labeled, Dataset{}, val, small_model(), cfg);
    CHECK(bit_equal(r.student, r.teacher));
    CHECK(r.history.epochs.size() == 2);
}

TEST_CASE("zero epochs returns the untouched initialization") {
    const Dataset labeled = small_dataset(1, 3);
    const TrainResult r = train(labeled, Dataset{}, Dataset{}, small_model(), small_train(0));
    CHECK(r.history.epochs.empty());
    CHECK(r.steps == 0);
    CHECK(bit_equal(r.student, r.teacher));  // teacher starts as a copy

    // alpha = 1 freezes the teacher at that initialization forever
    TrainConfig frozen = small_train(1);
    frozen.ema_alpha = 1.0;
    const TrainResult r2 = train(labeled, Dataset{}, Dataset{}, small_model(), frozen);
    CHECK(bit_equal(r2.teacher, r.student));
    CHECK_FALSE(bit_equal(r2.student, r2.teacher));
}

TEST_CASE("training is deterministic in its seed") {
    const Dataset labeled = small_dataset(2, 9);
    const Dataset unlabeled_src = small_dataset(3, 10);
    Dataset unlabeled;
    for (WaferMap w : unlabeled_src.records) {
        w.label = std::nullopt;
        unlabeled.push(std::move(w));
    }
    const Dataset val = small_dataset(1, 11);

    const TrainResult a = train(labeled, unlabeled, val, small_model(), small_train(2));
    const TrainResult b = train(labeled, unlabeled, val, small_model(), small_train(2));
    CHECK(bit_equal(a.student, b.student));
    CHECK(bit_equal(a.teacher, b.teacher));
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
        CHECK(a.history.epochs[i].losses.total == b.history.epochs[i].losses.total);
        CHECK(a.history.epochs[i].val.macro_f1 == b.history.epochs[i].val.macro_f1);
    }

    TrainConfig other = small_train(2);
    other.seed = 6;
    const TrainResult c = train(labeled, unlabeled, val, small_model(), other);
    CHECK_FALSE(bit_equal(a.student, c.student));
}

TEST_CASE("train rejects unusable datasets") {
    const ModelConfig mc = small_model();
    CHECK_THROWS_AS(train(Dataset{}, Dataset{}, Dataset{}, mc, small_train(1)), WaferError);

    Dataset half = small_dataset(1, 1);
    half.records.front().label = std::nullopt;
    half.recount();
    CHECK_THROWS_AS(train(half, Dataset{}, Dataset{}, mc, small_train(1)), WaferError);

    const Dataset labeled = small_dataset(1, 2);
    CHECK_THROWS_AS(train(labeled, Dataset{}, half, mc, small_train(1)), WaferError);
}

TEST_CASE("history carries loss means and validation snapshots") {
    const Dataset labeled = small_dataset(2, 21);
    const Dataset val = small_dataset(1, 22);
    TrainConfig cfg = small_train(3);
    cfg.eval_every = 2;
    const TrainResult r = train(labeled, Dataset{}, val, small_model(), cfg);
    REQUIRE(r.history.epochs.size() == 3);
    CHECK_FALSE(r.history.epochs[0].evaluated);
    CHECK(r.history.epochs[1].evaluated);
    CHECK(r.history.epochs[2].evaluated);  // final epoch always evaluates
    for (const EpochRecord& e : r.history.epochs) {
        CHECK(std::isfinite(e.losses.total));
        CHECK(e.losses.classification >= 0.0);
        CHECK(e.losses.consistency >= 0.0);
    }
}

TEST_CASE("consistency scope and teacher augmentation flags are honored") {
    const Dataset labeled = small_dataset(2, 40);
    const Dataset val = small_dataset(1, 41);

    // no unlabeled data + consistency restricted to unlabeled rows -> the
    // consistency term vanishes identically
    TrainConfig cfg = small_train(1);
    cfg.consistency_on_labeled = false;
    const TrainResult r = train(labeled, Dataset{}, val, small_model(), cfg);
    CHECK(r.history.epochs.front().losses.consistency == 0.0);

    TrainConfig on = small_train(1);
    const TrainResult r2 = train(labeled, Dataset{}, val, small_model(), on);
    CHECK(r2.history.epochs.front().losses.consistency > 0.0);

    // an un-augmented teacher changes the run but stays deterministic
    TrainConfig plain_teacher = small_train(1);
    plain_teacher.augment_teacher = false;
    const TrainResult a = train(labeled, Dataset{}, val, small_model(), plain_teacher);
    const TrainResult b = train(labeled, Dataset{}, val, small_model(), plain_teacher);
    CHECK(bit_equal(a.student, b.student));
    CHECK_FALSE(bit_equal(a.student, r2.student));
}

TEST_CASE("the epoch callback fires exactly on evaluated epochs") {
    const Dataset labeled = small_dataset(2, 42);
    const Dataset val = small_dataset(1, 43);
    TrainConfig cfg = small_train(3);
    cfg.eval_every = 2;
    std::vector<std::size_t> seen;
    train(labeled, Dataset{}, val, small_model(), cfg,
          [&](const EpochRecord& r, const ParamSet&, const ParamSet&, const ParamGrads&,
              std::uint64_t) { seen.push_back(r.epoch); });
    CHECK(seen == std::vector<std::size_t>{2, 3});
}

TEST_CASE("evaluate_checkpoint is stable under duplication and near-chance untrained") {
    const ModelConfig mc = small_model();
    const ParamSet params = init_params(mc, 123);

    const Dataset small = small_dataset(4, 30);
    Dataset doubled = small;
    for (const WaferMap& w : small.records) doubled.push(w);
    const MetricsReport once = evaluate_checkpoint(params, small, mc);
    const MetricsReport twice = evaluate_checkpoint(params, doubled, mc);
    CHECK(once.accuracy == twice.accuracy);
    CHECK(once.macro_f1 == doctest::Approx(twice.macro_f1).epsilon(1e-15));

    // untrained network on a balanced 9-class set sits near chance
    const Dataset big = small_dataset(200, 31);
    const MetricsReport r = evaluate_checkpoint(params, big, mc);
    CHECK(r.accuracy > 0.02);
    CHECK(r.accuracy < 0.35);

    Dataset unlabeled = small;
    unlabeled.records.front().label = std::nullopt;
    unlabeled.recount();
    CHECK_THROWS_AS(evaluate_checkpoint(params, unlabeled, mc), WaferError);
}
