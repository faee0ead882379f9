#include <array>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "waferssl/commands.hpp"
#include "waferssl/errors.hpp"

namespace {

// "Center=1000,Donut=3" or a bare integer applied to all nine classes.
std::array<std::size_t, waferssl::kNumClasses> parse_counts(const std::string& per_class,
                                                            const std::string& counts) {
    std::array<std::size_t, waferssl::kNumClasses> result{};
    if (!per_class.empty()) {
        result.fill(static_cast<std::size_t>(std::stoull(per_class)));
    }
    if (!counts.empty()) {
        std::istringstream ss(counts);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) {
                waferssl::raise(waferssl::ErrorCode::ConfigInvalid,
                                "--counts expects Name=count entries, got '" + item + "'");
            }
            const std::string name = item.substr(0, eq);
            const int idx = waferssl::class_index(name);
            if (idx < 0) {
                waferssl::raise(waferssl::ErrorCode::ConfigInvalid, "unknown class name '" + name + "'");
            }
            result[static_cast<std::size_t>(idx)] = std::stoull(item.substr(eq + 1));
        }
    }
    return result;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wafer-map semi-supervised training toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 1;
    std::string config_path;
    std::string out_dir;
    app.add_option("--seed", seed, "global random seed override");
    app.add_option("--config", config_path, "run config file");
    app.add_option("--out-dir", out_dir, "output directory override");

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset file");
    std::string gen_per_class, gen_counts, gen_out;
    int gen_size = 24, gen_height = 0, gen_width = 0;
    double gen_noise = 0.05;
    gen->add_option("--per-class", gen_per_class, "record count for every class");
    gen->add_option("--counts", gen_counts, "per-class overrides, e.g. None=1000,Donut=3");
    gen->add_option("--size", gen_size, "square wafer size in dies (default 24)");
    gen->add_option("--height", gen_height, "wafer height (overrides --size)");
    gen->add_option("--width", gen_width, "wafer width (overrides --size)");
    gen->add_option("--noise", gen_noise, "pass<->fail flip rate in [0,0.5)");
    gen->add_option("--out", gen_out, "output dataset path")->required();

    // resample
    auto* res = app.add_subcommand("resample", "rebalance a dataset file");
    std::string res_in, res_out;
    std::size_t res_target = 0, res_k = 5;
    bool res_clamp = false;
    res->add_option("--in", res_in, "input dataset path")->required();
    res->add_option("--out", res_out, "output dataset path")->required();
    res->add_option("--target", res_target, "records per class after rebalancing")->required();
    res->add_option("--k", res_k, "SMOTE neighbor count (default 5)");
    res->add_flag("--clamp-k", res_clamp, "clamp k to class_count-1 instead of failing");

    // train
    auto* trn = app.add_subcommand("train", "run a training variant from a config file");

    // eval
    auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_network = "teacher", eval_report;
    evl->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    evl->add_option("--dataset", eval_data, "dataset path")->required();
    evl->add_option("--network", eval_network, "teacher (default) or student");
    evl->add_option("--report", eval_report, "write machine-readable report here");

    // verify
    auto* ver = app.add_subcommand("verify", "run the numerical verification suites");
    std::string ver_suite = "all";
    bool ver_fault = false;
    ver->add_option("--suite", ver_suite, "grad, supcon, ema, smote, or all");
    ver->add_flag("--inject-fault", ver_fault, "test hook: corrupt one result to force a failure");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) {
            if (gen_per_class.empty() && gen_counts.empty()) {
                std::cerr << "generate: need --per-class and/or --counts\n";
                return 2;
            }
            const int h = gen_height > 0 ? gen_height : gen_size;
            const int w = gen_width > 0 ? gen_width : gen_size;
            waferssl::run_generate(parse_counts(gen_per_class, gen_counts), h, w, seed, gen_noise,
                                   gen_out, std::cout);
        } else if (res->parsed()) {
            waferssl::ResamplePlan plan;
            plan.target_per_class = res_target;
            plan.smote_k = res_k;
            plan.seed = seed;
            plan.allow_k_clamp = res_clamp;
            waferssl::run_resample(res_in, plan, res_out, std::cout);
        } else if (trn->parsed()) {
            if (config_path.empty()) {
                std::cerr << "train: --config is required\n";
                return 2;
            }
            waferssl::RunConfig config = waferssl::parse_run_config(config_path);
            if (app.count("--seed") > 0) config.train.seed = seed;
            if (!out_dir.empty()) config.out_dir = out_dir;
            waferssl::run_train(std::move(config), std::cout);
        } else if (evl->parsed()) {
            waferssl::run_eval(eval_ckpt, eval_data, eval_network, eval_report, std::cout);
        } else if (ver->parsed()) {
            if (!waferssl::run_verify(ver_suite, ver_fault, std::cout)) {
                std::cerr << "verification FAILED\n";
                return 1;
            }
        }
    } catch (const waferssl::WaferError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
