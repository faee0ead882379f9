#include "waferssl/config.hpp"

#include <fstream>
#include <sstream>

#include "waferssl/errors.hpp"

namespace waferssl {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Baseline: return "baseline";
        case Variant::MeanTeacher: return "mean_teacher";
        case Variant::SupCon: return "supcon";
        case Variant::MeanTeacherSupCon: return "mean_teacher_supcon";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    if (name == "baseline") return Variant::Baseline;
    if (name == "mean_teacher") return Variant::MeanTeacher;
    if (name == "supcon") return Variant::SupCon;
    if (name == "mean_teacher_supcon") return Variant::MeanTeacherSupCon;
    raise(ErrorCode::ConfigInvalid, "unknown variant '" + name + "'");
}

void RunConfig::validate() const {
    if (dataset_path.empty()) raise(ErrorCode::ConfigInvalid, "dataset path is required");
    if (val_path.empty()) raise(ErrorCode::ConfigInvalid, "val path is required");
    if (out_dir.empty()) raise(ErrorCode::ConfigInvalid, "out_dir is required");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
        raise(ErrorCode::ConfigInvalid, "labeled_fraction must be in (0,1]");
    }
    model.validate();
    train.validate();
    if (resample_target > 0) resample.validate();
}

void RunConfig::apply_variant_masking() {
    switch (variant) {
        case Variant::Baseline:
            train.loss.consistency_weight_max = 0.0;
            train.loss.supcon_weight = 0.0;
            break;
        case Variant::MeanTeacher:
            train.loss.supcon_weight = 0.0;
            break;
        case Variant::SupCon:
            train.loss.consistency_weight_max = 0.0;
            break;
        case Variant::MeanTeacherSupCon:
            break;
    }
}

namespace {

struct KeyValue {
    std::string key;
    std::string value;
    std::size_t line;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const KeyValue& kv) {
    if (kv.value == "true" || kv.value == "1") return true;
    if (kv.value == "false" || kv.value == "0") return false;
    raise(ErrorCode::ConfigInvalid,
          "line " + std::to_string(kv.line) + ": '" + kv.key + "' expects true/false");
}

double parse_real(const KeyValue& kv) {
    try {
        std::size_t pos = 0;
        double v = std::stod(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        raise(ErrorCode::ConfigInvalid,
              "line " + std::to_string(kv.line) + ": '" + kv.key + "' expects a number");
    }
}

std::uint64_t parse_uint(const KeyValue& kv) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        raise(ErrorCode::ConfigInvalid,
              "line " + std::to_string(kv.line) + ": '" + kv.key + "' expects a nonnegative integer");
    }
}

int parse_int(const KeyValue& kv) { return static_cast<int>(parse_uint(kv)); }

}  // namespace

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::Io, "cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    bool saw_variant = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            raise(ErrorCode::ConfigInvalid, "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        KeyValue kv{trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)), line_no};
        if (kv.key.empty() || kv.value.empty()) {
            raise(ErrorCode::ConfigInvalid, "line " + std::to_string(line_no) + ": empty key or value");
        }

        if (kv.key == "variant") {
            cfg.variant = parse_variant(kv.value);
            saw_variant = true;
        } else if (kv.key == "dataset") {
            cfg.dataset_path = kv.value;
        } else if (kv.key == "val") {
            cfg.val_path = kv.value;
        } else if (kv.key == "unlabeled") {
            cfg.unlabeled_path = kv.value;
        } else if (kv.key == "labeled_fraction") {
            cfg.labeled_fraction = parse_real(kv);
        } else if (kv.key == "split_seed") {
            cfg.split_seed = parse_uint(kv);
        } else if (kv.key == "out_dir") {
            cfg.out_dir = kv.value;
        } else if (kv.key == "resample_target") {
            cfg.resample_target = parse_uint(kv);
            cfg.resample.target_per_class = cfg.resample_target;
        } else if (kv.key == "smote_k") {
            cfg.resample.smote_k = parse_uint(kv);
        } else if (kv.key == "allow_k_clamp") {
            cfg.resample.allow_k_clamp = parse_bool(kv);
        } else if (kv.key == "resample_seed") {
            cfg.resample.seed = parse_uint(kv);
        } else if (kv.key == "input_height") {
            cfg.model.input_height = parse_int(kv);
        } else if (kv.key == "input_width") {
            cfg.model.input_width = parse_int(kv);
        } else if (kv.key == "stem_channels") {
            cfg.model.stem_channels = parse_int(kv);
        } else if (kv.key == "blocks") {
            cfg.model.blocks = parse_int(kv);
        } else if (kv.key == "embed_dim") {
            cfg.model.embed_dim = parse_int(kv);
        } else if (kv.key == "proj_dim") {
            cfg.model.proj_dim = parse_int(kv);
        } else if (kv.key == "epochs") {
            cfg.train.epochs = parse_uint(kv);
        } else if (kv.key == "batch_labeled") {
            cfg.train.batch_labeled = parse_uint(kv);
        } else if (kv.key == "batch_unlabeled") {
            cfg.train.batch_unlabeled = parse_uint(kv);
        } else if (kv.key == "lr") {
            cfg.train.lr = parse_real(kv);
        } else if (kv.key == "momentum") {
            cfg.train.momentum = parse_real(kv);
        } else if (kv.key == "ema_alpha") {
            cfg.train.ema_alpha = parse_real(kv);
        } else if (kv.key == "seed") {
            cfg.train.seed = parse_uint(kv);
        } else if (kv.key == "eval_every") {
            cfg.train.eval_every = parse_uint(kv);
        } else if (kv.key == "consistency_on_labeled") {
            cfg.train.consistency_on_labeled = parse_bool(kv);
        } else if (kv.key == "augment_teacher") {
            cfg.train.augment_teacher = parse_bool(kv);
        } else if (kv.key == "temperature") {
            cfg.train.loss.temperature = parse_real(kv);
        } else if (kv.key == "consistency_weight") {
            cfg.train.loss.consistency_weight_max = parse_real(kv);
        } else if (kv.key == "supcon_weight") {
            cfg.train.loss.supcon_weight = parse_real(kv);
        } else if (kv.key == "classification_weight") {
            cfg.train.loss.classification_weight = parse_real(kv);
        } else if (kv.key == "include_anchor_in_denominator") {
            cfg.train.loss.include_anchor_in_denominator = parse_bool(kv);
        } else if (kv.key == "rampup_steps") {
            cfg.train.loss.rampup_steps = parse_uint(kv);
        } else if (kv.key == "rotate_90s") {
            cfg.train.augment.rotate_90s = parse_bool(kv);
        } else if (kv.key == "flip") {
            cfg.train.augment.flip = parse_bool(kv);
        } else if (kv.key == "die_noise_rate") {
            cfg.train.augment.die_noise_rate = parse_real(kv);
        } else {
            raise(ErrorCode::ConfigInvalid,
                  "line " + std::to_string(line_no) + ": unknown key '" + kv.key + "'");
        }
    }
    if (!saw_variant) raise(ErrorCode::ConfigInvalid, "config must set 'variant'");
    return cfg;
}

std::string render_run_config(const RunConfig& c) {
    std::ostringstream out;
    out << "variant = " << variant_name(c.variant) << '\n';
    out << "dataset = " << c.dataset_path << '\n';
    out << "val = " << c.val_path << '\n';
    if (!c.unlabeled_path.empty()) out << "unlabeled = " << c.unlabeled_path << '\n';
    out << "labeled_fraction = " << c.labeled_fraction << '\n';
    out << "split_seed = " << c.split_seed << '\n';
    out << "out_dir = " << c.out_dir << '\n';
    if (c.resample_target > 0) {
        out << "resample_target = " << c.resample_target << '\n';
        out << "smote_k = " << c.resample.smote_k << '\n';
        out << "allow_k_clamp = " << (c.resample.allow_k_clamp ? "true" : "false") << '\n';
        out << "resample_seed = " << c.resample.seed << '\n';
    }
    out << "input_height = " << c.model.input_height << '\n';
    out << "input_width = " << c.model.input_width << '\n';
    out << "stem_channels = " << c.model.stem_channels << '\n';
    out << "blocks = " << c.model.blocks << '\n';
    out << "embed_dim = " << c.model.embed_dim << '\n';
    out << "proj_dim = " << c.model.proj_dim << '\n';
    out << "epochs = " << c.train.epochs << '\n';
    out << "batch_labeled = " << c.train.batch_labeled << '\n';
    out << "batch_unlabeled = " << c.train.batch_unlabeled << '\n';
    out << "lr = " << c.train.lr << '\n';
    out << "momentum = " << c.train.momentum << '\n';
    out << "ema_alpha = " << c.train.ema_alpha << '\n';
    out << "seed = " << c.train.seed << '\n';
    out << "eval_every = " << c.train.eval_every << '\n';
    out << "consistency_on_labeled = " << (c.train.consistency_on_labeled ? "true" : "false") << '\n';
    out << "augment_teacher = " << (c.train.augment_teacher ? "true" : "false") << '\n';
    out << "temperature = " << c.train.loss.temperature << '\n';
    out << "consistency_weight = " << c.train.loss.consistency_weight_max << '\n';
    out << "supcon_weight = " << c.train.loss.supcon_weight << '\n';
    out << "classification_weight = " << c.train.loss.classification_weight << '\n';
    out << "include_anchor_in_denominator = "
        << (c.train.loss.include_anchor_in_denominator ? "true" : "false") << '\n';
    out << "rampup_steps = " << c.train.loss.rampup_steps << '\n';
    out << "rotate_90s = " << (c.train.augment.rotate_90s ? "true" : "false") << '\n';
    out << "flip = " << (c.train.augment.flip ? "true" : "false") << '\n';
    out << "die_noise_rate = " << c.train.augment.die_noise_rate << '\n';
    return out.str();
}

}  // namespace waferssl
