#include "waferssl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "waferssl/errors.hpp"
#include "waferssl/rng.hpp"

namespace waferssl {

const std::array<std::string, kNumClasses>& class_names() {
    static const std::array<std::string, kNumClasses> names = {
        "Center", "Donut", "Edge-Loc", "Edge-Ring", "Loc", "Near-full", "Random", "Scratch", "None",
    };
    return names;
}

const std::string& class_name(int index) { return class_names().at(static_cast<std::size_t>(index)); }

int class_index(const std::string& name) {
    const auto& names = class_names();
    for (int i = 0; i < kNumClasses; ++i) {
        if (names[static_cast<std::size_t>(i)] == name) return i;
    }
    return -1;
}

bool WaferMap::valid() const {
    if (height <= 0 || width <= 0) return false;
    if (grid.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) return false;
    for (std::uint8_t v : grid) {
        if (v > 2) return false;
    }
    if (label && (*label < 0 || *label >= kNumClasses)) return false;
    return true;
}

void Dataset::recount() {
    counts_per_class.fill(0);
    unlabeled_count = 0;
    for (const WaferMap& w : records) {
        if (w.label) {
            counts_per_class[static_cast<std::size_t>(*w.label)]++;
        } else {
            unlabeled_count++;
        }
    }
}

void Dataset::validate() const {
    std::array<std::size_t, kNumClasses> counts{};
    std::size_t unlabeled = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].valid()) {
            raise(ErrorCode::Format, "record " + std::to_string(i) + " violates wafer-map invariants");
        }
        if (records[i].label) {
            counts[static_cast<std::size_t>(*records[i].label)]++;
        } else {
            unlabeled++;
        }
    }
    if (counts != counts_per_class || unlabeled != unlabeled_count) {
        raise(ErrorCode::Format, "stored class counts disagree with records");
    }
}

void Dataset::push(WaferMap wafer) {
    if (wafer.label) {
        counts_per_class[static_cast<std::size_t>(*wafer.label)]++;
    } else {
        unlabeled_count++;
    }
    records.push_back(std::move(wafer));
}

namespace {

constexpr const char* kFormatTag = "waferssl-v1";

}  // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        raise(ErrorCode::Io, "cannot open dataset file: " + path);
    }
    std::string header;
    if (!std::getline(in, header)) {
        raise(ErrorCode::Format, "missing header line in " + path);
    }
    std::istringstream hs(header);
    std::string tag;
    int height = 0;
    int width = 0;
    hs >> tag >> height >> width;
    if (hs.fail() || tag != kFormatTag || height <= 0 || width <= 0) {
        raise(ErrorCode::Format, "bad header line in " + path + ": '" + header + "'");
    }
    const std::size_t cells = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);

    Dataset dataset;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string label_tok, grid_tok;
        ls >> label_tok >> grid_tok;
        if (label_tok.empty() || grid_tok.empty()) {
            raise(ErrorCode::Format, "line " + std::to_string(line_no) + ": expected '<label> <grid>'");
        }
        WaferMap wafer;
        wafer.height = height;
        wafer.width = width;
        if (label_tok == "-") {
            wafer.label = std::nullopt;
        } else if (label_tok.size() == 1 && label_tok[0] >= '0' && label_tok[0] <= '8') {
            wafer.label = label_tok[0] - '0';
        } else {
            raise(ErrorCode::Format,
                  "line " + std::to_string(line_no) + ": label must be 0..8 or '-', got '" + label_tok + "'");
        }
        if (grid_tok.size() != cells) {
            raise(ErrorCode::Format, "line " + std::to_string(line_no) + ": expected " + std::to_string(cells) +
                                         " grid digits, got " + std::to_string(grid_tok.size()));
        }
        wafer.grid.resize(cells);
        for (std::size_t i = 0; i < cells; ++i) {
            char c = grid_tok[i];
            if (c < '0' || c > '2') {
                raise(ErrorCode::Format,
                      "line " + std::to_string(line_no) + ": die state '" + std::string(1, c) + "' outside {0,1,2}");
            }
            wafer.grid[i] = static_cast<std::uint8_t>(c - '0');
        }
        dataset.push(std::move(wafer));
    }
    return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        raise(ErrorCode::Io, "cannot write dataset file: " + path);
    }
    int height = 0;
    int width = 0;
    if (!dataset.records.empty()) {
        height = dataset.records.front().height;
        width = dataset.records.front().width;
    } else {
        // Empty datasets still get a valid header; dimensions are nominal.
        height = 1;
        width = 1;
    }
    out << kFormatTag << ' ' << height << ' ' << width << '\n';
    std::string line;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const WaferMap& w = dataset.records[i];
        if (w.height != height || w.width != width) {
            raise(ErrorCode::Format, "record " + std::to_string(i) + " has mixed dimensions; v1 files are single-size");
        }
        line.clear();
        if (w.label) {
            line.push_back(static_cast<char>('0' + *w.label));
        } else {
            line.push_back('-');
        }
        line.push_back(' ');
        for (std::uint8_t v : w.grid) line.push_back(static_cast<char>('0' + v));
        out << line << '\n';
    }
    if (!out) {
        raise(ErrorCode::Io, "write failure on " + path);
    }
}

std::pair<Dataset, Dataset> split_labeled_fraction(const Dataset& dataset, double fraction,
                                                   std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        raise(ErrorCode::ConfigInvalid, "fraction must be in (0,1]");
    }
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        if (!dataset.records[i].label) {
            raise(ErrorCode::UnlabeledInput, "record " + std::to_string(i) + " has no label");
        }
    }
    // Per class, pick ceil(fraction * count) records (uniformly at random) to
    // keep their labels; the rest are copied unlabeled.
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        by_class[static_cast<std::size_t>(*dataset.records[i].label)].push_back(i);
    }
    std::vector<bool> keep_label(dataset.records.size(), false);
    for (int c = 0; c < kNumClasses; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        if (idx.empty()) continue;
        const std::size_t n_keep =
            static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size())));
        Rng rng(derive_seed(seed, {0x5b171d0093f15b97ULL, static_cast<std::uint64_t>(c)}));
        rng.shuffle(idx);
        for (std::size_t i = 0; i < n_keep && i < idx.size(); ++i) keep_label[idx[i]] = true;
    }
    Dataset labeled, unlabeled;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        if (keep_label[i]) {
            labeled.push(dataset.records[i]);
        } else {
            WaferMap w = dataset.records[i];
            w.label = std::nullopt;
            unlabeled.push(std::move(w));
        }
    }
    return {std::move(labeled), std::move(unlabeled)};
}

bool in_disc(int r, int c, int height, int width) {
    const double radius = std::min(height, width) / 2.0;
    const double dy = (r + 0.5) - height / 2.0;
    const double dx = (c + 0.5) - width / 2.0;
    return dy * dy + dx * dx <= radius * radius;
}

namespace {

struct DiscGeometry {
    double cy, cx, radius;
    std::vector<std::pair<int, int>> dies;  // in-disc coordinates, row-major order
};

DiscGeometry disc_geometry(int height, int width) {
    DiscGeometry g;
    g.cy = height / 2.0;
    g.cx = width / 2.0;
    g.radius = std::min(height, width) / 2.0;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            if (in_disc(r, c, height, width)) g.dies.emplace_back(r, c);
        }
    }
    return g;
}

double dist_from_center(const DiscGeometry& g, int r, int c) {
    const double dy = (r + 0.5) - g.cy;
    const double dx = (c + 0.5) - g.cx;
    return std::sqrt(dy * dy + dx * dx);
}

// Marks dies within `radius` of (br, bc) as fail.
void stamp_blob(WaferMap& w, const DiscGeometry& g, double br, double bc, double radius) {
    for (auto [r, c] : g.dies) {
        const double dy = (r + 0.5) - br;
        const double dx = (c + 0.5) - bc;
        if (dy * dy + dx * dx <= radius * radius) w.at(r, c) = kFail;
    }
}

void pattern_center(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    const double radius = g.radius * rng.uniform(0.18, 0.30);
    const double jitter = g.radius * 0.08;
    stamp_blob(w, g, g.cy + rng.uniform(-jitter, jitter), g.cx + rng.uniform(-jitter, jitter), radius);
}

void pattern_donut(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    const double inner = g.radius * rng.uniform(0.30, 0.40);
    const double outer = g.radius * rng.uniform(0.55, 0.70);
    for (auto [r, c] : g.dies) {
        const double d = dist_from_center(g, r, c);
        if (d >= inner && d <= outer) w.at(r, c) = kFail;
    }
}

void pattern_edge_loc(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    const double theta0 = rng.uniform(0.0, 2.0 * M_PI);
    const double span = rng.uniform(M_PI / 4.0, M_PI / 2.0);
    for (auto [r, c] : g.dies) {
        const double d = dist_from_center(g, r, c);
        if (d < g.radius - 2.5) continue;
        double ang = std::atan2((r + 0.5) - g.cy, (c + 0.5) - g.cx) - theta0;
        ang = std::fmod(ang + 4.0 * M_PI, 2.0 * M_PI);
        if (ang <= span) w.at(r, c) = kFail;
    }
}

void pattern_edge_ring(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    const double band = rng.uniform(1.2, 2.0);
    for (auto [r, c] : g.dies) {
        if (dist_from_center(g, r, c) >= g.radius - band) w.at(r, c) = kFail;
    }
}

void pattern_loc(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double offset = g.radius * rng.uniform(0.35, 0.55);
    const double br = g.cy + offset * std::sin(theta);
    const double bc = g.cx + offset * std::cos(theta);
    stamp_blob(w, g, br, bc, g.radius * rng.uniform(0.12, 0.20));
}

void pattern_near_full(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    // Fail exactly 90% of in-disc dies so the >= 80% contract holds for every seed.
    std::vector<std::size_t> order(g.dies.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_fail = (g.dies.size() * 9) / 10;
    for (std::size_t i = 0; i < n_fail; ++i) {
        auto [r, c] = g.dies[order[i]];
        w.at(r, c) = kFail;
    }
}

void pattern_random(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    for (auto [r, c] : g.dies) {
        if (rng.flip(0.15)) w.at(r, c) = kFail;
    }
}

void pattern_scratch(WaferMap& w, const DiscGeometry& g, Rng& rng) {
    // 1-die-wide polyline: a random walk with momentum, clipped to the disc.
    const std::size_t start = static_cast<std::size_t>(rng.uniform_below(g.dies.size()));
    double r = g.dies[start].first + 0.5;
    double c = g.dies[start].second + 0.5;
    double heading = rng.uniform(0.0, 2.0 * M_PI);
    const int steps = std::max(w.height, w.width);
    for (int s = 0; s < steps; ++s) {
        const int ri = static_cast<int>(r);
        const int ci = static_cast<int>(c);
        if (ri >= 0 && ri < w.height && ci >= 0 && ci < w.width && in_disc(ri, ci, w.height, w.width)) {
            w.at(ri, ci) = kFail;
        }
        heading += rng.uniform(-0.35, 0.35);
        r += std::sin(heading);
        c += std::cos(heading);
        if (dist_from_center(g, static_cast<int>(r), static_cast<int>(c)) > g.radius - 1.0) {
            heading += M_PI;  // bounce back toward the interior
        }
    }
}

}  // namespace

WaferMap generate_synthetic_wafer(ClassLabel cls, int height, int width, std::uint64_t seed,
                                  double noise_rate) {
    if (height < 16 || width < 16) {
        raise(ErrorCode::BadDimensions, "wafer dimensions must be >= 16");
    }
    if (!(noise_rate >= 0.0 && noise_rate < 0.5)) {
        raise(ErrorCode::ConfigInvalid, "noise_rate must be in [0, 0.5)");
    }
    WaferMap w;
    w.height = height;
    w.width = width;
    w.grid.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), kBackground);
    w.label = static_cast<int>(cls);

    DiscGeometry g = disc_geometry(height, width);
    for (auto [r, c] : g.dies) w.at(r, c) = kPass;

    Rng rng(derive_seed(seed, {0x77af1c4e1d3ULL, static_cast<std::uint64_t>(cls)}));
    switch (cls) {
        case ClassLabel::Center: pattern_center(w, g, rng); break;
        case ClassLabel::Donut: pattern_donut(w, g, rng); break;
        case ClassLabel::EdgeLoc: pattern_edge_loc(w, g, rng); break;
        case ClassLabel::EdgeRing: pattern_edge_ring(w, g, rng); break;
        case ClassLabel::Loc: pattern_loc(w, g, rng); break;
        case ClassLabel::NearFull: pattern_near_full(w, g, rng); break;
        case ClassLabel::Random: pattern_random(w, g, rng); break;
        case ClassLabel::Scratch: pattern_scratch(w, g, rng); break;
        case ClassLabel::None: break;
    }

    if (noise_rate > 0.0) {
        for (auto [r, c] : g.dies) {
            if (rng.flip(noise_rate)) {
                w.at(r, c) = (w.at(r, c) == kPass) ? kFail : kPass;
            }
        }
    }
    return w;
}

Dataset generate_synthetic_dataset(const std::array<std::size_t, kNumClasses>& per_class_counts,
                                   int height, int width, std::uint64_t seed, double noise_rate) {
    Dataset dataset;
    for (int c = 0; c < kNumClasses; ++c) {
        for (std::size_t i = 0; i < per_class_counts[static_cast<std::size_t>(c)]; ++i) {
            const std::uint64_t record_seed = derive_seed(seed, {static_cast<std::uint64_t>(c), i});
            dataset.push(generate_synthetic_wafer(static_cast<ClassLabel>(c), height, width, record_seed,
                                                  noise_rate));
        }
    }
    return dataset;
}

Tensor encode_input(const WaferMap& wafer, int target_height, int target_width) {
    if (target_height < 8 || target_width < 8) {
        raise(ErrorCode::BadDimensions, "encode target dimensions must be >= 8");
    }
    Tensor out({3, target_height, target_width});
    const std::size_t plane = static_cast<std::size_t>(target_height) * static_cast<std::size_t>(target_width);
    for (int i = 0; i < target_height; ++i) {
        int sr = static_cast<int>((i + 0.5) * wafer.height / target_height);
        sr = std::clamp(sr, 0, wafer.height - 1);
        for (int j = 0; j < target_width; ++j) {
            int sc = static_cast<int>((j + 0.5) * wafer.width / target_width);
            sc = std::clamp(sc, 0, wafer.width - 1);
            const std::uint8_t state = wafer.at(sr, sc);
            out.data[state * plane + static_cast<std::size_t>(i) * target_width + j] = 1.0;
        }
    }
    return out;
}

}  // namespace waferssl
