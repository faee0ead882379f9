#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "waferssl/tensor.hpp"

namespace waferssl {

inline constexpr int kNumClasses = 9;

// Fixed class order; index = position in this list.
enum class ClassLabel : int {
    Center = 0,
    Donut = 1,
    EdgeLoc = 2,
    EdgeRing = 3,
    Loc = 4,
    NearFull = 5,
    Random = 6,
    Scratch = 7,
    None = 8,
};

const std::array<std::string, kNumClasses>& class_names();
const std::string& class_name(int index);
// Returns -1 when the name is unknown.
int class_index(const std::string& name);

// Die states of a wafer map grid.
enum DieState : std::uint8_t {
    kBackground = 0,  // off-wafer
    kPass = 1,
    kFail = 2,
};

// One wafer map: a height x width grid of die states with an optional class
// label. Row-major storage, grid[r * width + c].
struct WaferMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> grid;
    std::optional<int> label;

    bool valid() const;
    std::uint8_t at(int r, int c) const { return grid[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t& at(int r, int c) { return grid[static_cast<std::size_t>(r) * width + c]; }
};

// Ordered collection of wafer maps with labeled/unlabeled bookkeeping.
struct Dataset {
    std::vector<WaferMap> records;
    std::array<std::size_t, kNumClasses> counts_per_class{};
    std::size_t unlabeled_count = 0;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    bool fully_labeled() const { return unlabeled_count == 0; }

    // Recomputes the stored counts from the records.
    void recount();
    // Throws WaferError(Format) if any record violates its invariants or the
    // stored counts disagree with the records.
    void validate() const;

    void push(WaferMap wafer);
};

// Canonical line-oriented dataset file format:
//   line 1:   waferssl-v1 <height> <width>
//   line 2+:  <label 0..8 or -> <height*width digits from {0,1,2}>
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path);

// Per class, keeps ceil(fraction * class_count) records labeled; the rest are
// copied into the unlabeled set with labels removed. Deterministic in seed.
std::pair<Dataset, Dataset> split_labeled_fraction(const Dataset& dataset, double fraction,
                                                   std::uint64_t seed);

// Procedural wafer pattern synthesis. height, width >= 16. The pass region is
// the disc inscribed in the grid; fail dies follow a per-class rule; each
// in-disc die then flips pass<->fail with probability noise_rate.
WaferMap generate_synthetic_wafer(ClassLabel cls, int height, int width, std::uint64_t seed,
                                  double noise_rate);

Dataset generate_synthetic_dataset(const std::array<std::size_t, kNumClasses>& per_class_counts,
                                   int height, int width, std::uint64_t seed, double noise_rate);

// One-hot encoding, 3 x target_height x target_width, nearest-neighbor resize
// on die coordinates. Channel c at a pixel is 1 iff the resized die state is c.
Tensor encode_input(const WaferMap& wafer, int target_height, int target_width);

// True if die (r, c) lies inside the disc inscribed in a height x width grid.
bool in_disc(int r, int c, int height, int width);

}  // namespace waferssl
