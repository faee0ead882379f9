#include "waferssl/augment.hpp"

#include "waferssl/errors.hpp"
#include "waferssl/rng.hpp"

namespace waferssl {

void AugmentPolicy::validate() const {
    if (!(die_noise_rate >= 0.0 && die_noise_rate <= 0.3)) {
        raise(ErrorCode::ConfigInvalid, "die_noise_rate must be in [0, 0.3]");
    }
}

namespace {

// quarter_turns in {0,1,2,3}; 1 and 3 require a square grid.
void rotate_grid(WaferMap& w, int quarter_turns) {
    if (quarter_turns == 0) return;
    const int h = w.height;
    const int wd = w.width;
    std::vector<std::uint8_t> out(w.grid.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < wd; ++c) {
            int nr = 0, nc = 0;
            switch (quarter_turns) {
                case 1: nr = c; nc = h - 1 - r; break;
                case 2: nr = h - 1 - r; nc = wd - 1 - c; break;
                case 3: nr = wd - 1 - c; nc = r; break;
            }
            out[static_cast<std::size_t>(nr) * wd + nc] = w.at(r, c);
        }
    }
    w.grid = std::move(out);
}

void flip_horizontal(WaferMap& w) {
    for (int r = 0; r < w.height; ++r) {
        for (int c = 0; c < w.width / 2; ++c) {
            std::swap(w.at(r, c), w.at(r, w.width - 1 - c));
        }
    }
}

void flip_vertical(WaferMap& w) {
    for (int r = 0; r < w.height / 2; ++r) {
        for (int c = 0; c < w.width; ++c) {
            std::swap(w.at(r, c), w.at(w.height - 1 - r, c));
        }
    }
}

}  // namespace

WaferMap augment(const WaferMap& wafer, const AugmentPolicy& policy, std::uint64_t seed) {
    policy.validate();
    WaferMap out = wafer;
    Rng rng(derive_seed(seed, {0xa0b5e1a7c3d2f019ULL}));

    if (policy.rotate_90s) {
        if (wafer.height == wafer.width) {
            rotate_grid(out, static_cast<int>(rng.uniform_below(4)));
        } else {
            // Non-square grids only rotate by 0 or 180 so dimensions are kept.
            rotate_grid(out, 2 * static_cast<int>(rng.uniform_below(2)));
        }
    }
    if (policy.flip) {
        if (rng.flip(0.5)) flip_horizontal(out);
        if (rng.flip(0.5)) flip_vertical(out);
    }
    if (policy.die_noise_rate > 0.0) {
        for (std::uint8_t& v : out.grid) {
            if (v == kBackground) continue;
            if (rng.flip(policy.die_noise_rate)) {
                v = (v == kPass) ? kFail : kPass;
            }
        }
    }
    return out;
}

}  // namespace waferssl
