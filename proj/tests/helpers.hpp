#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <utility>
#include <vector>

#include "craftrl/a2rl.hpp"
#include "craftrl/env.hpp"
#include "craftrl/rng.hpp"

namespace env = craftrl::env;

namespace testutil {

// Synthetic localized-change transitions: every state carries a 4x4 patch of
// vivid, per-sample-random content at one of nine grid positions; the
// "attack" action (cluster 0) replaces exactly that patch with fresh random
// content, the "turn" action (cluster 1) leaves the image unchanged. The
// patch content varies across samples, so the frozen projections cannot
// predict the post-attack pixels from it, while the stable background is
// fully predictable — the mask has to read the patch location out of the
// pixels, which is what the saliency check probes.
struct PatchDataset {
    static constexpr int kAttack = 0;
    static constexpr int kTurn = 1;
    int res = 32;
    int patch = 4;
    std::vector<env::Observation> storage;          // 2 per sample: s, s'
    std::vector<craftrl::a2rl::TransitionSample> samples;
    std::vector<std::pair<int, int>> patch_origin;  // per sample
};

inline PatchDataset make_patch_dataset(int n, uint64_t seed, int n_items = 9) {
    using craftrl::Rng;
    PatchDataset ds;
    Rng rng(craftrl::derive_seed(seed, "patch_dataset"));
    const int res = ds.res;
    const size_t plane = static_cast<size_t>(res) * res;
    const int grid[3] = {4, 14, 24};

    ds.storage.reserve(2 * n);
    for (int i = 0; i < n; ++i) {
        env::Observation s;
        s.image.channels = 3;
        s.image.height = res;
        s.image.width = res;
        s.image.pixels.resize(3 * plane);
        s.inventory.assign(n_items, 0);
        for (auto& px : s.image.pixels) px = static_cast<uint8_t>(60 + rng.uniform_u32(80));

        int pr = grid[rng.uniform_u32(3)];
        int pc = grid[rng.uniform_u32(3)];
        // vivid, per-sample-varying patch content (identifiable distribution,
        // unpredictable values)
        for (int y = pr; y < pr + ds.patch; ++y)
            for (int x = pc; x < pc + ds.patch; ++x) {
                s.image.pixels[0 * plane + y * res + x] = static_cast<uint8_t>(rng.uniform_u32(60));
                s.image.pixels[1 * plane + y * res + x] =
                    static_cast<uint8_t>(180 + rng.uniform_u32(76));
                s.image.pixels[2 * plane + y * res + x] = static_cast<uint8_t>(rng.uniform_u32(60));
            }

        env::Observation sp = s;
        int action = (i % 2 == 0) ? PatchDataset::kAttack : PatchDataset::kTurn;
        if (action == PatchDataset::kAttack) {
            for (int ch = 0; ch < 3; ++ch)
                for (int y = pr; y < pr + ds.patch; ++y)
                    for (int x = pc; x < pc + ds.patch; ++x)
                        sp.image.pixels[ch * plane + y * res + x] =
                            static_cast<uint8_t>(60 + rng.uniform_u32(80));
        }

        ds.storage.push_back(std::move(s));
        ds.storage.push_back(std::move(sp));
        ds.patch_origin.emplace_back(pr, pc);
        craftrl::a2rl::TransitionSample sample;
        sample.action = action;
        ds.samples.push_back(sample);
    }
    for (int i = 0; i < n; ++i) {
        ds.samples[i].s = &ds.storage[2 * i];
        ds.samples[i].next = &ds.storage[2 * i + 1];
    }
    return ds;
}

// mean saliency inside vs outside the sample's patch region (all channels)
inline std::pair<double, double> saliency_region_means(const std::vector<double>& sal, int res,
                                                       int patch, int pr, int pc) {
    const size_t plane = static_cast<size_t>(res) * res;
    double in = 0, out = 0;
    size_t n_in = 0, n_out = 0;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                bool inside = y >= pr && y < pr + patch && x >= pc && x < pc + patch;
                double v = sal[ch * plane + y * res + x];
                if (inside) {
                    in += v;
                    ++n_in;
                } else {
                    out += v;
                    ++n_out;
                }
            }
    return {in / n_in, out / n_out};
}

}  // namespace testutil
