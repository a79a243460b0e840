#pragma once

// Demonstration generation and persistence: scripted multi-modal imperfect
// demonstrators over CraftWorld, MineRL-style action obfuscation through a
// seeded random orthogonal map, and a length-prefixed binary trajectory
// format (docs/demo_format.md).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "craftrl/env.hpp"
#include "craftrl/rng.hpp"

namespace craftrl::demos {

// ---------------------------------------------------------------------------
// Obfuscator: one-hot action (padded to dim) + optional Gaussian noise,
// pushed through a seeded random orthogonal matrix.

class Obfuscator {
public:
    explicit Obfuscator(uint64_t seed, int dim = 64, double noise_scale = 0.0);

    std::vector<double> obfuscate(env::Action a, Rng& rng) const;
    env::Action deobfuscate(const std::vector<double>& v) const;

    int dim() const { return dim_; }
    uint64_t seed() const { return seed_; }
    double noise_scale() const { return noise_scale_; }
    // max |Q Q^T - I| entry, for the orthogonality invariant
    double orthogonality_error() const;

private:
    uint64_t seed_;
    int dim_;
    double noise_scale_;
    std::vector<double> q_;  // row-major orthogonal matrix
};

// ---------------------------------------------------------------------------

struct Transition {
    env::Observation obs;
    std::vector<double> action;
    double reward = 0.0;
    env::Observation next_obs;
    bool done = false;
};

// Observations are stored once (T+1 of them); transition i reads
// observations[i] and observations[i+1].
struct Trajectory {
    std::vector<env::Observation> observations;
    std::vector<std::vector<double>> actions;
    std::vector<double> rewards;
    double total_reward = 0.0;
    bool success = false;
    std::map<std::string, std::string> meta;

    size_t size() const { return actions.size(); }
    Transition transition(size_t i) const;
    const env::Observation& obs(size_t i) const { return observations[i]; }
    const env::Observation& next_obs(size_t i) const { return observations[i + 1]; }
    bool operator==(const Trajectory&) const = default;
};

// ---------------------------------------------------------------------------
// Scripted demonstrator. View-limited: it only reads grid cells inside the
// current view window and remembers what it has seen this episode, exploring
// quadrant waypoints until the next target kind is spotted.

enum class DemoMode : int { canonical = 0, alternative = 1 };

class ScriptedDemonstrator {
public:
    ScriptedDemonstrator(DemoMode mode, uint64_t seed);

    void begin_episode(const env::CraftWorld& world);
    // choose the next primitive action (before noise substitution)
    env::Action act(const env::CraftWorld& world);

private:
    void update_memory(const env::CraftWorld& world);
    int find_known(env::Cell kind, const env::CraftWorld& world) const;
    env::Action go_to(int goal_cell, bool face_only, const env::CraftWorld& world, bool& arrived,
                      bool& ok);

    DemoMode mode_;
    Rng rng_;
    int grid_ = 0;
    std::vector<int> memory_;  // -1 unknown, else Cell value
    std::vector<int> waypoints_;
    size_t waypoint_i_ = 0;
};

// ---------------------------------------------------------------------------

struct DemoGenConfig {
    int n = 100;
    std::vector<double> mode_mix = {1.0, 0.0};  // canonical, alternative
    double noise = 0.0;                         // per-step uniform action substitution
    uint64_t seed = 0;
    int workers = 1;
};

// Deterministic given (env config, gen config, obfuscator); workers only fan
// out episode simulation, results are merged in episode-index order.
std::vector<Trajectory> generate_demos(const env::EnvConfig& env_cfg, const DemoGenConfig& cfg,
                                       const Obfuscator& obf);

// ---------------------------------------------------------------------------
// Binary demo files.

struct DemoFileHeader {
    uint64_t env_config_hash = 0;
    uint64_t obfuscator_seed = 0;
    uint32_t action_dim = 0;
    std::vector<std::string> item_names;
};

struct LoadedDemos {
    DemoFileHeader header;
    std::vector<Trajectory> demos;
    std::vector<std::string> warnings;
};

void save_demos(const std::vector<Trajectory>& demos, const std::string& path,
                const env::EnvConfig& env_cfg, const Obfuscator& obf);
// expect != nullptr adds a warning when the stored env-config hash mismatches
LoadedDemos load_demos(const std::string& path, const env::EnvConfig* expect = nullptr);

}  // namespace craftrl::demos
