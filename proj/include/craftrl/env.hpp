#pragma once

// CraftWorld: a deterministic, seedable grid world with partial egocentric
// visual observations, an inventory, and a chained first-time reward
// structure. Instances are value types; copying one snapshots the episode
// (used by the random-search learner to replay from a fixed state).

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "craftrl/config.hpp"

namespace craftrl::env {

enum class Acquisition { gather_block, craft_recipe };

struct ItemSpec {
    std::string name;
    double reward = 1.0;
    std::string prerequisite;  // empty = none
    Acquisition acquisition = Acquisition::craft_recipe;
};

struct EnvConfig {
    int grid_size = 12;
    int view_size = 7;        // odd, <= grid_size
    int image_resolution = 32;  // pixels per side, up to 64
    int max_steps = 500;
    uint64_t seed = 0;
    std::vector<ItemSpec> item_chain;  // empty -> default 9-item chain

    // dynamics knobs
    int wood_axe_logs_required = 3;
    int tree_count = 3;
    int stone_count = 2;
    int iron_count = 2;
    int gem_count = 2;
    int min_agent_distance = 8;  // Manhattan, resources vs. agent spawn
    int min_pair_distance = 5;   // Manhattan, between resources
    // attacks needed to break each block kind
    int tree_hits = 4;
    int stone_hits = 5;
    int iron_hits = 6;
    int gem_hits = 6;

    static std::vector<ItemSpec> default_chain();
    void validate() const;  // throws ConfigError
    uint64_t hash() const;
};

EnvConfig env_config_from_ini(const IniFile& ini);

// 13 primitive actions, matching MineRL's action families.
enum class Action : int {
    forward = 0,
    turn_left,
    turn_right,
    attack,
    craft_planks,
    craft_sticks,
    craft_table,
    place_table,
    craft_wood_axe,
    craft_stone_axe,
    craft_furnace,
    smelt,
    craft_final,
};
constexpr int kActionCount = 13;
const char* action_name(Action a);

struct Image {
    int channels = 0, height = 0, width = 0;
    std::vector<uint8_t> pixels;  // CHW

    size_t size() const { return pixels.size(); }
    // values in [0,1]
    std::vector<double> to_double() const;
    bool operator==(const Image&) const = default;
};

struct Observation {
    Image image;
    std::vector<int32_t> inventory;  // one slot per chain item
    bool operator==(const Observation&) const = default;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    std::map<std::string, std::string> info;  // e.g. item_acquired
};

enum class Cell : uint8_t { empty = 0, tree, stone, iron, gem, placed_table };

class CraftWorld {
public:
    explicit CraftWorld(EnvConfig config);

    Observation reset(uint64_t episode_seed);
    StepResult step(Action action);

    bool done() const { return done_; }
    int steps_taken() const { return steps_; }
    const EnvConfig& config() const { return config_; }
    const std::vector<int32_t>& inventory() const { return inventory_; }
    double episode_reward() const { return episode_reward_; }

    // World introspection (used by scripted demonstrators and tests).
    Cell cell(int r, int c) const;
    void set_cell(int r, int c, Cell v);  // test hook for partial-observability checks
    int agent_row() const { return agent_r_; }
    int agent_col() const { return agent_c_; }
    int agent_facing() const { return facing_; }  // 0=N 1=E 2=S 3=W
    bool in_view(int r, int c) const;
    Observation observe() const;

    int item_index(const std::string& name) const;  // -1 if absent

private:
    void render(Image& img) const;
    bool try_acquire(int item_idx, double& reward, std::string& acquired);
    void apply_craft(const std::string& item_name, double& reward, std::string& acquired);

    EnvConfig config_;
    std::vector<Cell> grid_;
    std::vector<uint8_t> damage_;
    std::vector<int32_t> inventory_;
    std::vector<uint8_t> rewarded_;
    int agent_r_ = 0, agent_c_ = 0, facing_ = 0;
    int steps_ = 0;
    bool done_ = true;  // reset() required before step()
    double episode_reward_ = 0.0;
};

}  // namespace craftrl::env
