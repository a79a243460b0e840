#include "craftrl/env.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "craftrl/common.hpp"
#include "craftrl/rng.hpp"

namespace craftrl::env {

std::vector<ItemSpec> EnvConfig::default_chain() {
    return {
        {"log", 1.0, "", Acquisition::gather_block},
        {"planks", 2.0, "log", Acquisition::craft_recipe},
        {"sticks", 4.0, "planks", Acquisition::craft_recipe},
        {"table", 4.0, "sticks", Acquisition::craft_recipe},
        {"wood_axe", 8.0, "table", Acquisition::craft_recipe},
        {"stone", 16.0, "wood_axe", Acquisition::gather_block},
        {"furnace", 32.0, "stone", Acquisition::craft_recipe},
        {"iron", 64.0, "furnace", Acquisition::gather_block},
        {"gem", 128.0, "iron", Acquisition::gather_block},
    };
}

void EnvConfig::validate() const {
    if (grid_size < 4 || grid_size > 64) throw ConfigError("grid_size out of range [4,64]");
    if (view_size % 2 == 0) throw ConfigError("view_size must be odd");
    if (view_size > grid_size) throw ConfigError("view_size must be <= grid_size");
    if (view_size < 3) throw ConfigError("view_size must be >= 3");
    if (image_resolution < 8 || image_resolution > 64)
        throw ConfigError("image_resolution out of range [8,64]");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    const auto chain = item_chain.empty() ? default_chain() : item_chain;
    if (chain.empty()) throw ConfigError("item_chain must be non-empty");
    for (size_t i = 0; i < chain.size(); ++i) {
        if (chain[i].reward <= 0.0)
            throw ConfigError("reward for item '" + chain[i].name + "' must be positive");
        if (chain[i].name.empty()) throw ConfigError("item name empty");
        // single chain: item i's prerequisite must be item i-1 (or none for the first)
        if (i == 0) {
            if (!chain[i].prerequisite.empty())
                throw ConfigError("first chain item must have no prerequisite");
        } else if (chain[i].prerequisite != chain[i - 1].name) {
            throw ConfigError("item '" + chain[i].name + "' must have prerequisite '" +
                              chain[i - 1].name + "' (single chain)");
        }
    }
}

uint64_t EnvConfig::hash() const {
    std::ostringstream ss;
    ss << grid_size << '|' << view_size << '|' << image_resolution << '|' << max_steps << '|'
       << seed << '|' << wood_axe_logs_required << '|' << tree_count << '|' << stone_count << '|'
       << iron_count << '|' << gem_count << '|' << min_agent_distance << '|' << min_pair_distance
       << '|' << tree_hits << '|' << stone_hits << '|' << iron_hits << '|' << gem_hits;
    const auto chain = item_chain.empty() ? default_chain() : item_chain;
    for (const auto& it : chain)
        ss << '|' << it.name << ',' << it.reward << ',' << it.prerequisite << ','
           << static_cast<int>(it.acquisition);
    return fnv1a_str(ss.str());
}

EnvConfig env_config_from_ini(const IniFile& ini) {
    EnvConfig c;
    c.grid_size = static_cast<int>(ini.get_int("env", "grid_size", c.grid_size));
    c.view_size = static_cast<int>(ini.get_int("env", "view_size", c.view_size));
    c.image_resolution =
        static_cast<int>(ini.get_int("env", "image_resolution", c.image_resolution));
    c.max_steps = static_cast<int>(ini.get_int("env", "max_steps", c.max_steps));
    c.seed = static_cast<uint64_t>(ini.get_int("env", "seed", static_cast<long>(c.seed)));
    c.wood_axe_logs_required = static_cast<int>(
        ini.get_int("env", "wood_axe_logs_required", c.wood_axe_logs_required));
    c.tree_count = static_cast<int>(ini.get_int("env", "tree_count", c.tree_count));
    c.stone_count = static_cast<int>(ini.get_int("env", "stone_count", c.stone_count));
    c.iron_count = static_cast<int>(ini.get_int("env", "iron_count", c.iron_count));
    c.gem_count = static_cast<int>(ini.get_int("env", "gem_count", c.gem_count));
    c.min_agent_distance =
        static_cast<int>(ini.get_int("env", "min_agent_distance", c.min_agent_distance));
    c.min_pair_distance =
        static_cast<int>(ini.get_int("env", "min_pair_distance", c.min_pair_distance));
    c.tree_hits = static_cast<int>(ini.get_int("env", "tree_hits", c.tree_hits));
    c.stone_hits = static_cast<int>(ini.get_int("env", "stone_hits", c.stone_hits));
    c.iron_hits = static_cast<int>(ini.get_int("env", "iron_hits", c.iron_hits));
    c.gem_hits = static_cast<int>(ini.get_int("env", "gem_hits", c.gem_hits));
    // optional [item.N] sections override the chain
    std::vector<ItemSpec> chain;
    for (int i = 0;; ++i) {
        std::string sec = "item." + std::to_string(i);
        if (!ini.has(sec, "name")) break;
        ItemSpec it;
        it.name = ini.get_str(sec, "name", "");
        it.reward = ini.get_real(sec, "reward", 1.0);
        it.prerequisite = ini.get_str(sec, "prerequisite", "");
        std::string acq = ini.get_str(sec, "acquisition", "craft_recipe");
        if (acq == "gather_block")
            it.acquisition = Acquisition::gather_block;
        else if (acq == "craft_recipe")
            it.acquisition = Acquisition::craft_recipe;
        else
            throw ConfigError("unknown acquisition '" + acq + "' in " + sec);
        chain.push_back(it);
    }
    if (!chain.empty()) c.item_chain = chain;
    c.validate();
    return c;
}

const char* action_name(Action a) {
    static const char* names[kActionCount] = {
        "forward",     "turn_left",      "turn_right",    "attack",       "craft_planks",
        "craft_sticks", "craft_table",   "place_table",   "craft_wood_axe", "craft_stone_axe",
        "craft_furnace", "smelt",        "craft_final"};
    int i = static_cast<int>(a);
    if (i < 0 || i >= kActionCount) return "invalid";
    return names[i];
}

std::vector<double> Image::to_double() const {
    std::vector<double> out(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i] / 255.0;
    return out;
}

namespace {

struct Rgb {
    uint8_t r, g, b;
};

// Flat-shaded palette; one distinct color per cell kind.
Rgb palette(Cell c) {
    switch (c) {
        case Cell::empty: return {120, 120, 120};
        case Cell::tree: return {30, 160, 40};
        case Cell::stone: return {75, 75, 90};
        case Cell::iron: return {195, 120, 50};
        case Cell::gem: return {60, 200, 220};
        case Cell::placed_table: return {155, 95, 30};
    }
    return {0, 0, 0};
}

constexpr Rgb kVoid = {10, 10, 15};

// facing: 0=N 1=E 2=S 3=W; forward/right offsets in view coords -> world deltas
void view_to_world_delta(int facing, int df, int dr, int& dy, int& dx) {
    switch (facing & 3) {
        case 0: dy = -df; dx = dr; break;
        case 1: dy = dr; dx = df; break;
        case 2: dy = df; dx = -dr; break;
        default: dy = -dr; dx = -df; break;
    }
}

int manhattan(int r0, int c0, int r1, int c1) { return std::abs(r0 - r1) + std::abs(c0 - c1); }

}  // namespace

CraftWorld::CraftWorld(EnvConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.item_chain.empty()) config_.item_chain = EnvConfig::default_chain();
}

int CraftWorld::item_index(const std::string& name) const {
    for (size_t i = 0; i < config_.item_chain.size(); ++i)
        if (config_.item_chain[i].name == name) return static_cast<int>(i);
    return -1;
}

Cell CraftWorld::cell(int r, int c) const {
    if (r < 0 || c < 0 || r >= config_.grid_size || c >= config_.grid_size) return Cell::empty;
    return grid_[static_cast<size_t>(r) * config_.grid_size + c];
}

void CraftWorld::set_cell(int r, int c, Cell v) {
    if (r < 0 || c < 0 || r >= config_.grid_size || c >= config_.grid_size) return;
    grid_[static_cast<size_t>(r) * config_.grid_size + c] = v;
}

bool CraftWorld::in_view(int r, int c) const {
    const int half = config_.view_size / 2;
    // view is the square window centered on the agent, rotated with facing;
    // rotation preserves the set of covered cells.
    return std::abs(r - agent_r_) <= half && std::abs(c - agent_c_) <= half;
}

Observation CraftWorld::reset(uint64_t episode_seed) {
    const int n = config_.grid_size;
    grid_.assign(static_cast<size_t>(n) * n, Cell::empty);
    damage_.assign(static_cast<size_t>(n) * n, 0);
    inventory_.assign(config_.item_chain.size(), 0);
    rewarded_.assign(config_.item_chain.size(), 0);
    steps_ = 0;
    episode_reward_ = 0.0;
    done_ = false;

    // Deterministic layout with distance constraints; bounded rejection loop
    // relaxes constraints if a seed is geometrically unlucky.
    struct Want {
        Cell kind;
        int count;
    };
    const std::vector<Want> wants = {{Cell::tree, config_.tree_count},
                                     {Cell::stone, config_.stone_count},
                                     {Cell::iron, config_.iron_count},
                                     {Cell::gem, config_.gem_count}};
    for (int attempt = 0;; ++attempt) {
        Rng rng(derive_seed(config_.seed, "layout", episode_seed * 257 + attempt));
        // relax the agent-distance constraint first; pair spacing keeps
        // resources from enclosing each other, so it goes last
        int min_agent = std::max(0, config_.min_agent_distance - attempt / 8);
        int min_pair = std::max(1, config_.min_pair_distance - attempt / 16);
        agent_r_ = static_cast<int>(rng.uniform_u32(n));
        agent_c_ = static_cast<int>(rng.uniform_u32(n));
        facing_ = static_cast<int>(rng.uniform_u32(4));
        std::vector<std::pair<int, int>> placed;
        bool ok = true;
        std::fill(grid_.begin(), grid_.end(), Cell::empty);
        for (const auto& w : wants) {
            for (int k = 0; k < w.count && ok; ++k) {
                bool found = false;
                for (int tries = 0; tries < 64; ++tries) {
                    int r = static_cast<int>(rng.uniform_u32(n));
                    int c = static_cast<int>(rng.uniform_u32(n));
                    if (r == agent_r_ && c == agent_c_) continue;
                    if (cell(r, c) != Cell::empty) continue;
                    if (manhattan(r, c, agent_r_, agent_c_) < min_agent) continue;
                    bool clash = false;
                    for (auto [pr, pc] : placed)
                        if (manhattan(r, c, pr, pc) < min_pair) clash = true;
                    if (clash) continue;
                    set_cell(r, c, w.kind);
                    placed.emplace_back(r, c);
                    found = true;
                    break;
                }
                if (!found) ok = false;
            }
        }
        if (ok) break;
    }
    return observe();
}

void CraftWorld::render(Image& img) const {
    const int res = config_.image_resolution;
    const int vs = config_.view_size;
    const int half = vs / 2;
    img.channels = 3;
    img.height = res;
    img.width = res;
    img.pixels.assign(static_cast<size_t>(3) * res * res, 0);
    for (int vr = 0; vr < vs; ++vr) {
        // depth cue: rows farther from the agent's row shaded darker
        int dist = std::abs(vr - half);
        int scale = 100 - 8 * dist;
        int py0 = vr * res / vs;
        int py1 = (vr + 1) * res / vs;
        for (int vc = 0; vc < vs; ++vc) {
            int df = half - vr;  // + = in front
            int dr = vc - half;  // + = to the right
            int dy, dx;
            view_to_world_delta(facing_, df, dr, dy, dx);
            int wr = agent_r_ + dy, wc = agent_c_ + dx;
            Rgb base = kVoid;
            if (wr >= 0 && wc >= 0 && wr < config_.grid_size && wc < config_.grid_size)
                base = palette(cell(wr, wc));
            uint8_t shaded[3] = {static_cast<uint8_t>(base.r * scale / 100),
                                 static_cast<uint8_t>(base.g * scale / 100),
                                 static_cast<uint8_t>(base.b * scale / 100)};
            int px0 = vc * res / vs;
            int px1 = (vc + 1) * res / vs;
            for (int ch = 0; ch < 3; ++ch)
                for (int py = py0; py < py1; ++py)
                    for (int px = px0; px < px1; ++px)
                        img.pixels[(static_cast<size_t>(ch) * res + py) * res + px] = shaded[ch];
        }
    }
}

Observation CraftWorld::observe() const {
    Observation obs;
    render(obs.image);
    obs.inventory = inventory_;
    return obs;
}

bool CraftWorld::try_acquire(int item_idx, double& reward, std::string& acquired) {
    const auto& spec = config_.item_chain[item_idx];
    if (!spec.prerequisite.empty()) {
        int pre = item_index(spec.prerequisite);
        if (pre < 0 || inventory_[pre] < 1) return false;
    }
    inventory_[item_idx] += 1;
    acquired = spec.name;
    if (!rewarded_[item_idx]) {
        rewarded_[item_idx] = 1;
        reward = spec.reward;
    }
    return true;
}

void CraftWorld::apply_craft(const std::string& item_name, double& reward, std::string& acquired) {
    int idx = item_index(item_name);
    if (idx < 0) return;
    if (config_.item_chain[idx].acquisition != Acquisition::craft_recipe) return;
    if (item_name == "wood_axe") {
        int log = item_index("log");
        if (log >= 0 && inventory_[log] < config_.wood_axe_logs_required) return;
    }
    try_acquire(idx, reward, acquired);
}

StepResult CraftWorld::step(Action action) {
    if (done_) throw StateError("step() called on a finished episode; call reset()");
    ++steps_;
    double reward = 0.0;
    std::string acquired;

    int dy, dx;
    view_to_world_delta(facing_, 1, 0, dy, dx);  // one cell forward
    const int fr = agent_r_ + dy, fc = agent_c_ + dx;
    const bool front_in = fr >= 0 && fc >= 0 && fr < config_.grid_size && fc < config_.grid_size;

    switch (action) {
        case Action::forward:
            if (front_in && cell(fr, fc) == Cell::empty) {
                agent_r_ = fr;
                agent_c_ = fc;
            }
            break;
        case Action::turn_left:
            facing_ = (facing_ + 3) & 3;
            break;
        case Action::turn_right:
            facing_ = (facing_ + 1) & 3;
            break;
        case Action::attack:
            if (front_in) {
                Cell target = cell(fr, fc);
                const char* gathered = nullptr;
                int hits_needed = 1;
                if (target == Cell::tree) {
                    gathered = "log";
                    hits_needed = config_.tree_hits;
                } else if (target == Cell::stone) {
                    gathered = "stone";
                    hits_needed = config_.stone_hits;
                } else if (target == Cell::iron) {
                    gathered = "iron";
                    hits_needed = config_.iron_hits;
                } else if (target == Cell::gem) {
                    gathered = "gem";
                    hits_needed = config_.gem_hits;
                }
                if (gathered != nullptr) {
                    int idx = item_index(gathered);
                    if (idx >= 0 &&
                        config_.item_chain[idx].acquisition == Acquisition::gather_block) {
                        // prerequisite gates the attack doing anything at all
                        const auto& spec = config_.item_chain[idx];
                        int pre = spec.prerequisite.empty() ? -1 : item_index(spec.prerequisite);
                        if (pre < 0 || inventory_[pre] >= 1) {
                            uint8_t& dmg = damage_[static_cast<size_t>(fr) * config_.grid_size + fc];
                            if (++dmg >= hits_needed) {
                                try_acquire(idx, reward, acquired);
                                set_cell(fr, fc, Cell::empty);
                                dmg = 0;
                            }
                        }
                    }
                }
            }
            break;
        case Action::craft_planks: apply_craft("planks", reward, acquired); break;
        case Action::craft_sticks: apply_craft("sticks", reward, acquired); break;
        case Action::craft_table: apply_craft("table", reward, acquired); break;
        case Action::place_table: {
            int table = item_index("table");
            if (table >= 0 && inventory_[table] >= 1 && front_in && cell(fr, fc) == Cell::empty)
                set_cell(fr, fc, Cell::placed_table);
            break;
        }
        case Action::craft_wood_axe: apply_craft("wood_axe", reward, acquired); break;
        case Action::craft_furnace: apply_craft("furnace", reward, acquired); break;
        case Action::craft_stone_axe:
        case Action::smelt:
        case Action::craft_final:
            // present in the action space for obfuscation realism; no chain effect
            break;
        default:
            throw ValueError("invalid action index " + std::to_string(static_cast<int>(action)));
    }

    episode_reward_ += reward;
    const int last = static_cast<int>(config_.item_chain.size()) - 1;
    if (inventory_[last] >= 1 || steps_ >= config_.max_steps) done_ = true;

    StepResult result;
    result.observation = observe();
    result.reward = reward;
    result.done = done_;
    if (!acquired.empty()) result.info["item_acquired"] = acquired;
    return result;
}

}  // namespace craftrl::env
