#include "craftrl/demos.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "craftrl/common.hpp"
#include "craftrl/kernels.hpp"

namespace craftrl::demos {

namespace K = craftrl::kernels;
using env::Action;
using env::Cell;
using env::CraftWorld;
using env::EnvConfig;

// ---------------------------------------------------------------------------
// Obfuscator

Obfuscator::Obfuscator(uint64_t seed, int dim, double noise_scale)
    : seed_(seed), dim_(dim), noise_scale_(noise_scale) {
    if (dim < env::kActionCount) throw ConfigError("obfuscator dim must be >= action count");
    if (noise_scale < 0) throw ConfigError("obfuscator noise_scale must be >= 0");
    // Q = product of random Givens rotations applied to the identity.
    q_.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) q_[static_cast<size_t>(i) * dim + i] = 1.0;
    Rng rng(derive_seed(seed, "obfuscator"));
    const int rounds = 2 * dim * dim;
    for (int r = 0; r < rounds; ++r) {
        int i = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(dim)));
        int j = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(dim - 1)));
        if (j >= i) ++j;
        double theta = rng.uniform(0.0, 2.0 * M_PI);
        double c = std::cos(theta), s = std::sin(theta);
        double* row_i = q_.data() + static_cast<size_t>(i) * dim;
        double* row_j = q_.data() + static_cast<size_t>(j) * dim;
        for (int k = 0; k < dim; ++k) {
            double a = row_i[k], b = row_j[k];
            row_i[k] = c * a - s * b;
            row_j[k] = s * a + c * b;
        }
    }
}

std::vector<double> Obfuscator::obfuscate(Action a, Rng& rng) const {
    std::vector<double> x(dim_, 0.0);
    x[static_cast<size_t>(a)] = 1.0;
    if (noise_scale_ > 0)
        for (auto& v : x) v += noise_scale_ * rng.gaussian();
    std::vector<double> out(dim_);
    for (int i = 0; i < dim_; ++i)
        out[i] = K::active().dot(q_.data() + static_cast<size_t>(i) * dim_, x.data(), dim_);
    return out;
}

Action Obfuscator::deobfuscate(const std::vector<double>& v) const {
    if (static_cast<int>(v.size()) != dim_)
        throw ValueError("deobfuscate: dimension mismatch");
    for (double x : v)
        if (!std::isfinite(x)) throw ValueError("deobfuscate: non-finite input vector");
    // x = Q^T v; argmax over the action coordinates
    int best = 0;
    double best_v = -1e300;
    for (int i = 0; i < env::kActionCount; ++i) {
        double coord = 0.0;
        for (int r = 0; r < dim_; ++r) coord += q_[static_cast<size_t>(r) * dim_ + i] * v[r];
        if (coord > best_v) {
            best_v = coord;
            best = i;
        }
    }
    return static_cast<Action>(best);
}

double Obfuscator::orthogonality_error() const {
    double worst = 0.0;
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) {
            double dot = K::active().dot(q_.data() + static_cast<size_t>(i) * dim_,
                                         q_.data() + static_cast<size_t>(j) * dim_, dim_);
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

// ---------------------------------------------------------------------------

Transition Trajectory::transition(size_t i) const {
    Transition t;
    t.obs = observations[i];
    t.action = actions[i];
    t.reward = rewards[i];
    t.next_obs = observations[i + 1];
    t.done = (i + 1 == actions.size());
    return t;
}

// ---------------------------------------------------------------------------
// ScriptedDemonstrator

ScriptedDemonstrator::ScriptedDemonstrator(DemoMode mode, uint64_t seed)
    : mode_(mode), rng_(seed) {}

void ScriptedDemonstrator::begin_episode(const CraftWorld& world) {
    grid_ = world.config().grid_size;
    memory_.assign(static_cast<size_t>(grid_) * grid_, -1);
    // quadrant sweep waypoints in a seeded rotation
    int lo = grid_ / 4, hi = grid_ - 1 - grid_ / 4;
    std::vector<int> pts = {lo * grid_ + lo, lo * grid_ + hi, hi * grid_ + hi, hi * grid_ + lo};
    size_t start = rng_.index(pts.size());
    waypoints_.clear();
    for (size_t i = 0; i < pts.size(); ++i) waypoints_.push_back(pts[(start + i) % pts.size()]);
    waypoint_i_ = 0;
    update_memory(world);
}

void ScriptedDemonstrator::update_memory(const CraftWorld& world) {
    for (int r = 0; r < grid_; ++r)
        for (int c = 0; c < grid_; ++c)
            if (world.in_view(r, c))
                memory_[static_cast<size_t>(r) * grid_ + c] = static_cast<int>(world.cell(r, c));
}

int ScriptedDemonstrator::find_known(Cell kind, const CraftWorld& world) const {
    // nearest remembered cell of `kind` by Manhattan distance
    int best = -1, best_d = 1 << 20;
    for (int r = 0; r < grid_; ++r)
        for (int c = 0; c < grid_; ++c)
            if (memory_[static_cast<size_t>(r) * grid_ + c] == static_cast<int>(kind)) {
                int d = std::abs(r - world.agent_row()) + std::abs(c - world.agent_col());
                if (d < best_d) {
                    best_d = d;
                    best = r * grid_ + c;
                }
            }
    return best;
}

// BFS toward goal_cell over known-empty or unknown cells. face_only: stop
// adjacent to the goal and face it (for attacks); otherwise walk onto it.
Action ScriptedDemonstrator::go_to(int goal_cell, bool face_only, const CraftWorld& world,
                                   bool& arrived, bool& ok) {
    arrived = false;
    ok = true;
    const int dys[4] = {-1, 0, 1, 0};
    const int dxs[4] = {0, 1, 0, -1};
    const int n = grid_;
    const int ar = world.agent_row(), ac = world.agent_col();
    const int gr = goal_cell / n, gc = goal_cell % n;

    auto turn_toward = [&](int want) {
        int diff = (want - world.agent_facing() + 4) & 3;
        return diff == 3 ? Action::turn_left : Action::turn_right;
    };

    if (face_only) {
        int d = std::abs(gr - ar) + std::abs(gc - ac);
        if (d == 1) {
            int want = gr < ar ? 0 : gr > ar ? 2 : gc > ac ? 1 : 3;
            if (world.agent_facing() == want) {
                arrived = true;
                return Action::attack;  // caller overrides; placeholder
            }
            return turn_toward(want);
        }
    } else if (gr == ar && gc == ac) {
        arrived = true;
        return Action::forward;  // placeholder
    }

    auto walkable = [&](int r, int c) {
        int m = memory_[static_cast<size_t>(r) * n + c];
        return m == -1 || m == static_cast<int>(Cell::empty);
    };

    std::vector<int> prev(static_cast<size_t>(n) * n, -2);
    std::vector<int> queue;
    prev[ar * n + ac] = -1;
    queue.push_back(ar * n + ac);
    int reached = -1;
    for (size_t qi = 0; qi < queue.size() && reached < 0; ++qi) {
        int cur = queue[qi];
        int r = cur / n, c = cur % n;
        for (int f = 0; f < 4; ++f) {
            int rr = r + dys[f], cc = c + dxs[f];
            if (rr < 0 || cc < 0 || rr >= n || cc >= n) continue;
            int cell = rr * n + cc;
            if (face_only && cell == goal_cell) {
                reached = cur;
                break;
            }
            if (prev[cell] != -2 || !walkable(rr, cc)) continue;
            prev[cell] = cur;
            queue.push_back(cell);
            if (!face_only && cell == goal_cell) {
                reached = cell;
                break;
            }
        }
    }
    if (reached < 0) {
        ok = false;
        return Action::turn_right;  // no path in current memory; caller re-targets
    }

    // walk the path back to the first step
    int step = reached;
    if (face_only && reached == ar * n + ac) {
        // adjacent already handled above; being here means goal is adjacent
        // but we still need to face it
        int want = gr < ar ? 0 : gr > ar ? 2 : gc > ac ? 1 : 3;
        if (world.agent_facing() == want) {
            arrived = true;
            return Action::attack;
        }
        return turn_toward(want);
    }
    while (prev[step] != -1 && prev[step] != ar * n + ac) step = prev[step];
    if (prev[step] == -1) {
        // reached == start
        step = reached;
    }
    int sr = step / n, sc = step % n;
    int want = sr < ar ? 0 : sr > ar ? 2 : sc > ac ? 1 : 3;
    if (world.agent_facing() != want) return turn_toward(want);
    return Action::forward;
}

Action ScriptedDemonstrator::act(const CraftWorld& world) {
    update_memory(world);
    const auto& inv = world.inventory();
    auto idx = [&](const char* name) { return world.item_index(name); };
    auto have = [&](const char* name) {
        int i = idx(name);
        return i >= 0 ? inv[i] : 0;
    };

    // next objective from the chain state
    Cell gather_kind = Cell::empty;
    Action craft = Action::forward;
    bool crafting = false;
    const int axe_logs = world.config().wood_axe_logs_required;
    if (have("log") < 1) {
        gather_kind = Cell::tree;
    } else if (mode_ == DemoMode::alternative && have("planks") < 1 && have("log") < 2) {
        gather_kind = Cell::tree;  // alternative order: stock an extra log first
    } else if (have("planks") < 1) {
        crafting = true;
        craft = Action::craft_planks;
    } else if (have("sticks") < 1) {
        crafting = true;
        craft = Action::craft_sticks;
    } else if (have("table") < 1) {
        crafting = true;
        craft = Action::craft_table;
    } else if (have("wood_axe") < 1) {
        if (have("log") < axe_logs)
            gather_kind = Cell::tree;
        else {
            crafting = true;
            craft = Action::craft_wood_axe;
        }
    } else if (have("stone") < 1) {
        gather_kind = Cell::stone;
    } else if (have("furnace") < 1) {
        crafting = true;
        craft = Action::craft_furnace;
    } else if (have("iron") < 1) {
        gather_kind = Cell::iron;
    } else {
        gather_kind = Cell::gem;
    }

    if (crafting) return craft;

    int target = find_known(gather_kind, world);
    if (target >= 0) {
        bool arrived = false, ok = true;
        Action a = go_to(target, true, world, arrived, ok);
        if (ok) return arrived ? Action::attack : a;
        // unreachable target: forget it and fall through to exploration
        memory_[target] = static_cast<int>(Cell::empty);
    }

    // explore waypoints until the target kind enters the view
    for (size_t tries = 0; tries < waypoints_.size(); ++tries) {
        int wp = waypoints_[waypoint_i_ % waypoints_.size()];
        int wr = wp / grid_, wc = wp % grid_;
        bool at_wp = world.agent_row() == wr && world.agent_col() == wc;
        int m = memory_[static_cast<size_t>(wr) * grid_ + wc];
        bool blocked = m != -1 && m != static_cast<int>(Cell::empty);
        if (at_wp || blocked) {
            ++waypoint_i_;
            continue;
        }
        bool arrived = false, ok = true;
        Action a = go_to(wp, false, world, arrived, ok);
        if (arrived || !ok) {
            ++waypoint_i_;
            continue;
        }
        return a;
    }
    return Action::turn_right;
}

// ---------------------------------------------------------------------------
// generate_demos

namespace {

Trajectory run_episode(const EnvConfig& env_cfg, const DemoGenConfig& cfg, const Obfuscator& obf,
                       uint64_t episode_index) {
    Rng rng(derive_seed(cfg.seed, "demo", episode_index));
    // pick a mode from the mix
    double u = rng.uniform();
    size_t mode = 0;
    double acc = 0.0;
    for (size_t m = 0; m < cfg.mode_mix.size(); ++m) {
        acc += cfg.mode_mix[m];
        if (u < acc) {
            mode = m;
            break;
        }
        if (m + 1 == cfg.mode_mix.size()) mode = m;
    }

    CraftWorld world(env_cfg);
    Trajectory traj;
    traj.observations.push_back(world.reset(derive_seed(cfg.seed, "episode", episode_index)));

    ScriptedDemonstrator demo(static_cast<DemoMode>(mode),
                              derive_seed(cfg.seed, "demo_policy", episode_index));
    demo.begin_episode(world);

    while (!world.done()) {
        Action a = demo.act(world);
        if (cfg.noise > 0 && rng.uniform() < cfg.noise)
            a = static_cast<Action>(rng.uniform_u32(env::kActionCount));
        auto res = world.step(a);
        traj.actions.push_back(obf.obfuscate(a, rng));
        traj.rewards.push_back(res.reward);
        traj.observations.push_back(res.observation);
        traj.total_reward += res.reward;
    }
    const auto& chain = world.config().item_chain;
    traj.success = world.inventory()[chain.size() - 1] >= 1;
    traj.meta["seed"] = std::to_string(episode_index);
    traj.meta["mode"] = mode == 0 ? "canonical" : "alternative";
    return traj;
}

}  // namespace

std::vector<Trajectory> generate_demos(const EnvConfig& env_cfg, const DemoGenConfig& cfg,
                                       const Obfuscator& obf) {
    if (cfg.n < 1) throw ValueError("generate_demos: n must be >= 1");
    double mix_total = 0.0;
    for (double m : cfg.mode_mix) {
        if (m < 0) throw ValueError("generate_demos: mode_mix entries must be >= 0");
        mix_total += m;
    }
    if (std::abs(mix_total - 1.0) > 1e-9)
        throw ValueError("generate_demos: mode_mix must sum to 1");
    env_cfg.validate();

    std::vector<Trajectory> out(static_cast<size_t>(cfg.n));
    const int workers = std::max(1, cfg.workers);
    if (workers == 1) {
        for (int i = 0; i < cfg.n; ++i)
            out[i] = run_episode(env_cfg, cfg, obf, static_cast<uint64_t>(i));
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                for (;;) {
                    int i = next.fetch_add(1);
                    if (i >= cfg.n) return;
                    out[i] = run_episode(env_cfg, cfg, obf, static_cast<uint64_t>(i));
                }
            });
        for (auto& t : pool) t.join();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Demo files

namespace {

constexpr uint32_t kDemoMagic = 0x4d445743;  // "CWDM"
constexpr uint32_t kDemoVersion = 1;

template <typename T>
void wr(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T rd(std::ifstream& f, long record) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw FormatError("truncated field", record);
    return v;
}

void wr_str(std::ofstream& f, const std::string& s) {
    wr<uint32_t>(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string rd_str(std::ifstream& f, long record) {
    uint32_t n = rd<uint32_t>(f, record);
    if (n > (1u << 24)) throw FormatError("implausible string length", record);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw FormatError("truncated string", record);
    return s;
}

}  // namespace

void save_demos(const std::vector<Trajectory>& demos, const std::string& path,
                const EnvConfig& env_cfg, const Obfuscator& obf) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot open demo file for writing: " + path);
    wr<uint32_t>(f, kDemoMagic);
    wr<uint32_t>(f, kDemoVersion);
    wr<uint64_t>(f, env_cfg.hash());
    wr<uint64_t>(f, obf.seed());
    wr<uint32_t>(f, static_cast<uint32_t>(obf.dim()));
    const auto chain = env_cfg.item_chain.empty() ? EnvConfig::default_chain() : env_cfg.item_chain;
    wr<uint32_t>(f, static_cast<uint32_t>(chain.size()));
    for (const auto& it : chain) wr_str(f, it.name);
    wr<uint32_t>(f, static_cast<uint32_t>(demos.size()));

    for (const auto& traj : demos) {
        // serialize record into a buffer so it can be length-prefixed
        std::ostringstream rec;
        auto wv = [&rec](const void* p, size_t n) {
            rec.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        };
        uint32_t steps = static_cast<uint32_t>(traj.size());
        wv(&steps, 4);
        uint8_t success = traj.success ? 1 : 0;
        wv(&success, 1);
        wv(&traj.total_reward, 8);
        uint32_t meta_n = static_cast<uint32_t>(traj.meta.size());
        wv(&meta_n, 4);
        for (const auto& [k, v] : traj.meta) {
            uint32_t kl = static_cast<uint32_t>(k.size()), vl = static_cast<uint32_t>(v.size());
            wv(&kl, 4);
            wv(k.data(), k.size());
            wv(&vl, 4);
            wv(v.data(), v.size());
        }
        // observation dims (constant within a trajectory)
        const auto& img0 = traj.observations.front().image;
        uint32_t ch = img0.channels, hh = img0.height, ww = img0.width,
                 items = static_cast<uint32_t>(traj.observations.front().inventory.size());
        wv(&ch, 4);
        wv(&hh, 4);
        wv(&ww, 4);
        wv(&items, 4);
        for (const auto& obs : traj.observations) {
            wv(obs.inventory.data(), obs.inventory.size() * 4);
            wv(obs.image.pixels.data(), obs.image.pixels.size());
        }
        for (const auto& a : traj.actions) wv(a.data(), a.size() * 8);
        wv(traj.rewards.data(), traj.rewards.size() * 8);

        std::string bytes = rec.str();
        wr<uint64_t>(f, static_cast<uint64_t>(bytes.size()));
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
}

LoadedDemos load_demos(const std::string& path, const EnvConfig* expect) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot open demo file: " + path);
    if (rd<uint32_t>(f, -1) != kDemoMagic) throw FormatError("bad demo magic", -1);
    uint32_t version = rd<uint32_t>(f, -1);
    if (version != kDemoVersion)
        throw FormatError("unsupported demo format version " + std::to_string(version), -1);

    LoadedDemos out;
    out.header.env_config_hash = rd<uint64_t>(f, -1);
    out.header.obfuscator_seed = rd<uint64_t>(f, -1);
    out.header.action_dim = rd<uint32_t>(f, -1);
    uint32_t item_n = rd<uint32_t>(f, -1);
    for (uint32_t i = 0; i < item_n; ++i) out.header.item_names.push_back(rd_str(f, -1));
    if (expect != nullptr && expect->hash() != out.header.env_config_hash)
        out.warnings.push_back("env config hash mismatch: file " +
                               std::to_string(out.header.env_config_hash) + " vs expected " +
                               std::to_string(expect->hash()));

    uint32_t n_traj = rd<uint32_t>(f, -1);
    for (uint32_t t = 0; t < n_traj; ++t) {
        const long record = static_cast<long>(t);
        uint64_t bytes = rd<uint64_t>(f, record);
        std::string buf(bytes, '\0');
        f.read(buf.data(), static_cast<std::streamsize>(bytes));
        if (!f) throw FormatError("truncated trajectory record", record);
        size_t pos = 0;
        auto rv = [&](void* p, size_t n) {
            if (pos + n > buf.size()) throw FormatError("corrupt trajectory record", record);
            std::memcpy(p, buf.data() + pos, n);
            pos += n;
        };
        Trajectory traj;
        uint32_t steps;
        rv(&steps, 4);
        uint8_t success;
        rv(&success, 1);
        traj.success = success != 0;
        rv(&traj.total_reward, 8);
        uint32_t meta_n;
        rv(&meta_n, 4);
        for (uint32_t i = 0; i < meta_n; ++i) {
            uint32_t kl;
            rv(&kl, 4);
            std::string k(kl, '\0');
            rv(k.data(), kl);
            uint32_t vl;
            rv(&vl, 4);
            std::string v(vl, '\0');
            rv(v.data(), vl);
            traj.meta[k] = v;
        }
        uint32_t ch, hh, ww, items;
        rv(&ch, 4);
        rv(&hh, 4);
        rv(&ww, 4);
        rv(&items, 4);
        traj.observations.resize(steps + 1);
        for (auto& obs : traj.observations) {
            obs.inventory.resize(items);
            rv(obs.inventory.data(), items * 4);
            obs.image.channels = static_cast<int>(ch);
            obs.image.height = static_cast<int>(hh);
            obs.image.width = static_cast<int>(ww);
            obs.image.pixels.resize(static_cast<size_t>(ch) * hh * ww);
            rv(obs.image.pixels.data(), obs.image.pixels.size());
        }
        traj.actions.assign(steps, std::vector<double>(out.header.action_dim));
        for (auto& a : traj.actions) rv(a.data(), a.size() * 8);
        traj.rewards.resize(steps);
        rv(traj.rewards.data(), steps * 8);
        if (pos != buf.size()) throw FormatError("trailing bytes in trajectory record", record);
        out.demos.push_back(std::move(traj));
    }
    return out;
}

}  // namespace craftrl::demos
