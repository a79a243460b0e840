#include "craftrl/structuring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "craftrl/common.hpp"
#include "craftrl/kernels.hpp"
#include "craftrl/rng.hpp"

namespace craftrl::structuring {

namespace K = craftrl::kernels;
using demos::Trajectory;

namespace {

std::vector<std::string> item_names_for(size_t n_items) {
    std::vector<std::string> names;
    auto chain = env::EnvConfig::default_chain();
    if (chain.size() == n_items)
        for (const auto& it : chain) names.push_back(it.name);
    else
        for (size_t i = 0; i < n_items; ++i) names.push_back("item" + std::to_string(i));
    return names;
}

int median_of(std::vector<int> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

std::vector<AtomicSkill> extract_atomic_skills(const Trajectory& t) {
    if (t.size() == 0) throw ValueError("extract_atomic_skills: empty trajectory");
    const auto names = item_names_for(t.observations.front().inventory.size());
    std::vector<AtomicSkill> skills;
    size_t start = 0;
    for (size_t i = 0; i < t.size(); ++i) {
        if (t.rewards[i] != 0.0) {
            AtomicSkill s;
            s.begin = start;
            s.end = i + 1;
            s.reward_delay = static_cast<int>(s.end - s.begin);
            // the rewarded item is the inventory slot that first became positive
            const auto& before = t.observations[i].inventory;
            const auto& after = t.observations[i + 1].inventory;
            s.item = "reward@" + std::to_string(i);
            for (size_t j = 0; j < names.size(); ++j)
                if (after[j] > before[j] && before[j] == 0) {
                    s.item = names[j];
                    break;
                }
            skills.push_back(s);
            start = i + 1;
        }
    }
    if (skills.empty()) return skills;
    // trailing rewardless transitions: keep for successful trajectories,
    // drop for failed ones
    if (start < t.size() && t.success) skills.back().end = t.size();
    return skills;
}

StructuredDemos merge_to_stages(const std::vector<Trajectory>& trajs, int delay_threshold) {
    if (trajs.empty()) throw ValueError("merge_to_stages: no demonstrations");

    std::vector<std::vector<AtomicSkill>> all_skills(trajs.size());
    std::map<std::vector<std::string>, int> order_count;
    std::vector<std::vector<std::string>> orders(trajs.size());
    for (size_t ti = 0; ti < trajs.size(); ++ti) {
        all_skills[ti] = extract_atomic_skills(trajs[ti]);
        for (const auto& s : all_skills[ti]) orders[ti].push_back(s.item);
        order_count[orders[ti]] += 1;
    }
    // the modal order must describe complete trajectories; prefer the longest
    // most common order so failed (prefix) demos do not define the stages
    std::vector<std::string> modal;
    int best = -1;
    for (const auto& [order, count] : order_count) {
        int score = count * 1000 + static_cast<int>(order.size());
        if (score > best || (score == best && order < modal)) {
            best = score;
            modal = order;
        }
    }

    StructuredDemos out;
    out.item_order = modal;

    // per-item reward delays across the demo set (skills aligned with the
    // modal order, up to each trajectory's first deviation)
    std::map<std::string, std::vector<int>> delays;
    std::vector<size_t> usable_prefix(trajs.size(), 0);
    for (size_t ti = 0; ti < trajs.size(); ++ti) {
        const auto& order = orders[ti];
        size_t k = 0;
        while (k < order.size() && k < modal.size() && order[k] == modal[k]) ++k;
        usable_prefix[ti] = k;
        if (k < order.size()) out.truncated.push_back(ti);
        for (size_t s = 0; s < k; ++s) delays[modal[s]].push_back(all_skills[ti][s].reward_delay);
    }

    // group adjacent short-delay items into stages
    std::vector<int> medians;
    for (const auto& item : modal) medians.push_back(median_of(delays[item]));
    std::vector<std::pair<size_t, size_t>> groups;  // [first_item, last_item)
    size_t i = 0;
    while (i < modal.size()) {
        if (medians[i] < delay_threshold) {
            size_t j = i;
            while (j < modal.size() && medians[j] < delay_threshold) ++j;
            groups.emplace_back(i, j);
            i = j;
        } else {
            groups.emplace_back(i, i + 1);
            ++i;
        }
    }

    for (size_t g = 0; g < groups.size(); ++g) {
        StageSpec stage;
        stage.stage_id = static_cast<int>(g);
        for (size_t s = groups[g].first; s < groups[g].second; ++s)
            stage.items.push_back(modal[s]);
        std::vector<int> lengths;
        for (size_t ti = 0; ti < trajs.size(); ++ti) {
            if (usable_prefix[ti] < groups[g].second) continue;  // stage incomplete
            StageSlice slice;
            slice.traj = ti;
            slice.begin = all_skills[ti][groups[g].first].begin;
            slice.end = all_skills[ti][groups[g].second - 1].end;
            stage.demos.push_back(slice);
            lengths.push_back(static_cast<int>(slice.end - slice.begin));
        }
        stage.median_delay = median_of(lengths);
        stage.kind = stage.median_delay > delay_threshold ? StageKind::gather : StageKind::craft;
        out.stages.push_back(std::move(stage));
    }
    return out;
}

void extract_subgoals(StructuredDemos& structured, const std::vector<Trajectory>& trajs) {
    for (auto& stage : structured.stages) {
        if (stage.demos.empty())
            throw ConfigError("stage " + std::to_string(stage.stage_id) + " has no demos");
        std::map<std::vector<int32_t>, int> counts;
        for (const auto& slice : stage.demos)
            counts[trajs[slice.traj].observations[slice.end].inventory] += 1;
        // modal vector; ties toward the lexicographically smallest (std::map
        // iterates in lexicographic order, so the first max wins)
        int best = -1;
        for (const auto& [inv, count] : counts)
            if (count > best) {
                best = count;
                stage.subgoal_inventory = inv;
            }
    }
}

ActionClusterSet kmeans_cluster(const std::vector<std::vector<double>>& points, int k,
                                uint64_t seed) {
    if (k < 1) throw ClusteringError("k must be >= 1");
    if (points.empty()) throw ClusteringError("no points to cluster");
    const size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw ClusteringError("inconsistent point dimensions");

    // distinct count
    {
        auto sorted = points;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        if (static_cast<int>(sorted.size()) < k)
            throw ClusteringError("fewer distinct points (" + std::to_string(sorted.size()) +
                                  ") than clusters (" + std::to_string(k) + ")");
    }

    Rng rng(derive_seed(seed, "kmeans"));
    const size_t n = points.size();
    auto sq = [&](const std::vector<double>& a, const std::vector<double>& b) {
        return K::active().sqdist(a.data(), b.data(), dim);
    };

    // k-means++ seeding
    ActionClusterSet out;
    out.k = k;
    out.centroids.push_back(points[rng.index(n)]);
    std::vector<double> d2(n);
    while (static_cast<int>(out.centroids.size()) < k) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : out.centroids) best = std::min(best, sq(points[i], c));
            d2[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total <= 0) {
            pick = rng.index(n);
        } else {
            double u = rng.uniform() * total;
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc || i + 1 == n) {
                    pick = i;
                    break;
                }
            }
        }
        out.centroids.push_back(points[pick]);
    }

    // Lloyd iterations to assignment fixpoint
    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (size_t i = 0; i < n; ++i) {
            int best_c = 0;
            double best_d = sq(points[i], out.centroids[0]);
            for (int c = 1; c < k; ++c) {
                double d = sq(points[i], out.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best_c = c;
                }
            }
            if (assign[i] != best_c) {
                assign[i] = best_c;
                changed = true;
            }
            inertia += best_d;
        }
        out.inertia = inertia;
        out.inertia_history.push_back(inertia);
        if (!changed) break;

        // recompute means
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<int> counts(k, 0);
        for (size_t i = 0; i < n; ++i) {
            K::active().axpy(sums[assign[i]].data(), points[i].data(), 1.0, dim);
            counts[assign[i]] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                K::active().scale(out.centroids[c].data(), sums[c].data(), 1.0 / counts[c], dim);
            } else {
                // re-seed the empty cluster to the point farthest from its
                // current centroid
                size_t far_i = 0;
                double far_d = -1.0;
                for (size_t i = 0; i < n; ++i) {
                    double d = sq(points[i], out.centroids[assign[i]]);
                    if (d > far_d) {
                        far_d = d;
                        far_i = i;
                    }
                }
                out.centroids[c] = points[far_i];
            }
        }
    }
    return out;
}

int assign_action(const std::vector<double>& v, const ActionClusterSet& clusters) {
    if (clusters.centroids.empty()) throw ValueError("assign_action: clusters not fitted");
    if (v.size() != clusters.centroids.front().size())
        throw ValueError("assign_action: dimension mismatch");
    int best = 0;
    double best_d = K::active().sqdist(v.data(), clusters.centroids[0].data(), v.size());
    for (int c = 1; c < clusters.k; ++c) {
        double d = K::active().sqdist(v.data(), clusters.centroids[c].data(), v.size());
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::vector<std::vector<double>> stage_actions(const StageSpec& stage,
                                               const std::vector<Trajectory>& trajs) {
    std::vector<std::vector<double>> out;
    for (const auto& slice : stage.demos)
        for (size_t i = slice.begin; i < slice.end; ++i)
            out.push_back(trajs[slice.traj].actions[i]);
    return out;
}

void cluster_stage(StageSpec& stage, const std::vector<Trajectory>& trajs, int k, uint64_t seed) {
    auto actions = stage_actions(stage, trajs);
    if (actions.empty())
        throw ClusteringError("stage " + std::to_string(stage.stage_id) + " has no actions");
    auto sorted = actions;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    stage.configured_k = k;
    int effective_k = std::min<int>(k, static_cast<int>(sorted.size()));
    stage.clusters = kmeans_cluster(actions, effective_k, seed);
}

bool subgoal_reached(const std::vector<int32_t>& inventory,
                     const std::vector<int32_t>& subgoal_inventory) {
    if (inventory.size() != subgoal_inventory.size()) return false;
    for (size_t i = 0; i < inventory.size(); ++i)
        if (inventory[i] < subgoal_inventory[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// sidecar

using nlohmann::json;

void save_structured(const StructuredDemos& structured, const std::string& path) {
    json j;
    j["format"] = "craftrl-stages-v1";
    j["item_order"] = structured.item_order;
    j["truncated"] = structured.truncated;
    j["stages"] = json::array();
    for (const auto& s : structured.stages) {
        json js;
        js["stage_id"] = s.stage_id;
        js["kind"] = s.kind == StageKind::gather ? "gather" : "craft";
        js["items"] = s.items;
        js["median_delay"] = s.median_delay;
        js["subgoal_inventory"] = s.subgoal_inventory;
        js["configured_k"] = s.configured_k;
        js["slices"] = json::array();
        for (const auto& sl : s.demos)
            js["slices"].push_back({{"traj", sl.traj}, {"begin", sl.begin}, {"end", sl.end}});
        js["clusters"] = {{"k", s.clusters.k},
                          {"inertia", s.clusters.inertia},
                          {"centroids", s.clusters.centroids}};
        j["stages"].push_back(std::move(js));
    }
    std::ofstream f(path);
    if (!f) throw ValueError("cannot write stage sidecar: " + path);
    f << j.dump(1) << "\n";
}

StructuredDemos load_structured(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValueError("cannot open stage sidecar: " + path);
    json j = json::parse(f, nullptr, true);
    if (j.value("format", "") != "craftrl-stages-v1")
        throw FormatError("unknown stage sidecar format", -1);
    StructuredDemos out;
    out.item_order = j["item_order"].get<std::vector<std::string>>();
    out.truncated = j["truncated"].get<std::vector<size_t>>();
    for (const auto& js : j["stages"]) {
        StageSpec s;
        s.stage_id = js["stage_id"].get<int>();
        s.kind = js["kind"].get<std::string>() == "gather" ? StageKind::gather : StageKind::craft;
        s.items = js["items"].get<std::vector<std::string>>();
        s.median_delay = js["median_delay"].get<int>();
        s.subgoal_inventory = js["subgoal_inventory"].get<std::vector<int32_t>>();
        s.configured_k = js["configured_k"].get<int>();
        for (const auto& sl : js["slices"]) {
            StageSlice slice;
            slice.traj = sl["traj"].get<size_t>();
            slice.begin = sl["begin"].get<size_t>();
            slice.end = sl["end"].get<size_t>();
            s.demos.push_back(slice);
        }
        s.clusters.k = js["clusters"]["k"].get<int>();
        s.clusters.inertia = js["clusters"]["inertia"].get<double>();
        s.clusters.centroids =
            js["clusters"]["centroids"].get<std::vector<std::vector<double>>>();
        out.stages.push_back(std::move(s));
    }
    return out;
}

}  // namespace craftrl::structuring
