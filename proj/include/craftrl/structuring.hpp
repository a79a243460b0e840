#pragma once

// Turning unstructured demonstrations into per-stage datasets: split each
// trajectory into atomic skills at its non-zero-reward steps, merge adjacent
// short-delay skills into stages (dataset-global, by median delay per item),
// extract modal end-state inventories as sub-goals, and cluster the stage's
// obfuscated actions with k-means.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "craftrl/demos.hpp"

namespace craftrl::structuring {

struct AtomicSkill {
    size_t begin = 0;  // transition index range [begin, end); reward at end-1
    size_t end = 0;
    int reward_delay = 0;  // end - begin
    std::string item;
};

std::vector<AtomicSkill> extract_atomic_skills(const demos::Trajectory& t);

enum class StageKind : int { gather = 0, craft = 1 };

struct StageSlice {
    size_t traj = 0;
    size_t begin = 0;
    size_t end = 0;
};

struct ActionClusterSet {
    int k = 0;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

struct StageSpec {
    int stage_id = 0;
    StageKind kind = StageKind::gather;
    std::vector<std::string> items;  // chain items merged into this stage
    int median_delay = 0;            // median slice length across demos
    std::vector<StageSlice> demos;
    std::vector<int32_t> subgoal_inventory;
    ActionClusterSet clusters;
    int configured_k = 0;  // requested cluster count before distinct-clamp
};

struct StructuredDemos {
    std::vector<StageSpec> stages;
    std::vector<std::string> item_order;  // modal acquisition order
    std::vector<size_t> truncated;        // trajectories cut at an order deviation
};

// Merge skills into stages. delay_threshold compares against the median
// reward delay of each item across the demo set.
StructuredDemos merge_to_stages(const std::vector<demos::Trajectory>& trajs, int delay_threshold);

// Fill subgoal_inventory for every stage (modal end-state inventory; ties
// broken toward the lexicographically smallest vector).
void extract_subgoals(StructuredDemos& structured, const std::vector<demos::Trajectory>& trajs);

// Lloyd's algorithm with k-means++ seeding; fixpoint or 300 iterations;
// empty clusters re-seeded to the point farthest from its centroid.
ActionClusterSet kmeans_cluster(const std::vector<std::vector<double>>& points, int k,
                                uint64_t seed);

// Index of the nearest centroid (Euclidean; ties to the lowest index).
int assign_action(const std::vector<double>& v, const ActionClusterSet& clusters);

// All obfuscated actions appearing in a stage's demo slices.
std::vector<std::vector<double>> stage_actions(const StageSpec& stage,
                                               const std::vector<demos::Trajectory>& trajs);

// Cluster a stage's actions with k clamped to the number of distinct action
// vectors (configured_k records the request).
void cluster_stage(StageSpec& stage, const std::vector<demos::Trajectory>& trajs, int k,
                   uint64_t seed);

// Does an inventory meet a stage's sub-goal (component-wise >=)?
bool subgoal_reached(const std::vector<int32_t>& inventory,
                     const std::vector<int32_t>& subgoal_inventory);

// Stage-index sidecar (JSON): boundaries per trajectory, subgoal signatures,
// centroid tables, and modal-pattern statistics appended later by ebc.
void save_structured(const StructuredDemos& structured, const std::string& path);
StructuredDemos load_structured(const std::string& path);

}  // namespace craftrl::structuring
