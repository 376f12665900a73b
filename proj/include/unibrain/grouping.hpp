// Variable-length signals are mapped to a fixed (G x K) layout: G key voxels
// are picked uniformly along the 1-D signal, and each key aggregates its K
// nearest voxels by index distance (ties break toward the lower index).
#pragma once

#include "unibrain/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <vector>

namespace unibrain {

struct GroupingPlan {
  int subject_id = -1;
  int voxel_count = 0;  // D_i the plan was built for
  std::vector<int> key_indices;               // length G, strictly increasing
  std::vector<std::vector<int>> member_indices;  // G rows of K sorted ascending
};

inline std::vector<int> select_key_voxels(int voxel_count, int groups) {
  if (groups < 1 || voxel_count < groups)
    throw ConfigError("select_key_voxels: need D_i >= G >= 1, got D_i=" +
                      std::to_string(voxel_count) + " G=" + std::to_string(groups));
  std::vector<int> keys(static_cast<size_t>(groups));
  for (int g = 0; g < groups; ++g)
    keys[static_cast<size_t>(g)] =
        static_cast<int>(static_cast<int64_t>(g) * voxel_count / groups);
  return keys;
}

// For each key, the window of K contiguous voxels nearest to it. A contiguous
// window always realizes the K smallest |index - key| distances on a 1-D axis;
// the lower-index tie break fixes the window start when both ends tie.
inline GroupingPlan build_grouping_plan(int voxel_count, int groups, int group_size,
                                        int subject_id = -1) {
  if (group_size < 1 || voxel_count < group_size)
    throw ConfigError("build_grouping_plan: need D_i >= K >= 1, got D_i=" +
                      std::to_string(voxel_count) + " K=" + std::to_string(group_size));
  GroupingPlan plan;
  plan.subject_id = subject_id;
  plan.voxel_count = voxel_count;
  plan.key_indices = select_key_voxels(voxel_count, groups);
  plan.member_indices.resize(static_cast<size_t>(groups));
  for (int g = 0; g < groups; ++g) {
    int key = plan.key_indices[static_cast<size_t>(g)];
    int lo = key, hi = key;  // inclusive window, grows one voxel at a time
    while (hi - lo + 1 < group_size) {
      int dlo = lo > 0 ? key - (lo - 1) : -1;
      int dhi = hi < voxel_count - 1 ? (hi + 1) - key : -1;
      if (dlo < 0)
        ++hi;
      else if (dhi < 0)
        --lo;
      else if (dlo <= dhi)  // tie goes to the lower index
        --lo;
      else
        ++hi;
    }
    auto& row = plan.member_indices[static_cast<size_t>(g)];
    row.resize(static_cast<size_t>(group_size));
    for (int k = 0; k < group_size; ++k) row[static_cast<size_t>(k)] = lo + k;
  }
  return plan;
}

// Non-differentiable gather, used by data preparation and tests.
inline Matf apply_grouping(const Matf& voxels, const GroupingPlan& plan) {
  if (voxels.rows() != 1 || voxels.cols() != plan.voxel_count)
    throw ConfigError("apply_grouping: recording length " + std::to_string(voxels.cols()) +
                      " does not match plan D_i " + std::to_string(plan.voxel_count));
  Matf out(static_cast<Eigen::Index>(plan.member_indices.size()),
           static_cast<Eigen::Index>(plan.member_indices[0].size()));
  for (Eigen::Index g = 0; g < out.rows(); ++g)
    for (Eigen::Index k = 0; k < out.cols(); ++k)
      out(g, k) = voxels(0, plan.member_indices[static_cast<size_t>(g)][static_cast<size_t>(k)]);
  return out;
}

// Fraction of voxels covered by at least one group.
inline double membership_coverage(const GroupingPlan& plan) {
  std::vector<char> seen(static_cast<size_t>(plan.voxel_count), 0);
  for (const auto& row : plan.member_indices)
    for (int i : row) seen[static_cast<size_t>(i)] = 1;
  size_t n = 0;
  for (char c : seen) n += c;
  return static_cast<double>(n) / static_cast<double>(plan.voxel_count);
}

inline nlohmann::json plan_to_json(const GroupingPlan& plan) {
  return nlohmann::json{{"subject_id", plan.subject_id},
                        {"voxel_count", plan.voxel_count},
                        {"key_indices", plan.key_indices},
                        {"member_indices", plan.member_indices}};
}

inline GroupingPlan plan_from_json(const nlohmann::json& j) {
  GroupingPlan plan;
  plan.subject_id = j.at("subject_id").get<int>();
  plan.voxel_count = j.at("voxel_count").get<int>();
  plan.key_indices = j.at("key_indices").get<std::vector<int>>();
  plan.member_indices = j.at("member_indices").get<std::vector<std::vector<int>>>();
  return plan;
}

inline void save_plan(const GroupingPlan& plan, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IntegrityError("cannot write grouping plan: " + path);
  os << plan_to_json(plan).dump(2) << '\n';
}

inline GroupingPlan load_plan(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IntegrityError("cannot read grouping plan: " + path);
  nlohmann::json j;
  is >> j;
  return plan_from_json(j);
}

}  // namespace unibrain
