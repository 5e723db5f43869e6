#pragma once

// Projected gradient descent over (x, y, theta) of the free assets, and
// group-by-group placement on top of it.

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "layoutvlm/decoder.hpp"
#include "layoutvlm/geometry.hpp"
#include "layoutvlm/objectives.hpp"
#include "layoutvlm/scene.hpp"

namespace layoutvlm {

struct OptimizerConfig {
  int iterations = 1000;
  double step_size_xy = 0.01;
  double step_size_theta = 0.05;
  int project_every = 50;
  int record_every = 100;

  void validate() const {
    if (iterations < 1) throw Error("optimizer: iterations must be >= 1");
    if (!(step_size_xy > 0.0) || !(step_size_theta > 0.0)) {
      throw Error("optimizer: step sizes must be positive");
    }
    if (project_every < 1 || record_every < 1) {
      throw Error("optimizer: project_every and record_every must be >= 1");
    }
  }
};

struct Checkpoint {
  int iteration = 0;
  double total = 0.0;
  double semantic = 0.0;
  double physics = 0.0;
};

struct OptimizationTrace {
  std::vector<Checkpoint> checkpoints;
  int best_iteration = 0;
  std::map<std::string, Pose> final_poses;
  double duration_seconds = 0.0;
  std::string aborted;  // diagnostic when stopped on a non-finite value

  double initial_total() const { return checkpoints.empty() ? 0.0 : checkpoints.front().total; }
  double best_total() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : checkpoints) best = std::min(best, c.total);
    return best;
  }
};

class InfeasibleProjection : public Error {
 public:
  using Error::Error;
};

/// Smallest translation that brings the axis-aligned hull of the rotated
/// footprint inside the room.
inline Pose project_into_room(const Pose& pose, const Dims& dims, const Room& room,
                              const std::string& id = "asset") {
  const Vec2 half = aabb_half_extents(dims, pose.theta);
  constexpr double kTol = 1e-12;
  if (2.0 * half.x > room.width + kTol || 2.0 * half.y > room.depth + kTol) {
    throw InfeasibleProjection("'" + id + "' does not fit inside the room at its rotation");
  }
  Pose out = pose;
  out.x = std::clamp(pose.x, std::min(half.x, room.width / 2.0), std::max(room.width - half.x, room.width / 2.0));
  out.y = std::clamp(pose.y, std::min(half.y, room.depth / 2.0), std::max(room.depth - half.y, room.depth / 2.0));
  return out;
}

namespace detail {

inline void project_free(const Objective& objective, const SceneState& state,
                         std::vector<Pose>& poses) {
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (objective.frozen(i)) continue;
    poses[i] = project_into_room(poses[i], state.assets[i].spec.dims, state.room,
                                 state.assets[i].spec.id);
  }
}

inline bool all_finite(const std::vector<Grad3>& grad) {
  for (const auto& g : grad) {
    if (!g.finite()) return false;
  }
  return true;
}

}  // namespace detail

struct OptimizeResult {
  SceneState state;
  OptimizationTrace trace;
};

/// Runs `iterations` gradient steps. Free assets are projected into the room
/// every `project_every` steps and at the end; on_top_of heights are
/// refreshed after every step. Checkpoints are scored on projected poses and
/// the best one (initialization included) is returned.
inline OptimizeResult optimize(const SceneState& state, const std::vector<Relation>& relations,
                               const ObjectiveConfig& obj_cfg, const OptimizerConfig& opt_cfg) {
  opt_cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const Objective objective(state, relations, obj_cfg);

  std::vector<Pose> poses = poses_of(state);
  objective.assign_support_heights(poses);
  detail::project_free(objective, state, poses);

  OptimizeResult result;
  OptimizationTrace& trace = result.trace;
  std::vector<Pose> best = poses;
  double best_total = std::numeric_limits<double>::infinity();

  auto record = [&](int iteration, const std::vector<Pose>& candidate) {
    const LossBreakdown b = objective.evaluate(candidate, nullptr);
    trace.checkpoints.push_back({iteration, b.total, b.semantic, b.physics});
    if (!std::isfinite(b.total)) return false;
    if (b.total < best_total) {
      best_total = b.total;
      best = candidate;
      trace.best_iteration = iteration;
    }
    return true;
  };

  if (!record(0, poses)) {
    trace.aborted = "non-finite loss at initialization";
  }

  std::vector<Grad3> grad;
  for (int it = 1; it <= opt_cfg.iterations && trace.aborted.empty(); ++it) {
    const LossBreakdown b = objective.evaluate(poses, &grad);
    if (!std::isfinite(b.total) || !detail::all_finite(grad)) {
      trace.aborted = "non-finite loss or gradient at iteration " + std::to_string(it);
      break;
    }
    for (std::size_t i = 0; i < poses.size(); ++i) {
      if (objective.frozen(i)) continue;
      poses[i].x -= opt_cfg.step_size_xy * grad[i].x;
      poses[i].y -= opt_cfg.step_size_xy * grad[i].y;
      poses[i].theta = normalize_theta(poses[i].theta - opt_cfg.step_size_theta * grad[i].theta);
    }
    objective.assign_support_heights(poses);
    const bool last = it == opt_cfg.iterations;
    if (it % opt_cfg.project_every == 0 || last) {
      detail::project_free(objective, state, poses);
      objective.assign_support_heights(poses);
    }
    if (it % opt_cfg.record_every == 0 || last) {
      std::vector<Pose> candidate = poses;
      detail::project_free(objective, state, candidate);
      objective.assign_support_heights(candidate);
      if (!record(it, candidate)) {
        trace.aborted = "non-finite loss at iteration " + std::to_string(it);
      }
    }
  }

  result.state = state;
  for (std::size_t i = 0; i < best.size(); ++i) {
    if (objective.frozen(i)) continue;
    result.state.assets[i].pose = best[i];
  }
  for (const auto& a : result.state.assets) trace.final_poses[a.spec.id] = a.pose;
  trace.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

struct PlacementConfig {
  ObjectiveConfig objective;
  OptimizerConfig optimizer;
  DecoderConfig decoder;
};

struct PlaceGroupResult {
  SceneState state;
  OptimizationTrace trace;
  std::vector<std::string> placed;
  std::vector<std::string> missing;  // group assets the program gave no pose
};

/// Adds the group's assets at their proposed poses, optimizes them with every
/// previously placed asset frozen, then freezes the group. The relations are
/// used as given; decode them first.
inline PlaceGroupResult place_group(const SceneState& state, const SceneProgram& program,
                                    const Inventory& inventory,
                                    const std::vector<std::string>& group,
                                    const PlacementConfig& cfg) {
  PlaceGroupResult out;
  SceneState working = state;
  for (auto& a : working.assets) a.frozen = true;

  std::map<std::string, std::string> supports;
  for (const auto& r : program.relations) {
    if (r.kind == RelationKind::kOnTopOf) supports.emplace(r.subject, r.target);
  }
  for (const auto& id : group) {
    if (working.find(id)) throw Error("place_group: '" + id + "' is already placed");
    const AssetSpec* spec = find_asset(inventory, id);
    if (!spec) throw Error("place_group: '" + id + "' is not in the inventory");
    auto pose = program.poses.find(id);
    if (pose == program.poses.end()) {
      out.missing.push_back(id);
      continue;
    }
    Pose p = pose->second;
    p.theta = normalize_theta(p.theta);
    // Nothing rests below the floor.
    p.z = std::max(p.z, spec->dims.z / 2.0);
    PlacedAsset placed{*spec, p, false, std::nullopt};
    if (auto s = supports.find(id); s != supports.end()) placed.support = s->second;
    working.assets.push_back(std::move(placed));
    out.placed.push_back(id);
  }

  // Relations touching assets that were not placed cannot be evaluated.
  std::vector<Relation> active;
  for (const auto& r : program.relations) {
    const bool subject_ok = working.find(r.subject) != nullptr;
    const bool target_ok = r.kind == RelationKind::kAgainstWall || working.find(r.target) != nullptr;
    if (subject_ok && target_ok) active.push_back(r);
  }

  OptimizeResult optimized = optimize(working, active, cfg.objective, cfg.optimizer);
  out.state = std::move(optimized.state);
  out.trace = std::move(optimized.trace);
  for (auto& a : out.state.assets) a.frozen = true;
  return out;
}

inline nlohmann::json to_json(const OptimizationTrace& trace) {
  nlohmann::json j;
  j["checkpoints"] = nlohmann::json::array();
  for (const auto& c : trace.checkpoints) {
    j["checkpoints"].push_back({{"iteration", c.iteration},
                                {"total", c.total},
                                {"semantic", c.semantic},
                                {"physics", c.physics}});
  }
  j["best_iteration"] = trace.best_iteration;
  j["final_poses"] = nlohmann::json::object();
  for (const auto& [id, p] : trace.final_poses) {
    j["final_poses"][id] = {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"rotation_deg", rad_to_deg(p.theta)}};
  }
  j["duration_seconds"] = trace.duration_seconds;
  if (!trace.aborted.empty()) j["aborted"] = trace.aborted;
  return j;
}

}  // namespace layoutvlm
