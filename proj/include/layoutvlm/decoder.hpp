#pragma once

// Self-consistent decoding: keep only the proposed relations that the
// proposed poses already satisfy, and at most one orientational relation per
// asset.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "layoutvlm/objectives.hpp"
#include "layoutvlm/scene.hpp"

namespace layoutvlm {

struct DecoderConfig {
  std::map<RelationKind, double> epsilon = {
      {RelationKind::kDistance, 0.05},
      {RelationKind::kAlignWith, 0.10},
      {RelationKind::kPointTowards, 0.10},
      {RelationKind::kAgainstWall, 0.50},
  };

  double threshold(RelationKind kind) const {
    auto it = epsilon.find(kind);
    return it == epsilon.end() ? 0.0 : it->second;
  }

  void validate() const {
    for (const auto& [kind, eps] : epsilon) {
      if (!(eps >= 0.0) || !std::isfinite(eps)) {
        throw Error("decoder threshold for " + to_string(kind) + " must be finite and >= 0");
      }
    }
  }
};

struct RelationVerdict {
  Relation relation;
  std::optional<double> initial_loss;  // absent when the relation could not be evaluated
  std::string reason;                  // empty for retained relations
};

struct DecodeReport {
  std::vector<RelationVerdict> retained;
  std::vector<RelationVerdict> dropped;
};

struct DecodeResult {
  SceneProgram program;
  DecodeReport report;
};

namespace detail {

/// Placed assets (as they are) plus the program's assets at their proposed
/// poses. Program entries without an inventory spec are skipped.
inline SceneState initial_state(const SceneProgram& program, const SceneState& state,
                                const Inventory& inventory) {
  SceneState out = state;
  for (const auto& [id, pose] : program.poses) {
    if (out.find(id)) continue;
    const AssetSpec* spec = find_asset(inventory, id);
    if (!spec) continue;
    out.assets.push_back({*spec, pose, false, std::nullopt});
  }
  return out;
}

inline std::string unresolved_endpoint(const Relation& r, const SceneState& scene) {
  if (!scene.find(r.subject)) return "unknown asset '" + r.subject + "'";
  if (r.kind != RelationKind::kAgainstWall && !scene.find(r.target)) {
    return "unknown asset '" + r.target + "'";
  }
  return {};
}

/// The quantity compared against epsilon. For against_wall the unavoidable
/// depth of the asset is subtracted, since the raw loss of a flush asset
/// deeper than epsilon/2 could never pass.
inline double consistency_residual(const Relation& r, double loss, const SceneState& scene) {
  if (r.kind == RelationKind::kAgainstWall) {
    return loss - against_wall_floor(scene.find(r.subject)->spec.dims);
  }
  return loss;
}

}  // namespace detail

inline DecodeResult filter_self_consistent(const SceneProgram& program, const SceneState& state,
                                           const Inventory& inventory,
                                           const DecoderConfig& cfg = {}) {
  cfg.validate();
  const SceneState scene = detail::initial_state(program, state, inventory);
  DecodeResult out;
  out.program.poses = program.poses;
  out.program.group_label = program.group_label;
  for (const Relation& r : program.relations) {
    if (auto problem = relation_problem(r); !problem.empty()) {
      out.report.dropped.push_back({r, std::nullopt, problem});
      continue;
    }
    if (auto missing = detail::unresolved_endpoint(r, scene); !missing.empty()) {
      out.report.dropped.push_back({r, std::nullopt, missing});
      continue;
    }
    const double loss = evaluate_relation(r, scene).value;
    if (r.kind == RelationKind::kOnTopOf) {
      out.program.relations.push_back(r);
      out.report.retained.push_back({r, loss, {}});
      continue;
    }
    const double residual = detail::consistency_residual(r, loss, scene);
    const double eps = cfg.threshold(r.kind);
    if (residual <= eps) {
      out.program.relations.push_back(r);
      out.report.retained.push_back({r, loss, {}});
    } else {
      std::ostringstream why;
      why << "not satisfied by the initial poses (residual " << residual << " > " << eps << ")";
      out.report.dropped.push_back({r, loss, why.str()});
    }
  }
  return out;
}

struct DedupeResult {
  SceneProgram program;
  std::vector<RelationVerdict> dropped;
};

/// Keeps, per subject, the orientational relation with the lowest initial
/// loss; the earlier declaration wins ties.
inline DedupeResult dedupe_orientational(const SceneProgram& program, const SceneState& state,
                                         const Inventory& inventory) {
  const SceneState scene = detail::initial_state(program, state, inventory);
  std::vector<double> losses(program.relations.size(), std::numeric_limits<double>::infinity());
  std::map<std::string, std::size_t> best;  // subject -> relation index
  for (std::size_t k = 0; k < program.relations.size(); ++k) {
    const Relation& r = program.relations[k];
    if (!is_orientational(r.kind)) continue;
    if (relation_problem(r).empty() && detail::unresolved_endpoint(r, scene).empty()) {
      losses[k] = evaluate_relation(r, scene).value;
    }
    auto [it, inserted] = best.try_emplace(r.subject, k);
    if (!inserted && losses[k] < losses[it->second]) it->second = k;
  }
  DedupeResult out;
  out.program.poses = program.poses;
  out.program.group_label = program.group_label;
  for (std::size_t k = 0; k < program.relations.size(); ++k) {
    const Relation& r = program.relations[k];
    if (is_orientational(r.kind) && best.at(r.subject) != k) {
      const Relation& kept = program.relations[best.at(r.subject)];
      std::optional<double> loss;
      if (std::isfinite(losses[k])) loss = losses[k];
      out.dropped.push_back({r, loss, "asset already has orientational relation " + describe(kept)});
      continue;
    }
    out.program.relations.push_back(r);
  }
  return out;
}

inline nlohmann::json to_json(const Relation& r) {
  nlohmann::json j = {{"kind", to_string(r.kind)}, {"subject", r.subject}, {"target", r.target}};
  if (r.kind == RelationKind::kDistance) {
    j["min"] = r.d_min;
    j["max"] = r.d_max;
  }
  if (is_orientational(r.kind)) j["angle_deg"] = rad_to_deg(r.angle);
  return j;
}

inline nlohmann::json to_json(const RelationVerdict& v) {
  nlohmann::json j = to_json(v.relation);
  j["initial_loss"] = v.initial_loss ? nlohmann::json(*v.initial_loss) : nlohmann::json(nullptr);
  if (!v.reason.empty()) j["reason"] = v.reason;
  return j;
}

inline nlohmann::json to_json(const DecodeReport& report) {
  nlohmann::json j = {{"retained", nlohmann::json::array()}, {"dropped", nlohmann::json::array()}};
  for (const auto& v : report.retained) j["retained"].push_back(to_json(v));
  for (const auto& v : report.dropped) j["dropped"].push_back(to_json(v));
  return j;
}

}  // namespace layoutvlm
