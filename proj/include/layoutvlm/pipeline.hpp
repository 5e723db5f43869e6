#pragma once

// Layout and configuration files, and the two end-to-end flows: placing a
// hand-written program (no VLM) and generating a scene group by group.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "layoutvlm/decoder.hpp"
#include "layoutvlm/dsl.hpp"
#include "layoutvlm/optimizer.hpp"
#include "layoutvlm/scene.hpp"
#include "layoutvlm/vlm.hpp"

namespace layoutvlm {

// ---------------------------------------------------------------------------
// Layout JSON: {"assets": [{"id", "pose": {x, y, z, rotation_deg}, "on_top_of"?}]}

inline nlohmann::json layout_to_json(const SceneState& state) {
  nlohmann::json assets = nlohmann::json::array();
  for (const auto& a : state.assets) {
    nlohmann::json j = {{"id", a.spec.id},
                        {"pose",
                         {{"x", a.pose.x}, {"y", a.pose.y}, {"z", a.pose.z}, {"rotation_deg", rad_to_deg(a.pose.theta)}}}};
    if (a.support) j["on_top_of"] = *a.support;
    assets.push_back(std::move(j));
  }
  return {{"assets", std::move(assets)}};
}

inline std::string serialize_layout(const SceneState& state) { return layout_to_json(state).dump(2) + "\n"; }

inline SceneState layout_from_json(const nlohmann::json& j, const Room& room, const Inventory& inventory) {
  room.validate();
  if (!j.is_object() || !j.contains("assets") || !j.at("assets").is_array()) {
    throw Error("layout: expected an object with an \"assets\" array");
  }
  SceneState state{room, {}};
  std::size_t index = 0;
  for (const auto& e : j.at("assets")) {
    const std::string where = "layout asset " + std::to_string(index++);
    if (!e.is_object() || !e.contains("id") || !e.at("id").is_string()) throw Error(where + ": missing \"id\"");
    const std::string id = e.at("id").get<std::string>();
    const AssetSpec* spec = find_asset(inventory, id);
    if (!spec) throw Error(where + ": '" + id + "' is not in the inventory");
    if (state.find(id)) throw Error(where + ": '" + id + "' appears twice");
    if (!e.contains("pose") || !e.at("pose").is_object()) throw Error(where + ": missing \"pose\"");
    const auto& p = e.at("pose");
    Pose pose;
    pose.x = detail::number_field(p, "x", where);
    pose.y = detail::number_field(p, "y", where);
    pose.z = p.contains("z") ? detail::number_field(p, "z", where) : spec->dims.z / 2.0;
    pose.theta = p.contains("rotation_deg") ? deg_to_rad(detail::number_field(p, "rotation_deg", where)) : 0.0;
    if (!pose.finite()) throw Error(where + ": non-finite pose");
    pose.theta = normalize_theta(pose.theta);
    PlacedAsset placed{*spec, pose, true, std::nullopt};
    if (e.contains("on_top_of")) {
      if (!e.at("on_top_of").is_string()) throw Error(where + ": \"on_top_of\" must be a string");
      placed.support = e.at("on_top_of").get<std::string>();
    }
    state.assets.push_back(std::move(placed));
  }
  for (const auto& a : state.assets) {
    if (a.support && !state.find(*a.support)) {
      throw Error("layout: '" + a.spec.id + "' rests on unknown asset '" + *a.support + "'");
    }
  }
  return state;
}

inline SceneState load_layout(const std::string& path, const Room& room, const Inventory& inventory) {
  return layout_from_json(detail::parse_json(read_text_file(path), path), room, inventory);
}

// ---------------------------------------------------------------------------
// Configuration overrides:
// {"objective": {...}, "optimizer": {...}, "decoder": {"epsilon": {"distance": ...}}}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw Error("config: \"" + where + "\" must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw Error("config: unknown key \"" + key + "\" in \"" + where + "\"");
  }
}

inline double config_number(const nlohmann::json& j, const char* key) {
  if (!j.at(key).is_number()) throw Error(std::string("config: \"") + key + "\" must be a number");
  return j.at(key).get<double>();
}

inline int config_int(const nlohmann::json& j, const char* key) {
  if (!j.at(key).is_number_integer()) throw Error(std::string("config: \"") + key + "\" must be an integer");
  return j.at(key).get<int>();
}

}  // namespace detail

inline PlacementConfig config_from_json(const nlohmann::json& j, PlacementConfig cfg = {}) {
  detail::check_keys(j, "config", {"objective", "optimizer", "decoder"});
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    detail::check_keys(o, "objective", {"physics_weight", "semantic_weight", "collision_gate"});
    if (o.contains("physics_weight")) cfg.objective.physics_weight = detail::config_number(o, "physics_weight");
    if (o.contains("semantic_weight")) cfg.objective.semantic_weight = detail::config_number(o, "semantic_weight");
    if (o.contains("collision_gate")) {
      if (!o.at("collision_gate").is_boolean()) throw Error("config: \"collision_gate\" must be a boolean");
      cfg.objective.collision_gate = o.at("collision_gate").get<bool>();
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    detail::check_keys(o, "optimizer",
                       {"iterations", "step_size_xy", "step_size_theta", "project_every", "record_every"});
    if (o.contains("iterations")) cfg.optimizer.iterations = detail::config_int(o, "iterations");
    if (o.contains("step_size_xy")) cfg.optimizer.step_size_xy = detail::config_number(o, "step_size_xy");
    if (o.contains("step_size_theta")) cfg.optimizer.step_size_theta = detail::config_number(o, "step_size_theta");
    if (o.contains("project_every")) cfg.optimizer.project_every = detail::config_int(o, "project_every");
    if (o.contains("record_every")) cfg.optimizer.record_every = detail::config_int(o, "record_every");
  }
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    detail::check_keys(d, "decoder", {"epsilon"});
    if (d.contains("epsilon")) {
      const auto& e = d.at("epsilon");
      if (!e.is_object()) throw Error("config: \"epsilon\" must be an object");
      for (const auto& [key, value] : e.items()) {
        const auto kind = parse_relation_kind(key);
        if (!kind) throw Error("config: unknown relation kind \"" + key + "\" in \"epsilon\"");
        if (!value.is_number()) throw Error("config: epsilon for \"" + key + "\" must be a number");
        cfg.decoder.epsilon[*kind] = value.get<double>();
      }
    }
  }
  cfg.objective.validate();
  cfg.optimizer.validate();
  cfg.decoder.validate();
  return cfg;
}

inline PlacementConfig load_config(const std::string& path) {
  return config_from_json(detail::parse_json(read_text_file(path), path));
}

// ---------------------------------------------------------------------------
// Shared per-group stage

struct GroupOutcome {
  std::vector<std::string> ids;
  std::string status = "placed";  // placed | partial | failed
  std::string error;
  std::vector<Diagnostic> diagnostics;
  std::vector<std::string> warnings;
  DecodeReport decode;
  std::vector<RelationVerdict> deduped;
  std::vector<std::string> missing;
  std::optional<OptimizationTrace> trace;
  SceneProgram program;  // decoded program that was optimized
};

namespace detail {

/// Restricts a parsed program to the group's poses, decodes it and places the
/// group on top of `state`.
inline SceneState place_parsed(const SceneState& state, SceneProgram program, const Inventory& inventory,
                               const std::vector<std::string>& group, const PlacementConfig& cfg,
                               GroupOutcome& outcome) {
  const std::set<std::string> members(group.begin(), group.end());
  for (auto it = program.poses.begin(); it != program.poses.end();) {
    if (!members.count(it->first)) {
      outcome.warnings.push_back("ignoring pose for '" + it->first + "' outside the current group");
      it = program.poses.erase(it);
    } else {
      ++it;
    }
  }
  DecodeResult decoded = filter_self_consistent(program, state, inventory, cfg.decoder);
  DedupeResult deduped = dedupe_orientational(decoded.program, state, inventory);
  outcome.decode = std::move(decoded.report);
  outcome.deduped = std::move(deduped.dropped);
  outcome.program = deduped.program;
  if (deduped.program.poses.empty()) {
    outcome.status = "failed";
    outcome.error = "program gave no pose for any asset of the group";
    outcome.missing = group;
    return state;
  }
  PlaceGroupResult placed = place_group(state, deduped.program, inventory, group, cfg);
  outcome.missing = placed.missing;
  outcome.trace = std::move(placed.trace);
  if (!placed.missing.empty()) {
    outcome.status = "partial";
  }
  return std::move(placed.state);
}

inline std::set<std::string> inventory_ids(const Inventory& inventory) {
  std::set<std::string> ids;
  for (const auto& a : inventory) ids.insert(a.id);
  return ids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Placing a hand-written program

struct OptimizeProgramResult {
  SceneState state;
  GroupOutcome outcome;
};

/// Parses, decodes and optimizes a program as one group holding every asset
/// it poses. Throws ParseError carrying the first fatal diagnostic.
inline OptimizeProgramResult optimize_program(const ProgramText& text, const Room& room, const Inventory& inventory,
                                              const PlacementConfig& cfg = {}) {
  room.validate();
  const ParseResult parsed = parse_program(text, detail::inventory_ids(inventory));
  OptimizeProgramResult out;
  out.outcome.diagnostics = parsed.diagnostics;
  for (const auto& d : parsed.diagnostics) {
    if (d.severity == Severity::kError) throw ParseError(format_diagnostic(d), d.line, d.column);
  }
  std::vector<std::string> group;
  for (const auto& a : inventory) {
    if (parsed.program.poses.count(a.id)) group.push_back(a.id);
  }
  out.outcome.ids = group;
  const SceneState empty{room, {}};
  if (group.empty()) {
    out.state = empty;
    return out;
  }
  out.state = detail::place_parsed(empty, parsed.program, inventory, group, cfg, out.outcome);
  return out;
}

// ---------------------------------------------------------------------------
// Generation

struct GenerateResult {
  SceneState state;
  Grouping grouping;
  std::vector<GroupOutcome> groups;
  std::vector<std::string> failed_assets;
  SceneProgram program;  // final poses plus every retained relation

  bool partial() const { return !failed_assets.empty(); }
};

/// Groups the inventory, then for each group renders the current scene, asks
/// for a program, decodes it and optimizes the group. A failing group is
/// reported and its assets left unplaced; later groups still run.
inline GenerateResult generate(const Room& room, const Inventory& inventory, const std::string& instruction,
                               VlmClient& client, const PromptLibrary& prompts, const PlacementConfig& cfg = {},
                               const RenderOptions& render_opts = {}) {
  room.validate();
  GenerateResult out;
  out.state = SceneState{room, {}};
  out.grouping = group_assets(inventory, instruction, client, prompts);
  const std::set<std::string> known = detail::inventory_ids(inventory);

  for (std::size_t g = 0; g < out.grouping.groups.size(); ++g) {
    GroupOutcome outcome;
    outcome.ids = out.grouping.groups[g];
    std::vector<AssetSpec> specs;
    for (const auto& id : outcome.ids) specs.push_back(*find_asset(inventory, id));
    try {
      const ProgramText text = propose_layout(out.state, specs, instruction, client, prompts, render_opts);
      ParseResult parsed = parse_program(text, known);
      outcome.diagnostics = parsed.diagnostics;
      parsed.program.group_label = "group_" + std::to_string(g);
      out.state = detail::place_parsed(out.state, parsed.program, inventory, outcome.ids, cfg, outcome);
    } catch (const Error& e) {
      outcome.status = "failed";
      outcome.error = e.what();
    }
    if (outcome.status == "failed") {
      out.failed_assets.insert(out.failed_assets.end(), outcome.ids.begin(), outcome.ids.end());
    } else {
      out.failed_assets.insert(out.failed_assets.end(), outcome.missing.begin(), outcome.missing.end());
      out.program.relations.insert(out.program.relations.end(), outcome.program.relations.begin(),
                                   outcome.program.relations.end());
    }
    out.groups.push_back(std::move(outcome));
  }
  for (const auto& a : out.state.assets) out.program.poses[a.spec.id] = a.pose;
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const GroupOutcome& g) {
  nlohmann::json j = {{"assets", g.ids}, {"status", g.status}};
  if (!g.error.empty()) j["error"] = g.error;
  j["diagnostics"] = nlohmann::json::array();
  for (const auto& d : g.diagnostics) j["diagnostics"].push_back(format_diagnostic(d));
  j["warnings"] = g.warnings;
  j["decode"] = to_json(g.decode);
  j["deduplicated"] = nlohmann::json::array();
  for (const auto& v : g.deduped) j["deduplicated"].push_back(to_json(v));
  j["missing"] = g.missing;
  return j;
}

}  // namespace layoutvlm
