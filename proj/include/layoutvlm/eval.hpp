#pragma once

// Scene-level plausibility metrics (collision-free, in-boundary), suite
// aggregation and judge-scored semantic alignment.

#include <algorithm>
#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "json.hpp"
#include "layoutvlm/geometry.hpp"
#include "layoutvlm/scene.hpp"
#include "layoutvlm/vlm.hpp"

namespace layoutvlm {

struct Violation {
  std::string subject;  // asset id
  std::string other;    // second asset for collisions, empty for boundary
  double measure = 0.0; // IoU for collisions, protrusion in meters for boundary
};

struct MetricResult {
  bool ok = true;
  std::vector<Violation> violations;
};

struct JudgedScores {
  std::optional<int> position;
  std::optional<int> rotation;
  std::optional<int> psa;
  std::vector<std::string> diagnostics;
};

struct SceneScore {
  bool collision_free = true;
  bool in_boundary = true;
  std::vector<Violation> collisions;
  std::vector<Violation> protrusions;
  std::optional<JudgedScores> judged;
};

struct EvalConfig {
  double tolerance_iou = 0.01;
  double slack = 0.01;
};

inline bool support_linked(const PlacedAsset& a, const PlacedAsset& b) {
  return (a.support && *a.support == b.spec.id) || (b.support && *b.support == a.spec.id);
}

/// True iff every pair not linked by a support relation has 3D IoU at most
/// `tolerance_iou`.
inline MetricResult collision_free(const SceneState& state, double tolerance_iou = 0.01) {
  MetricResult out;
  const auto& assets = state.assets;
  for (std::size_t i = 0; i < assets.size(); ++i) {
    for (std::size_t j = i + 1; j < assets.size(); ++j) {
      const auto& a = assets[i];
      const auto& b = assets[j];
      if (support_linked(a, b)) continue;
      if (!aabb_overlap(a.pose, a.spec.dims, b.pose, b.spec.dims)) continue;
      const double v = iou(make_box(a.pose, a.spec.dims), make_box(b.pose, b.spec.dims), IouMode::kXYZ);
      if (v > tolerance_iou) out.violations.push_back({a.spec.id, b.spec.id, v});
    }
  }
  out.ok = out.violations.empty();
  return out;
}

/// Largest distance by which the rotated footprint leaves the room rectangle;
/// zero or negative when inside.
inline double protrusion(const PlacedAsset& a, const Room& room) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& c : corners(make_box(a.pose, a.spec.dims).footprint)) {
    worst = std::max({worst, -c.x, c.x - room.width, -c.y, c.y - room.depth});
  }
  return worst;
}

/// True iff every footprint lies inside the room grown by `slack`.
inline MetricResult in_boundary(const SceneState& state, double slack = 0.01) {
  MetricResult out;
  for (const auto& a : state.assets) {
    const double p = protrusion(a, state.room);
    if (p > slack) out.violations.push_back({a.spec.id, "", p});
  }
  out.ok = out.violations.empty();
  return out;
}

inline SceneScore score_scene(const SceneState& state, const EvalConfig& cfg = {}) {
  SceneScore s;
  auto cf = collision_free(state, cfg.tolerance_iou);
  auto ib = in_boundary(state, cfg.slack);
  s.collision_free = cf.ok;
  s.in_boundary = ib.ok;
  s.collisions = std::move(cf.violations);
  s.protrusions = std::move(ib.violations);
  return s;
}

struct SuiteReport {
  std::vector<SceneScore> rows;
  double cf_percent = 0.0;
  double ib_percent = 0.0;
};

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

inline SuiteReport score_suite(const std::vector<SceneState>& scenes, const EvalConfig& cfg = {}) {
  if (scenes.empty()) throw Error("score_suite: scene list is empty");
  SuiteReport out;
  std::size_t cf = 0;
  std::size_t ib = 0;
  for (const auto& s : scenes) {
    out.rows.push_back(score_scene(s, cfg));
    cf += out.rows.back().collision_free;
    ib += out.rows.back().in_boundary;
  }
  const double n = static_cast<double>(scenes.size());
  out.cf_percent = round1(100.0 * static_cast<double>(cf) / n);
  out.ib_percent = round1(100.0 * static_cast<double>(ib) / n);
  return out;
}

// ---------------------------------------------------------------------------
// Judge

/// First integer in [0, 100] appearing in `text` as a whole number.
inline std::optional<int> parse_score(const std::string& text) {
  static const std::regex number(R"((^|[^0-9.])([0-9]{1,3})(?![0-9]|\.[0-9]))");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), number); it != std::sregex_iterator(); ++it) {
    const int v = std::stoi((*it)[2].str());
    if (v <= 100) return v;
  }
  return std::nullopt;
}

inline ChatRequest judge_request(const SceneState& state, const std::string& instruction,
                                 const std::string& prompt_template, const VlmClient& client) {
  std::vector<AssetSpec> specs;
  for (const auto& a : state.assets) specs.push_back(a.spec);
  RenderOptions opts;
  opts.format = ImageFormat::kPng;
  ChatRequest req = client.new_request();
  req.messages.push_back(
      {"user",
       {ContentPart::make_text(fill_template(prompt_template, {{"instruction", instruction},
                                                              {"room", describe_room(state.room)},
                                                              {"assets", describe_assets(specs)},
                                                              {"placed", describe_placed(state)}})),
        ContentPart::make_image(render_topdown(state, opts), media_type(opts.format))}});
  return req;
}

/// Asks the judge for position, rotation and overall alignment scores. The
/// overall score is 0 for a scene that is not collision-free and in-boundary,
/// without consulting the judge.
inline JudgedScores judge_semantics(const SceneState& state, const std::string& instruction, VlmClient& client,
                                    const PromptLibrary& prompts, const EvalConfig& cfg = {}) {
  JudgedScores out;
  auto ask = [&](const char* name, const std::string& tmpl) -> std::optional<int> {
    std::string response;
    try {
      response = client.complete(judge_request(state, instruction, tmpl, client));
    } catch (const Error& e) {
      out.diagnostics.push_back(std::string(name) + ": " + e.what());
      return std::nullopt;
    }
    auto score = parse_score(response);
    if (!score) out.diagnostics.push_back(std::string(name) + ": no score in judge response");
    return score;
  };
  out.position = ask("position", prompts.judge_position);
  out.rotation = ask("rotation", prompts.judge_rotation);
  const SceneScore physical = score_scene(state, cfg);
  if (physical.collision_free && physical.in_boundary) {
    out.psa = ask("psa", prompts.judge_psa);
  } else {
    out.psa = 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Violation& v) {
  nlohmann::json j = {{"asset", v.subject}};
  if (!v.other.empty()) {
    j["other"] = v.other;
    j["iou"] = v.measure;
  } else {
    j["protrusion_m"] = v.measure;
  }
  return j;
}

inline nlohmann::json to_json(const JudgedScores& s) {
  auto opt = [](const std::optional<int>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"position", opt(s.position)},
          {"rotation", opt(s.rotation)},
          {"psa", opt(s.psa)},
          {"diagnostics", s.diagnostics}};
}

inline nlohmann::json to_json(const SceneScore& s) {
  nlohmann::json j = {{"collision_free", s.collision_free}, {"in_boundary", s.in_boundary}};
  j["violations"] = nlohmann::json::array();
  for (const auto& v : s.collisions) j["violations"].push_back(to_json(v));
  for (const auto& v : s.protrusions) j["violations"].push_back(to_json(v));
  if (s.judged) j["judged"] = to_json(*s.judged);
  return j;
}

inline nlohmann::json to_json(const SuiteReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.rows) rows.push_back(to_json(s));
  return {{"scenes", rows.size()}, {"cf_percent", r.cf_percent}, {"ib_percent", r.ib_percent}, {"rows", rows}};
}

inline std::string suite_csv(const SuiteReport& r, const std::vector<std::string>& names) {
  std::string out = "scene,collision_free,in_boundary\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    out += (i < names.size() ? names[i] : std::to_string(i)) + "," + (r.rows[i].collision_free ? "1" : "0") + "," +
           (r.rows[i].in_boundary ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace layoutvlm
