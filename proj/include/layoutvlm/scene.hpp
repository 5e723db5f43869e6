#pragma once

// Domain types shared by every stage: assets, poses, the room, spatial
// relations and the scene state carried across group-by-group placement.
//
// Units: meters and radians internally. All external formats (inventory,
// layout JSON, scene programs) use degrees for angles.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace layoutvlm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries a 1-based line/column when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0, int column = 0)
      : Error(what), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle into [-pi, pi).
inline double normalize_theta(double theta) {
  if (!std::isfinite(theta)) {
    throw Error("normalize_theta: non-finite angle");
  }
  constexpr double two_pi = 2.0 * kPi;
  double r = std::fmod(theta + kPi, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r -= two_pi;
  double out = r - kPi;
  if (out >= kPi) out = -kPi;
  return out;
}

/// Signed difference a - b wrapped into [-pi, pi).
inline double angle_difference(double a, double b) {
  return normalize_theta(a - b);
}

/// `[a-z][a-z0-9_]*`
inline bool is_identifier(std::string_view s) {
  if (s.empty() || s.front() < 'a' || s.front() > 'z') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Canonical bounding-box extents with the asset facing +x:
/// x is depth, y is width, z is height.
struct Dims {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct Placement {
  bool on_floor = true;
  bool on_wall = false;
  bool on_ceiling = false;
  bool on_object = false;
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct AssetSpec {
  std::string id;
  std::string description;
  Dims dims;
  Placement placement;
  friend bool operator==(const AssetSpec&, const AssetSpec&) = default;
};

using Inventory = std::vector<AssetSpec>;

inline const AssetSpec* find_asset(const Inventory& inventory, std::string_view id) {
  for (const auto& a : inventory) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

/// Centroid of the oriented bounding box plus yaw. theta = 0 faces +x.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;
  friend bool operator==(const Pose&, const Pose&) = default;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(theta);
  }
};

enum class WallSide { kNorth, kSouth, kEast, kWest };

inline constexpr WallSide kAllWalls[] = {WallSide::kNorth, WallSide::kSouth, WallSide::kEast,
                                         WallSide::kWest};

inline std::string wall_id(WallSide side) {
  switch (side) {
    case WallSide::kNorth: return "wall_north";
    case WallSide::kSouth: return "wall_south";
    case WallSide::kEast: return "wall_east";
    case WallSide::kWest: return "wall_west";
  }
  return {};
}

inline std::optional<WallSide> parse_wall_id(std::string_view id) {
  for (WallSide side : kAllWalls) {
    if (wall_id(side) == id) return side;
  }
  return std::nullopt;
}

struct Wall {
  WallSide side = WallSide::kSouth;
  Vec2 start;
  Vec2 end;
  Vec2 normal;  // unit, pointing into the room

  std::string id() const { return wall_id(side); }
};

/// Rectangular room spanning [0, width] x [0, depth] on the floor plane.
struct Room {
  double width = 0.0;
  double depth = 0.0;
  double height = 0.0;
  friend bool operator==(const Room&, const Room&) = default;

  Wall wall(WallSide side) const {
    switch (side) {
      case WallSide::kSouth: return {side, {0.0, 0.0}, {width, 0.0}, {0.0, 1.0}};
      case WallSide::kEast: return {side, {width, 0.0}, {width, depth}, {-1.0, 0.0}};
      case WallSide::kNorth: return {side, {width, depth}, {0.0, depth}, {0.0, -1.0}};
      case WallSide::kWest: return {side, {0.0, depth}, {0.0, 0.0}, {1.0, 0.0}};
    }
    return {};
  }

  /// South, east, north, west: counterclockwise around the floor.
  std::vector<Wall> walls() const {
    return {wall(WallSide::kSouth), wall(WallSide::kEast), wall(WallSide::kNorth),
            wall(WallSide::kWest)};
  }

  void validate() const {
    if (!(width > 0.0) || !(depth > 0.0) || !(height > 0.0) || !std::isfinite(width) ||
        !std::isfinite(depth) || !std::isfinite(height)) {
      throw Error("room dimensions must be finite and positive");
    }
  }
};

inline std::set<std::string> wall_ids() {
  std::set<std::string> out;
  for (WallSide side : kAllWalls) out.insert(wall_id(side));
  return out;
}

enum class RelationKind { kDistance, kOnTopOf, kAlignWith, kPointTowards, kAgainstWall };

inline constexpr RelationKind kAllRelationKinds[] = {
    RelationKind::kDistance, RelationKind::kOnTopOf, RelationKind::kAlignWith,
    RelationKind::kPointTowards, RelationKind::kAgainstWall};

inline std::string to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::kDistance: return "distance";
    case RelationKind::kOnTopOf: return "on_top_of";
    case RelationKind::kAlignWith: return "align_with";
    case RelationKind::kPointTowards: return "point_towards";
    case RelationKind::kAgainstWall: return "against_wall";
  }
  return {};
}

inline std::optional<RelationKind> parse_relation_kind(std::string_view name) {
  for (RelationKind kind : kAllRelationKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

inline bool is_orientational(RelationKind kind) {
  return kind == RelationKind::kAlignWith || kind == RelationKind::kPointTowards;
}

/// One spatial relation. Only the parameters matching `kind` are meaningful:
/// d_min/d_max for distance, angle for align_with and point_towards.
struct Relation {
  RelationKind kind = RelationKind::kDistance;
  std::string subject;
  std::string target;  // asset id, or a wall id for against_wall
  double d_min = 0.0;
  double d_max = 0.0;
  double angle = 0.0;  // radians

  friend bool operator==(const Relation&, const Relation&) = default;

  static Relation distance(std::string a, std::string b, double lo, double hi) {
    return {RelationKind::kDistance, std::move(a), std::move(b), lo, hi, 0.0};
  }
  static Relation on_top_of(std::string a, std::string b) {
    return {RelationKind::kOnTopOf, std::move(a), std::move(b), 0.0, 0.0, 0.0};
  }
  static Relation align_with(std::string a, std::string b, double phi = 0.0) {
    return {RelationKind::kAlignWith, std::move(a), std::move(b), 0.0, 0.0, phi};
  }
  static Relation point_towards(std::string a, std::string b, double phi = 0.0) {
    return {RelationKind::kPointTowards, std::move(a), std::move(b), 0.0, 0.0, phi};
  }
  static Relation against_wall(std::string a, WallSide side) {
    return {RelationKind::kAgainstWall, std::move(a), wall_id(side), 0.0, 0.0, 0.0};
  }
};

/// Empty string when the relation is well-formed, otherwise the reason.
inline std::string relation_problem(const Relation& r) {
  if (r.subject.empty() || r.target.empty()) return "relation endpoints must be nonempty";
  if (r.subject == r.target) return "relation subject and target must differ";
  const bool target_is_wall = parse_wall_id(r.target).has_value();
  if (r.kind == RelationKind::kAgainstWall && !target_is_wall) {
    return "against_wall target must be a wall id";
  }
  if (r.kind != RelationKind::kAgainstWall && target_is_wall) {
    return to_string(r.kind) + " target must be an asset, not a wall";
  }
  if (parse_wall_id(r.subject)) return "relation subject must be an asset";
  if (r.kind == RelationKind::kDistance) {
    if (!std::isfinite(r.d_min) || !std::isfinite(r.d_max)) return "distance bounds must be finite";
    if (r.d_min < 0.0 || r.d_max < 0.0) return "distance bounds must be nonnegative";
    if (r.d_min > r.d_max) return "distance min exceeds max";
  }
  if (!std::isfinite(r.angle)) return "relation angle must be finite";
  return {};
}

inline std::string describe(const Relation& r) {
  std::ostringstream os;
  os << to_string(r.kind) << '(' << r.subject << ", " << r.target << ')';
  return os.str();
}

/// Initial pose estimates and relations for one asset group.
struct SceneProgram {
  std::map<std::string, Pose> poses;
  std::vector<Relation> relations;
  std::string group_label;
};

/// Structural equality used for round-trip checks; angles compared modulo 2pi.
inline bool structurally_equal(const SceneProgram& a, const SceneProgram& b,
                               double angle_tol = 1e-6, double length_tol = 0.0) {
  if (a.poses.size() != b.poses.size() || a.relations.size() != b.relations.size()) return false;
  auto close = [&](double u, double v) { return std::abs(u - v) <= length_tol; };
  auto close_angle = [&](double u, double v) {
    return std::abs(angle_difference(u, v)) <= angle_tol;
  };
  for (auto ia = a.poses.begin(), ib = b.poses.begin(); ia != a.poses.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    const Pose& p = ia->second;
    const Pose& q = ib->second;
    if (!close(p.x, q.x) || !close(p.y, q.y) || !close(p.z, q.z) || !close_angle(p.theta, q.theta)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.relations.size(); ++i) {
    const Relation& r = a.relations[i];
    const Relation& s = b.relations[i];
    if (r.kind != s.kind || r.subject != s.subject || r.target != s.target) return false;
    if (!close(r.d_min, s.d_min) || !close(r.d_max, s.d_max) || !close_angle(r.angle, s.angle)) {
      return false;
    }
  }
  return true;
}

struct PlacedAsset {
  AssetSpec spec;
  Pose pose;
  bool frozen = false;
  std::optional<std::string> support;  // id of the asset this one rests on
};

/// The room plus every asset placed so far, in placement order.
struct SceneState {
  Room room;
  std::vector<PlacedAsset> assets;

  const PlacedAsset* find(std::string_view id) const {
    for (const auto& a : assets) {
      if (a.spec.id == id) return &a;
    }
    return nullptr;
  }
  PlacedAsset* find(std::string_view id) {
    for (auto& a : assets) {
      if (a.spec.id == id) return &a;
    }
    return nullptr;
  }
  std::optional<std::size_t> index_of(std::string_view id) const {
    for (std::size_t i = 0; i < assets.size(); ++i) {
      if (assets[i].spec.id == id) return i;
    }
    return std::nullopt;
  }
};

/// Diagnostics for a scene; empty iff the state is consistent.
inline std::vector<std::string> validate_scene(const SceneState& state) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& a : state.assets) {
    if (!seen.insert(a.spec.id).second) {
      out.push_back("duplicate asset id '" + a.spec.id + "'");
    }
    if (!a.pose.finite()) {
      out.push_back("asset '" + a.spec.id + "' has a non-finite pose");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File I/O

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline nlohmann::json parse_json(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // e.byte is one past the offending character.
    auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                         ": invalid JSON (byte " + std::to_string(e.byte) + ")",
                     line, col);
  }
}

inline double number_field(const nlohmann::json& obj, const char* key, const std::string& what) {
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_number()) {
    throw ParseError(what + ": missing numeric field '" + key + "'");
  }
  return obj.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const AssetSpec& a) {
  return {{"id", a.id},
          {"description", a.description},
          {"dims", {a.dims.x, a.dims.y, a.dims.z}},
          {"placement",
           {{"onFloor", a.placement.on_floor},
            {"onWall", a.placement.on_wall},
            {"onCeiling", a.placement.on_ceiling},
            {"onObject", a.placement.on_object}}}};
}

inline AssetSpec asset_from_json(const nlohmann::json& j, std::size_t index) {
  const std::string where = "inventory entry " + std::to_string(index);
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  AssetSpec a;
  if (!j.contains("id") || !j.at("id").is_string()) throw ParseError(where + ": missing string 'id'");
  a.id = j.at("id").get<std::string>();
  if (!is_identifier(a.id)) {
    throw ParseError(where + ": id '" + a.id + "' does not match [a-z][a-z0-9_]*");
  }
  if (parse_wall_id(a.id)) throw ParseError(where + ": id '" + a.id + "' is reserved for walls");
  a.description = j.value("description", std::string{});
  const auto& dims = j.contains("dims") ? j.at("dims") : nlohmann::json{};
  if (!dims.is_array() || dims.size() != 3 ||
      !std::all_of(dims.begin(), dims.end(), [](const auto& v) { return v.is_number(); })) {
    throw ParseError("asset '" + a.id + "': dims must be an array of 3 numbers");
  }
  a.dims = {dims[0].get<double>(), dims[1].get<double>(), dims[2].get<double>()};
  if (!(a.dims.x > 0.0) || !(a.dims.y > 0.0) || !(a.dims.z > 0.0) || !std::isfinite(a.dims.x) ||
      !std::isfinite(a.dims.y) || !std::isfinite(a.dims.z)) {
    throw ParseError("asset '" + a.id + "': dims must be positive");
  }
  if (j.contains("placement")) {
    const auto& p = j.at("placement");
    if (!p.is_object()) throw ParseError("asset '" + a.id + "': placement must be an object");
    a.placement.on_floor = p.value("onFloor", false);
    a.placement.on_wall = p.value("onWall", false);
    a.placement.on_ceiling = p.value("onCeiling", false);
    a.placement.on_object = p.value("onObject", false);
  }
  return a;
}

inline Inventory inventory_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("inventory must be a JSON array");
  Inventory out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < j.size(); ++i) {
    AssetSpec a = asset_from_json(j[i], i);
    if (!ids.insert(a.id).second) throw ParseError("duplicate asset id '" + a.id + "'");
    out.push_back(std::move(a));
  }
  return out;
}

inline Inventory parse_inventory(const std::string& text, const std::string& origin = "inventory") {
  return inventory_from_json(detail::parse_json(text, origin));
}

inline Inventory load_inventory(const std::string& path) {
  return parse_inventory(read_text_file(path), path);
}

inline std::string serialize_inventory(const Inventory& inventory) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : inventory) j.push_back(to_json(a));
  return j.dump(2) + "\n";
}

inline Room room_from_json(const nlohmann::json& j) {
  Room r{detail::number_field(j, "width", "room"), detail::number_field(j, "depth", "room"),
         detail::number_field(j, "height", "room")};
  r.validate();
  return r;
}

inline nlohmann::json to_json(const Room& r) {
  return {{"width", r.width}, {"depth", r.depth}, {"height", r.height}};
}

inline Room load_room(const std::string& path) {
  return room_from_json(detail::parse_json(read_text_file(path), path));
}

}  // namespace layoutvlm
