#pragma once

// Differentiable spatial-relation losses, the pairwise collision loss and the
// total objective. Free variables are (x, y, theta) per non-frozen asset;
// z is assigned directly by on_top_of and never differentiated.
//
// Kinks (clamps, hinge corners, branch switches) take the derivative of the
// active piece, and 0 on a saturated clamp.

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "layoutvlm/autodiff.hpp"
#include "layoutvlm/geometry.hpp"
#include "layoutvlm/scene.hpp"

namespace layoutvlm {

struct Grad3 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Grad3& operator+=(const Grad3& o) {
    x += o.x;
    y += o.y;
    theta += o.theta;
    return *this;
  }
  Grad3 operator*(double s) const { return {x * s, y * s, theta * s}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta); }
};

/// A loss value with its gradient keyed by asset id. Frozen assets and
/// walls never appear in the gradient.
struct LossTerm {
  std::string label;
  double value = 0.0;
  std::map<std::string, Grad3> gradient;
};

struct ObjectiveConfig {
  double physics_weight = 1.0;
  double semantic_weight = 1.0;
  bool collision_gate = true;

  void validate() const {
    if (!std::isfinite(physics_weight) || !std::isfinite(semantic_weight) || physics_weight < 0.0 ||
        semantic_weight < 0.0) {
      throw Error("objective weights must be finite and nonnegative");
    }
  }
};

class DegenerateDirection : public Error {
 public:
  using Error::Error;
};

/// Value and gradient of a two-body loss w.r.t. (x, y, theta) of each body.
struct PairLoss {
  double value = 0.0;
  Grad3 first;
  Grad3 second;
};

namespace detail {

using PairJet = Jet<6>;

/// Evaluates f over Jet seeds (x_i, y_i, theta_i, x_j, y_j, theta_j).
template <class F>
PairLoss eval_pair(const Pose& pi, const Pose& pj, F&& f) {
  const std::array<PairJet, 6> v = {PairJet(pi.x, 0), PairJet(pi.y, 1), PairJet(pi.theta, 2),
                                    PairJet(pj.x, 3), PairJet(pj.y, 4), PairJet(pj.theta, 5)};
  const PairJet r = f(v);
  return {r.a, {r.v[0], r.v[1], r.v[2]}, {r.v[3], r.v[4], r.v[5]}};
}

template <class T>
T distance_loss(const T& xi, const T& yi, const T& xj, const T& yj, double d_min, double d_max) {
  const T dx = xi - xj;
  const T dy = yi - yj;
  const T d = safe_sqrt(dx * dx + dy * dy);
  const T hinge = max_of(T(d_min) - d, d - T(d_max));
  return clamp_of(hinge, 0.0, 1.0);
}

template <class T>
T align_loss(const T& theta_i, const T& theta_j, double phi) {
  using std::cos;
  return T(1.0) - cos(theta_i - theta_j - T(phi));
}

inline constexpr double kMinDirection = 1e-6;

template <class T>
T point_towards_loss(const T& xi, const T& yi, const T& theta_i, const T& xj, const T& yj,
                     double phi) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T dx = xj - xi;
  const T dy = yj - yi;
  const T len2 = dx * dx + dy * dy;
  if (!(value_of(len2) > kMinDirection * kMinDirection)) {
    throw DegenerateDirection("point_towards: coincident positions");
  }
  const T len = sqrt(len2);
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const T ux = dx / len;
  const T uy = dy / len;
  const T rx = ux * c - uy * s;
  const T ry = ux * s + uy * c;
  const T cosine = cos(theta_i) * rx + sin(theta_i) * ry;
  if (value_of(cosine) > 0.0) return T(0.0);
  return T(1.0) - cosine;
}

template <class T>
T against_wall_loss(const T& x, const T& y, const T& theta, const Dims& dims, const Wall& wall) {
  using std::cos;
  using std::sin;
  const Obb2T<T> box{{x, y}, {T(dims.x / 2.0), T(dims.y / 2.0)}, theta};
  const Point2<T> s0{T(wall.start.x), T(wall.start.y)};
  const Point2<T> s1{T(wall.end.x), T(wall.end.y)};
  T sum(0.0);
  for (const auto& c : corners(box)) {
    sum = sum + clamp_of(point_segment_distance(c, s0, s1), 0.0, 1.0);
  }
  const T facing = cos(theta) * wall.normal.x + sin(theta) * wall.normal.y;
  return sum + (T(1.0) - facing);
}

template <class T>
T on_top_of_loss(const T& xi, const T& yi, const T& theta_i, const T& xj, const T& yj,
                 const T& theta_j, const Dims& di, const Dims& dj) {
  const auto a = make_box<T>(xi, yi, T(0.0), theta_i, di);
  const auto b = make_box<T>(xj, yj, T(0.0), theta_j, dj);
  return -diou(a, b, IouMode::kXY);
}

template <class T>
T physics_diou(const T& xi, const T& yi, double zi, const T& theta_i, const T& xj, const T& yj,
               double zj, const T& theta_j, const Dims& di, const Dims& dj) {
  const auto a = make_box<T>(xi, yi, T(zi), theta_i, di);
  const auto b = make_box<T>(xj, yj, T(zj), theta_j, dj);
  return diou(a, b, IouMode::kXYZ);
}

}  // namespace detail

inline PairLoss loss_distance(const Pose& pi, const Pose& pj, double d_min, double d_max) {
  if (!(d_min <= d_max) || d_min < 0.0) {
    throw Error("distance: require 0 <= d_min <= d_max");
  }
  return detail::eval_pair(pi, pj, [&](const auto& v) {
    return detail::distance_loss(v[0], v[1], v[3], v[4], d_min, d_max);
  });
}

/// Height of the top face of a resting support.
inline double support_top(const Pose& support, const Dims& dims) {
  return support.z + dims.z / 2.0;
}

struct OnTopOfLoss {
  PairLoss loss;
  double assigned_z = 0.0;
};

/// Negated footprint DIoU; z of the subject is assigned, not optimized.
inline OnTopOfLoss loss_on_top_of(const Pose& pi, const Pose& pj, const Dims& di, const Dims& dj) {
  OnTopOfLoss out;
  out.loss = detail::eval_pair(pi, pj, [&](const auto& v) {
    return detail::on_top_of_loss(v[0], v[1], v[2], v[3], v[4], v[5], di, dj);
  });
  out.assigned_z = support_top(pj, dj) + di.z / 2.0;
  return out;
}

/// Zero while the subject faces the (phi-rotated) direction to the target;
/// discontinuous where the two are perpendicular.
inline PairLoss loss_point_towards(const Pose& pi, const Pose& pj, double phi) {
  return detail::eval_pair(pi, pj, [&](const auto& v) {
    return detail::point_towards_loss(v[0], v[1], v[2], v[3], v[4], phi);
  });
}

inline PairLoss loss_align_with(const Pose& pi, const Pose& pj, double phi) {
  return detail::eval_pair(pi, pj,
                           [&](const auto& v) { return detail::align_loss(v[2], v[5], phi); });
}

inline PairLoss loss_against_wall(const Pose& pi, const Dims& di, const Wall& wall) {
  return detail::eval_pair(pi, pi, [&](const auto& v) {
    return detail::against_wall_loss(v[0], v[1], v[2], di, wall);
  });
}

/// Against-wall value of an asset sitting flush against the wall and facing
/// the room: the two front corners sit one depth away from the wall.
inline double against_wall_floor(const Dims& dims) { return 2.0 * std::min(dims.x, 1.0); }

/// Collision penalty from the 3D DIoU of two boxes. With the gate on, only
/// interpenetrating pairs contribute and their value is 1 + DIoU, which is
/// positive, so any collision costs more than none; the gradient is that of
/// DIoU. With the gate off the value is the raw DIoU.
inline PairLoss loss_physics_pair(const Pose& pi, const Pose& pj, const Dims& di, const Dims& dj,
                                  const ObjectiveConfig& cfg) {
  if (cfg.collision_gate) {
    if (!aabb_overlap(pi, di, pj, dj)) return {};
    if (!(iou(make_box(pi, di), make_box(pj, dj), IouMode::kXYZ) > 0.0)) return {};
  }
  const double offset = cfg.collision_gate ? 1.0 : 0.0;
  auto f = [&](const auto& v) {
    return detail::physics_diou(v[0], v[1], pi.z, v[2], v[3], v[4], pj.z, v[5], di, dj);
  };
  const double dx = pi.x - pj.x;
  const double dy = pi.y - pj.y;
  PairLoss out;
  if (dx * dx + dy * dy < 1e-18) {
    // Coincident centers sit on the IoU cusp where every direction is a
    // subgradient; take the one-sided derivative with `pj` displaced along +x.
    Pose shifted = pj;
    shifted.x += 1e-6;
    out = detail::eval_pair(pi, shifted, f);
    out.value = detail::physics_diou<double>(pi.x, pi.y, pi.z, pi.theta, pj.x, pj.y, pj.z, pj.theta, di, dj);
  } else {
    out = detail::eval_pair(pi, pj, f);
  }
  out.value += offset;
  return out;
}

// ---------------------------------------------------------------------------
// Total objective

struct LossBreakdown {
  double total = 0.0;
  double semantic = 0.0;
  double physics = 0.0;
};

/// Relations and pair exemptions resolved to indices into a SceneState.
class Objective {
 public:
  Objective(const SceneState& state, const std::vector<Relation>& relations, ObjectiveConfig cfg)
      : cfg_(cfg), room_(state.room) {
    cfg_.validate();
    const std::size_t n = state.assets.size();
    dims_.reserve(n);
    for (const auto& a : state.assets) {
      dims_.push_back(a.spec.dims);
      frozen_.push_back(a.frozen);
      ids_.push_back(a.spec.id);
    }
    exempt_.assign(n * n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (state.assets[i].support) {
        if (auto j = state.index_of(*state.assets[i].support)) mark_exempt(i, *j);
      }
    }
    for (const auto& r : relations) {
      if (auto problem = relation_problem(r); !problem.empty()) {
        throw Error("relation " + describe(r) + ": " + problem);
      }
      Compiled c;
      c.relation = r;
      auto subject = state.index_of(r.subject);
      if (!subject) throw Error("relation " + describe(r) + ": unknown asset '" + r.subject + "'");
      c.subject = *subject;
      if (r.kind == RelationKind::kAgainstWall) {
        c.wall = room_.wall(*parse_wall_id(r.target));
      } else {
        auto target = state.index_of(r.target);
        if (!target) throw Error("relation " + describe(r) + ": unknown asset '" + r.target + "'");
        c.target = *target;
        if (r.kind == RelationKind::kOnTopOf) mark_exempt(c.subject, c.target);
      }
      compiled_.push_back(std::move(c));
    }
  }

  std::size_t size() const { return dims_.size(); }
  const ObjectiveConfig& config() const { return cfg_; }
  const std::vector<std::string>& ids() const { return ids_; }
  bool frozen(std::size_t i) const { return frozen_[i]; }
  bool exempt(std::size_t i, std::size_t j) const { return exempt_[i * size() + j]; }

  /// Loss of relation `k` at the given poses, with its two-body gradient.
  PairLoss relation_loss(std::size_t k, const std::vector<Pose>& poses) const {
    const Compiled& c = compiled_[k];
    const Relation& r = c.relation;
    const Pose& pi = poses[c.subject];
    switch (r.kind) {
      case RelationKind::kDistance: return loss_distance(pi, poses[c.target], r.d_min, r.d_max);
      case RelationKind::kOnTopOf:
        return loss_on_top_of(pi, poses[c.target], dims_[c.subject], dims_[c.target]).loss;
      case RelationKind::kAlignWith: return loss_align_with(pi, poses[c.target], r.angle);
      case RelationKind::kPointTowards:
        try {
          return loss_point_towards(pi, poses[c.target], r.angle);
        } catch (const DegenerateDirection&) {
          // Undefined direction: treat the cosine as 0.
          return {1.0, {}, {}};
        }
      case RelationKind::kAgainstWall: {
        PairLoss l = loss_against_wall(pi, dims_[c.subject], *c.wall);
        l.first += l.second;
        l.second = {};
        return l;
      }
    }
    return {};
  }

  const Relation& relation(std::size_t k) const { return compiled_[k].relation; }
  std::size_t relation_count() const { return compiled_.size(); }
  std::size_t subject_index(std::size_t k) const { return compiled_[k].subject; }
  std::optional<std::size_t> target_index(std::size_t k) const {
    if (compiled_[k].wall) return std::nullopt;
    return compiled_[k].target;
  }

  /// Sets z of every on_top_of subject to rest on its support. Chains are
  /// resolved by repeated passes; frozen subjects are left alone.
  void assign_support_heights(std::vector<Pose>& poses) const {
    for (std::size_t pass = 0; pass < compiled_.size(); ++pass) {
      bool changed = false;
      for (const auto& c : compiled_) {
        if (c.relation.kind != RelationKind::kOnTopOf || frozen_[c.subject]) continue;
        const double z = support_top(poses[c.target], dims_[c.target]) + dims_[c.subject].z / 2.0;
        if (poses[c.subject].z != z) {
          poses[c.subject].z = z;
          changed = true;
        }
      }
      if (!changed) break;
    }
  }

  /// Weighted objective; `grad`, when given, receives d(total)/d(x, y, theta)
  /// per asset (frozen entries stay zero). Terms are summed in a fixed order.
  LossBreakdown evaluate(const std::vector<Pose>& poses, std::vector<Grad3>* grad) const {
    const std::size_t n = size();
    if (grad) grad->assign(n, Grad3{});
    LossBreakdown out;
    for (std::size_t k = 0; k < compiled_.size(); ++k) {
      const PairLoss l = relation_loss(k, poses);
      out.semantic += l.value;
      if (grad) {
        const Compiled& c = compiled_[k];
        (*grad)[c.subject] += l.first * cfg_.semantic_weight;
        if (!c.wall) (*grad)[c.target] += l.second * cfg_.semantic_weight;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (exempt(i, j)) continue;
        const PairLoss l = loss_physics_pair(poses[i], poses[j], dims_[i], dims_[j], cfg_);
        out.physics += l.value;
        if (grad) {
          (*grad)[i] += l.first * cfg_.physics_weight;
          (*grad)[j] += l.second * cfg_.physics_weight;
        }
      }
    }
    if (grad) {
      for (std::size_t i = 0; i < n; ++i) {
        if (frozen_[i]) (*grad)[i] = {};
      }
    }
    out.total = cfg_.semantic_weight * out.semantic + cfg_.physics_weight * out.physics;
    return out;
  }

 private:
  struct Compiled {
    Relation relation;
    std::size_t subject = 0;
    std::size_t target = 0;
    std::optional<Wall> wall;
  };

  void mark_exempt(std::size_t i, std::size_t j) {
    exempt_[i * size() + j] = true;
    exempt_[j * size() + i] = true;
  }

  ObjectiveConfig cfg_;
  Room room_;
  std::vector<Dims> dims_;
  std::vector<bool> frozen_;
  std::vector<std::string> ids_;
  std::vector<bool> exempt_;
  std::vector<Compiled> compiled_;
};

inline std::vector<Pose> poses_of(const SceneState& state) {
  std::vector<Pose> out;
  out.reserve(state.assets.size());
  for (const auto& a : state.assets) out.push_back(a.pose);
  return out;
}

struct TotalLoss {
  LossBreakdown breakdown;
  std::map<std::string, Grad3> gradient;  // exactly the non-frozen assets
};

inline TotalLoss total_loss(const SceneState& state, const std::vector<Relation>& relations,
                            const ObjectiveConfig& cfg) {
  const Objective objective(state, relations, cfg);
  std::vector<Grad3> grad;
  TotalLoss out;
  out.breakdown = objective.evaluate(poses_of(state), &grad);
  for (std::size_t i = 0; i < state.assets.size(); ++i) {
    if (!state.assets[i].frozen) out.gradient[state.assets[i].spec.id] = grad[i];
  }
  return out;
}

/// A single relation evaluated against a scene, as a LossTerm.
inline LossTerm evaluate_relation(const Relation& relation, const SceneState& state) {
  const Objective objective(state, {relation}, ObjectiveConfig{});
  const PairLoss l = objective.relation_loss(0, poses_of(state));
  LossTerm term{describe(relation), l.value, {}};
  const std::size_t i = objective.subject_index(0);
  if (!state.assets[i].frozen) term.gradient[state.assets[i].spec.id] += l.first;
  if (auto j = objective.target_index(0); j && !state.assets[*j].frozen) {
    term.gradient[state.assets[*j].spec.id] += l.second;
  }
  return term;
}

/// Collision term of one asset pair, as a LossTerm.
inline LossTerm evaluate_physics_pair(const std::string& a, const std::string& b,
                                      const SceneState& state, const ObjectiveConfig& cfg) {
  const PlacedAsset* pa = state.find(a);
  const PlacedAsset* pb = state.find(b);
  if (!pa || !pb) throw Error("physics pair: unknown asset");
  const PairLoss l = loss_physics_pair(pa->pose, pb->pose, pa->spec.dims, pb->spec.dims, cfg);
  LossTerm term{"physics(" + a + ", " + b + ")", l.value, {}};
  if (!pa->frozen) term.gradient[a] = l.first;
  if (!pb->frozen) term.gradient[b] = l.second;
  return term;
}

/// Central finite differences against the term's reported gradient, over
/// (x, y, theta) of every non-frozen asset. Returns the largest
/// |analytic - fd| / max(|fd|, 1e-3), so a result below 1e-3 means a relative
/// error under 1e-3 with a 1e-6 absolute floor.
inline double check_gradient(const std::function<LossTerm(const SceneState&)>& term,
                             const SceneState& state, double h) {
  const LossTerm base = term(state);
  double worst = 0.0;
  for (std::size_t i = 0; i < state.assets.size(); ++i) {
    if (state.assets[i].frozen) continue;
    const std::string& id = state.assets[i].spec.id;
    const auto it = base.gradient.find(id);
    const Grad3 analytic = it == base.gradient.end() ? Grad3{} : it->second;
    for (int component = 0; component < 3; ++component) {
      auto perturbed = [&](double delta) {
        SceneState s = state;
        Pose& p = s.assets[i].pose;
        (component == 0 ? p.x : component == 1 ? p.y : p.theta) += delta;
        return term(s).value;
      };
      const double fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
      const double a = component == 0 ? analytic.x : component == 1 ? analytic.y : analytic.theta;
      worst = std::max(worst, std::abs(a - fd) / std::max(std::abs(fd), 1e-3));
    }
  }
  return worst;
}

}  // namespace layoutvlm
