#pragma once

// Top-down schematic rendering. A scene is first turned into a flat list of
// draw primitives in pixel space; SVG (here) and PNG (render_png.hpp) are two
// backends over the same list, so both show the same marks:
//   - the room outline,
//   - a dot and "(x, y)" label at every grid point,
//   - origin axes in the lower-left corner,
//   - each asset's rotated footprint, its id, and a front-facing arrow.
//
// World +x is screen right and world +y is screen up.

#include <cmath>
#include <cstdio>
#include <string>
#include <variant>
#include <vector>

#include "layoutvlm/geometry.hpp"
#include "layoutvlm/scene.hpp"

namespace layoutvlm {

enum class ImageFormat { kSvg, kPng };

struct RenderOptions {
  double pixels_per_meter = 80.0;
  double grid_spacing = 2.0;
  bool show_labels = true;
  bool show_arrows = true;
  bool show_grid = true;
  ImageFormat format = ImageFormat::kSvg;

  void validate() const {
    if (!(pixels_per_meter > 0.0) || !std::isfinite(pixels_per_meter)) {
      throw Error("render: pixels_per_meter must be positive");
    }
    if (!(grid_spacing > 0.0) || !std::isfinite(grid_spacing)) {
      throw Error("render: grid_spacing must be positive");
    }
  }
};

struct Rgb {
  int r = 0;
  int g = 0;
  int b = 0;
};

namespace draw {

struct PolygonShape {
  std::vector<Vec2> points;
  Rgb fill;
  bool filled = true;
  double fill_opacity = 1.0;
  Rgb stroke;
  double stroke_width = 1.0;
  std::string css_class;
};

struct LineShape {
  Vec2 from;
  Vec2 to;
  Rgb stroke;
  double width = 1.0;
  bool arrow_head = false;
  std::string css_class;
};

struct CircleShape {
  Vec2 center;
  double radius = 1.0;
  Rgb fill;
  std::string css_class;
};

enum class Anchor { kStart, kMiddle };

struct TextShape {
  Vec2 position;
  std::string text;
  double size = 12.0;
  Rgb color;
  Anchor anchor = Anchor::kStart;
  std::string css_class;
};

using Shape = std::variant<PolygonShape, LineShape, CircleShape, TextShape>;

struct Canvas {
  int width = 0;
  int height = 0;
  std::string title;
  std::vector<Shape> shapes;
};

}  // namespace draw

namespace detail {

inline std::string fixed2(double v) {
  if (std::abs(v) < 0.005) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Shortest of %.0f/%.1f/%.2f that represents v to 2 decimals.
inline std::string short_number(double v) {
  if (std::abs(v) < 0.005) v = 0.0;
  char buf[64];
  for (int digits = 0; digits <= 2; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    if (std::abs(std::strtod(buf, nullptr) - v) < 1e-6) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string rgb(const Rgb& c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r & 0xff, c.g & 0xff, c.b & 0xff);
  return buf;
}

/// Deterministic pastel per asset index.
inline Rgb asset_color(std::size_t index) {
  static constexpr Rgb kPalette[] = {{166, 206, 227}, {178, 223, 138}, {251, 154, 153},
                                     {253, 191, 111}, {202, 178, 214}, {255, 255, 153},
                                     {141, 211, 199}, {190, 186, 218}, {252, 205, 229}};
  return kPalette[index % std::size(kPalette)];
}

inline constexpr Rgb kInk{40, 40, 40};
inline constexpr Rgb kGridInk{120, 120, 120};
inline constexpr Rgb kArrowInk{200, 30, 30};

inline void add_arrow(std::vector<draw::Shape>& shapes, Vec2 from, Vec2 to, Rgb color, double width,
                      const std::string& css_class) {
  shapes.push_back(draw::LineShape{from, to, color, width, true, css_class});
}

}  // namespace detail

/// Number of grid points along one axis of a room side of length `extent`.
inline int grid_count(double extent, double spacing) {
  return static_cast<int>(std::floor(extent / spacing + 1e-9)) + 1;
}

inline draw::Canvas topdown_canvas(const SceneState& state, const RenderOptions& opts) {
  opts.validate();
  const Room& room = state.room;
  if (!(room.width > 0.0) || !(room.depth > 0.0)) throw Error("render: room has zero area");
  const double ppm = opts.pixels_per_meter;
  const double margin = 60.0;
  draw::Canvas canvas;
  canvas.width = static_cast<int>(std::ceil(room.width * ppm + 2.0 * margin));
  canvas.height = static_cast<int>(std::ceil(room.depth * ppm + 2.0 * margin));
  canvas.title = "top-down view";
  auto px = [&](double x, double y) { return Vec2{margin + x * ppm, margin + (room.depth - y) * ppm}; };

  auto& shapes = canvas.shapes;
  shapes.push_back(draw::PolygonShape{{px(0, 0), px(room.width, 0), px(room.width, room.depth), px(0, room.depth)},
                                      {250, 250, 250}, true, 1.0, detail::kInk, 2.0, "room"});

  if (opts.show_grid) {
    const int nx = grid_count(room.width, opts.grid_spacing);
    const int ny = grid_count(room.depth, opts.grid_spacing);
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) {
        const double x = i * opts.grid_spacing;
        const double y = j * opts.grid_spacing;
        const Vec2 p = px(x, y);
        shapes.push_back(draw::CircleShape{p, 3.0, detail::kGridInk, "grid-point"});
        shapes.push_back(draw::TextShape{{p.x + 4.0, p.y - 4.0},
                                         "(" + detail::short_number(x) + ", " + detail::short_number(y) + ")",
                                         11.0, detail::kGridInk, draw::Anchor::kStart, "grid-label"});
      }
    }
  }

  // Origin frame.
  const Vec2 origin = px(0, 0);
  detail::add_arrow(shapes, {origin.x - 30.0, origin.y + 30.0}, {origin.x + 10.0, origin.y + 30.0},
                    {200, 0, 0}, 2.0, "axis");
  detail::add_arrow(shapes, {origin.x - 30.0, origin.y + 30.0}, {origin.x - 30.0, origin.y - 10.0},
                    {0, 150, 0}, 2.0, "axis");
  shapes.push_back(draw::TextShape{{origin.x + 14.0, origin.y + 34.0}, "x", 12.0, {200, 0, 0},
                                   draw::Anchor::kStart, "axis-label"});
  shapes.push_back(draw::TextShape{{origin.x - 34.0, origin.y - 14.0}, "y", 12.0, {0, 150, 0},
                                   draw::Anchor::kStart, "axis-label"});

  for (std::size_t k = 0; k < state.assets.size(); ++k) {
    const PlacedAsset& a = state.assets[k];
    const Obb3 box = make_box(a.pose, a.spec.dims);
    std::vector<Vec2> pts;
    for (const auto& c : corners(box.footprint)) pts.push_back(px(c.x, c.y));
    shapes.push_back(draw::PolygonShape{std::move(pts), detail::asset_color(k), true, 0.85, detail::kInk,
                                        1.5, "asset"});
    const Vec2 center = px(a.pose.x, a.pose.y);
    if (opts.show_arrows) {
      const double len = std::max(0.25, 0.5 * a.spec.dims.x + 0.15);
      const Vec2 tip = px(a.pose.x + len * std::cos(a.pose.theta), a.pose.y + len * std::sin(a.pose.theta));
      detail::add_arrow(shapes, center, tip, detail::kArrowInk, 2.0, "front");
    }
    if (opts.show_labels) {
      shapes.push_back(draw::TextShape{{center.x, center.y + 14.0}, a.spec.id, 12.0, detail::kInk,
                                       draw::Anchor::kMiddle, "asset-label"});
    }
  }
  return canvas;
}

/// Cards laid out row-major, four per row; footprints share one scale.
inline draw::Canvas asset_panel_canvas(const std::vector<AssetSpec>& assets, const RenderOptions& opts) {
  opts.validate();
  if (assets.empty()) throw Error("render: asset panel needs at least one asset");
  constexpr int kPerRow = 4;
  constexpr double kCardW = 260.0;
  constexpr double kCardH = 230.0;
  constexpr double kBoxSide = 140.0;
  double largest = 0.0;
  for (const auto& a : assets) largest = std::max({largest, a.dims.x, a.dims.y});
  const double scale = std::min(opts.pixels_per_meter, kBoxSide / largest);

  const int rows = static_cast<int>((assets.size() + kPerRow - 1) / kPerRow);
  const int cols = static_cast<int>(std::min<std::size_t>(assets.size(), kPerRow));
  draw::Canvas canvas;
  canvas.width = static_cast<int>(cols * kCardW);
  canvas.height = static_cast<int>(rows * kCardH);
  canvas.title = "asset panel";
  auto& shapes = canvas.shapes;
  for (std::size_t k = 0; k < assets.size(); ++k) {
    const AssetSpec& a = assets[k];
    const double x0 = static_cast<double>(k % kPerRow) * kCardW;
    const double y0 = static_cast<double>(k / kPerRow) * kCardH;
    shapes.push_back(draw::PolygonShape{{{x0 + 4, y0 + 4}, {x0 + kCardW - 4, y0 + 4},
                                         {x0 + kCardW - 4, y0 + kCardH - 4}, {x0 + 4, y0 + kCardH - 4}},
                                        {255, 255, 255}, true, 1.0, detail::kGridInk, 1.0, "card"});
    shapes.push_back(draw::TextShape{{x0 + 12, y0 + 22}, a.id, 14.0, detail::kInk, draw::Anchor::kStart,
                                     "asset-label"});
    std::string desc = a.description.size() > 40 ? a.description.substr(0, 37) + "..." : a.description;
    shapes.push_back(draw::TextShape{{x0 + 12, y0 + 40}, desc, 10.0, detail::kGridInk, draw::Anchor::kStart,
                                     "asset-description"});
    shapes.push_back(draw::TextShape{{x0 + 12, y0 + kCardH - 14},
                                     detail::fixed2(a.dims.x) + " x " + detail::fixed2(a.dims.y) + " x " +
                                         detail::fixed2(a.dims.z) + " m",
                                     11.0, detail::kInk, draw::Anchor::kStart, "asset-dims"});
    // Footprint facing +x (screen right), centered in the card.
    const Vec2 c{x0 + kCardW / 2.0, y0 + 48 + kBoxSide / 2.0 + 4};
    const double hx = a.dims.x * scale / 2.0;
    const double hy = a.dims.y * scale / 2.0;
    shapes.push_back(draw::PolygonShape{{{c.x + hx, c.y - hy}, {c.x - hx, c.y - hy}, {c.x - hx, c.y + hy},
                                         {c.x + hx, c.y + hy}},
                                        detail::asset_color(k), true, 0.85, detail::kInk, 1.5, "asset"});
    if (opts.show_arrows) {
      detail::add_arrow(shapes, c, {c.x + hx + 18.0, c.y}, detail::kArrowInk, 2.0, "front");
    }
  }
  return canvas;
}

namespace detail {

inline void svg_arrow_head(std::string& out, const draw::LineShape& l) {
  const double dx = l.to.x - l.from.x;
  const double dy = l.to.y - l.from.y;
  const double len = std::hypot(dx, dy);
  if (len <= 0.0) return;
  const double ux = dx / len;
  const double uy = dy / len;
  const double size = 4.0 + 2.0 * l.width;
  const Vec2 a{l.to.x - size * ux + 0.5 * size * uy, l.to.y - size * uy - 0.5 * size * ux};
  const Vec2 b{l.to.x - size * ux - 0.5 * size * uy, l.to.y - size * uy + 0.5 * size * ux};
  out += "<polygon points=\"" + fixed2(l.to.x) + "," + fixed2(l.to.y) + " " + fixed2(a.x) + "," +
         fixed2(a.y) + " " + fixed2(b.x) + "," + fixed2(b.y) + "\" fill=\"" + rgb(l.stroke) + "\"/>\n";
}

}  // namespace detail

inline std::string to_svg(const draw::Canvas& canvas) {
  using detail::fixed2;
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<!-- Top-down schematic. World +x is screen right, world +y is screen up. -->\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(canvas.width) +
         "\" height=\"" + std::to_string(canvas.height) + "\" viewBox=\"0 0 " + std::to_string(canvas.width) +
         " " + std::to_string(canvas.height) + "\">\n";
  out += "<title>" + detail::xml_escape(canvas.title) + "</title>\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(canvas.width) + "\" height=\"" +
         std::to_string(canvas.height) + "\" fill=\"#ffffff\"/>\n";
  for (const auto& shape : canvas.shapes) {
    if (const auto* p = std::get_if<draw::PolygonShape>(&shape)) {
      out += "<polygon class=\"" + p->css_class + "\" points=\"";
      for (std::size_t i = 0; i < p->points.size(); ++i) {
        if (i) out += ' ';
        out += fixed2(p->points[i].x) + "," + fixed2(p->points[i].y);
      }
      out += "\" fill=\"" + (p->filled ? detail::rgb(p->fill) : std::string("none")) + "\"";
      if (p->filled && p->fill_opacity < 1.0) out += " fill-opacity=\"" + fixed2(p->fill_opacity) + "\"";
      out += " stroke=\"" + detail::rgb(p->stroke) + "\" stroke-width=\"" + fixed2(p->stroke_width) + "\"/>\n";
    } else if (const auto* l = std::get_if<draw::LineShape>(&shape)) {
      out += "<line class=\"" + l->css_class + "\" x1=\"" + fixed2(l->from.x) + "\" y1=\"" + fixed2(l->from.y) +
             "\" x2=\"" + fixed2(l->to.x) + "\" y2=\"" + fixed2(l->to.y) + "\" stroke=\"" +
             detail::rgb(l->stroke) + "\" stroke-width=\"" + fixed2(l->width) + "\"/>\n";
      if (l->arrow_head) detail::svg_arrow_head(out, *l);
    } else if (const auto* c = std::get_if<draw::CircleShape>(&shape)) {
      out += "<circle class=\"" + c->css_class + "\" cx=\"" + fixed2(c->center.x) + "\" cy=\"" +
             fixed2(c->center.y) + "\" r=\"" + fixed2(c->radius) + "\" fill=\"" + detail::rgb(c->fill) + "\"/>\n";
    } else if (const auto* t = std::get_if<draw::TextShape>(&shape)) {
      out += "<text class=\"" + t->css_class + "\" x=\"" + fixed2(t->position.x) + "\" y=\"" +
             fixed2(t->position.y) + "\" font-family=\"sans-serif\" font-size=\"" + fixed2(t->size) +
             "\" fill=\"" + detail::rgb(t->color) + "\"" +
             (t->anchor == draw::Anchor::kMiddle ? " text-anchor=\"middle\"" : "") + ">" +
             detail::xml_escape(t->text) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

/// SVG bytes of the top-down view. See render_png.hpp for raster output.
inline std::string render_topdown_svg(const SceneState& state, const RenderOptions& opts = {}) {
  return to_svg(topdown_canvas(state, opts));
}

inline std::string render_asset_panel_svg(const std::vector<AssetSpec>& assets, const RenderOptions& opts = {}) {
  return to_svg(asset_panel_canvas(assets, opts));
}

}  // namespace layoutvlm
