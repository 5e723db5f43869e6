#pragma once

// Raster backend for the draw list in render.hpp (8-bit RGBA PNG via OpenCV),
// plus the format-dispatching render entry points.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "layoutvlm/render.hpp"

namespace layoutvlm {

namespace detail {

inline cv::Scalar bgra(const Rgb& c, double alpha = 1.0) {
  return cv::Scalar(c.b, c.g, c.r, 255.0 * alpha);
}

inline cv::Point to_cv(Vec2 p) {
  return {static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
}

}  // namespace detail

inline std::string to_png(const draw::Canvas& canvas) {
  cv::Mat image(canvas.height, canvas.width, CV_8UC4, cv::Scalar(255, 255, 255, 255));
  for (const auto& shape : canvas.shapes) {
    if (const auto* p = std::get_if<draw::PolygonShape>(&shape)) {
      std::vector<cv::Point> pts;
      for (const auto& v : p->points) pts.push_back(detail::to_cv(v));
      if (p->filled) {
        if (p->fill_opacity < 1.0) {
          cv::Mat overlay = image.clone();
          cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{pts}, detail::bgra(p->fill), cv::LINE_AA);
          cv::addWeighted(overlay, p->fill_opacity, image, 1.0 - p->fill_opacity, 0.0, image);
        } else {
          cv::fillPoly(image, std::vector<std::vector<cv::Point>>{pts}, detail::bgra(p->fill), cv::LINE_AA);
        }
      }
      cv::polylines(image, std::vector<std::vector<cv::Point>>{pts}, true, detail::bgra(p->stroke),
                    std::max(1, static_cast<int>(std::lround(p->stroke_width))), cv::LINE_AA);
    } else if (const auto* l = std::get_if<draw::LineShape>(&shape)) {
      const int w = std::max(1, static_cast<int>(std::lround(l->width)));
      if (l->arrow_head) {
        const double len = std::hypot(l->to.x - l->from.x, l->to.y - l->from.y);
        const double tip = len > 0.0 ? std::min(0.5, (6.0 + 2.0 * l->width) / len) : 0.1;
        cv::arrowedLine(image, detail::to_cv(l->from), detail::to_cv(l->to), detail::bgra(l->stroke), w,
                        cv::LINE_AA, 0, tip);
      } else {
        cv::line(image, detail::to_cv(l->from), detail::to_cv(l->to), detail::bgra(l->stroke), w, cv::LINE_AA);
      }
    } else if (const auto* c = std::get_if<draw::CircleShape>(&shape)) {
      cv::circle(image, detail::to_cv(c->center), std::max(1, static_cast<int>(std::lround(c->radius))),
                 detail::bgra(c->fill), cv::FILLED, cv::LINE_AA);
    } else if (const auto* t = std::get_if<draw::TextShape>(&shape)) {
      const double scale = t->size / 24.0;
      int baseline = 0;
      const cv::Size size = cv::getTextSize(t->text, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline);
      cv::Point origin = detail::to_cv(t->position);
      if (t->anchor == draw::Anchor::kMiddle) origin.x -= size.width / 2;
      cv::putText(image, t->text, origin, cv::FONT_HERSHEY_SIMPLEX, scale, detail::bgra(t->color), 1,
                  cv::LINE_AA);
    }
  }
  std::vector<uchar> bytes;
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imencode(".png", image, bytes, params)) throw Error("render: PNG encoding failed");
  return {bytes.begin(), bytes.end()};
}

inline std::string render_canvas(const draw::Canvas& canvas, ImageFormat format) {
  return format == ImageFormat::kPng ? to_png(canvas) : to_svg(canvas);
}

/// Image bytes of the top-down view in `opts.format`.
inline std::string render_topdown(const SceneState& state, const RenderOptions& opts = {}) {
  return render_canvas(topdown_canvas(state, opts), opts.format);
}

/// One card per asset, four per row.
inline std::string render_asset_panel(const std::vector<AssetSpec>& assets, const RenderOptions& opts = {}) {
  return render_canvas(asset_panel_canvas(assets, opts), opts.format);
}

inline std::string media_type(ImageFormat format) {
  return format == ImageFormat::kPng ? "image/png" : "image/svg+xml";
}

}  // namespace layoutvlm
