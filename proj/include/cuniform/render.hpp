#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuniform/dynamics.hpp"
#include "cuniform/world.hpp"

namespace cuniform {

struct Color {
    std::uint8_t r = 0, g = 0, b = 0;
};

namespace palette {
inline constexpr Color white{255, 255, 255};
inline constexpr Color black{0, 0, 0};
inline constexpr Color gray{170, 170, 170};
inline constexpr Color goal{60, 120, 235};
inline constexpr Color mppi{220, 40, 40};        // red
inline constexpr Color cu_mppi{40, 170, 70};     // green
inline constexpr Color log_mppi{235, 105, 180};  // pink
inline constexpr Color cu_logmppi{60, 200, 220}; // cyan
}  // namespace palette

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, top row first

    Image(int w, int h, Color fill = palette::white) : width(w), height(h) {
        rgb.resize(static_cast<std::size_t>(w) * h * 3);
        for (std::size_t i = 0; i < rgb.size(); i += 3) {
            rgb[i] = fill.r;
            rgb[i + 1] = fill.g;
            rgb[i + 2] = fill.b;
        }
    }

    void set(int x, int y, Color c) {
        if (x < 0 || x >= width || y < 0 || y >= height) return;
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[i] = c.r;
        rgb[i + 1] = c.g;
        rgb[i + 2] = c.b;
    }
};

inline void save_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
}

// Raster canvas over a world-coordinate rectangle, y up.
class Canvas {
public:
    Canvas(double x0, double y0, double x1, double y1, int px_width)
        : x0_(x0), y0_(y0),
          scale_(px_width / std::max(1e-9, x1 - x0)),
          img_(px_width, std::max(1, static_cast<int>(std::lround((y1 - y0) * px_width /
                                                                  std::max(1e-9, x1 - x0))))) {}

    Image& image() { return img_; }
    const Image& image() const { return img_; }

    int px(double x) const { return static_cast<int>(std::lround((x - x0_) * scale_)); }
    int py(double y) const { return img_.height - 1 - static_cast<int>(std::lround((y - y0_) * scale_)); }

    void draw_line(double xa, double ya, double xb, double yb, Color c) {
        int x1 = px(xa), y1 = py(ya), x2 = px(xb), y2 = py(yb);
        const int dx = std::abs(x2 - x1), sx = x1 < x2 ? 1 : -1;
        const int dy = -std::abs(y2 - y1), sy = y1 < y2 ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            img_.set(x1, y1, c);
            if (x1 == x2 && y1 == y2) break;
            const int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x1 += sx; }
            if (e2 <= dx) { err += dx; y1 += sy; }
        }
    }

    void draw_polyline(const Trajectory& traj, Color c) {
        for (std::size_t t = 0; t + 1 < traj.size(); ++t)
            draw_line(traj[t].x, traj[t].y, traj[t + 1].x, traj[t + 1].y, c);
    }

    void draw_circle(double cx, double cy, double radius, Color c, bool filled) {
        const int r_px = std::max(1, static_cast<int>(std::lround(radius * scale_)));
        const int cx_px = px(cx), cy_px = py(cy);
        for (int dy = -r_px; dy <= r_px; ++dy) {
            for (int dx = -r_px; dx <= r_px; ++dx) {
                const int d2 = dx * dx + dy * dy;
                if (d2 > r_px * r_px) continue;
                if (!filled && d2 < (r_px - 1) * (r_px - 1)) continue;
                img_.set(cx_px + dx, cy_px + dy, c);
            }
        }
    }

    void draw_grid(const OccupancyGrid& g, Color c) {
        for (int iy = 0; iy < g.height; ++iy)
            for (int ix = 0; ix < g.width; ++ix) {
                if (!g.at(ix, iy)) continue;
                const int xa = px(g.origin_x + ix * g.resolution);
                const int xb = px(g.origin_x + (ix + 1) * g.resolution);
                const int ya = py(g.origin_y + (iy + 1) * g.resolution);
                const int yb = py(g.origin_y + iy * g.resolution);
                for (int y = ya; y <= yb; ++y)
                    for (int x = xa; x <= xb; ++x) img_.set(x, y, c);
            }
    }

private:
    double x0_, y0_, scale_;
    Image img_;
};

// Minimal vector sibling of the raster output.
class SvgWriter {
public:
    SvgWriter(double x0, double y0, double x1, double y1, double px_width)
        : x0_(x0), y1_(y1), scale_(px_width / std::max(1e-9, x1 - x0)),
          width_(px_width), height_((y1 - y0) * scale_) {}

    void polyline(const Trajectory& traj, Color c, double stroke = 1.0) {
        body_ << "<polyline fill=\"none\" stroke=\"" << hex(c) << "\" stroke-width=\"" << stroke
              << "\" points=\"";
        for (std::size_t t = 0; t < traj.size(); ++t)
            body_ << fmt((traj[t].x - x0_) * scale_) << ',' << fmt((y1_ - traj[t].y) * scale_)
                  << (t + 1 < traj.size() ? " " : "");
        body_ << "\"/>\n";
    }

    void circle(double cx, double cy, double r, Color c, bool filled) {
        body_ << "<circle cx=\"" << fmt((cx - x0_) * scale_) << "\" cy=\""
              << fmt((y1_ - cy) * scale_) << "\" r=\"" << fmt(r * scale_) << "\" ";
        if (filled)
            body_ << "fill=\"" << hex(c) << "\"/>\n";
        else
            body_ << "fill=\"none\" stroke=\"" << hex(c) << "\"/>\n";
    }

    void rect(double x, double y, double w, double h, Color c) {
        body_ << "<rect x=\"" << fmt((x - x0_) * scale_) << "\" y=\"" << fmt((y1_ - y - h) * scale_)
              << "\" width=\"" << fmt(w * scale_) << "\" height=\"" << fmt(h * scale_)
              << "\" fill=\"" << hex(c) << "\"/>\n";
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open for writing: " + path);
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width_)
            << "\" height=\"" << fmt(height_) << "\">\n"
            << body_.str() << "</svg>\n";
    }

private:
    static std::string hex(Color c) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
        return buf;
    }
    static std::string fmt(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return buf;
    }

    double x0_, y1_, scale_, width_, height_;
    std::ostringstream body_;
};

}  // namespace cuniform
