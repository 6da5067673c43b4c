#include "composer/raster.hpp"

#include <algorithm>
#include <cmath>

#include "composer/rng.hpp"

namespace composer::gen {

using dsl::Plan;
using dsl::PlanningToken;
using dsl::Vocabulary;

namespace {

constexpr int kS = ImageGrid::kSize;

// 5x7 bitmap font for the glyph alphabet A B C E F H L O T X.
const char* const kGlyphRows[Vocabulary::kNumGlyphs][7] = {
    {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"},  // A
    {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."},  // B
    {".####", "#....", "#....", "#....", "#....", "#....", ".####"},  // C
    {"#####", "#....", "#....", "####.", "#....", "#....", "#####"},  // E
    {"#####", "#....", "#....", "####.", "#....", "#....", "#...."},  // F
    {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"},  // H
    {"#....", "#....", "#....", "#....", "#....", "#....", "#####"},  // L
    {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."},  // O
    {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."},  // T
    {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"},  // X
};

bool point_in_polygon(double u, double v, const double* xs, const double* ys,
                      int n) {
  bool in = false;
  for (int i = 0, j = n - 1; i < n; j = i++) {
    if ((ys[i] > v) != (ys[j] > v) &&
        u < (xs[j] - xs[i]) * (v - ys[i]) / (ys[j] - ys[i]) + xs[i])
      in = !in;
  }
  return in;
}

bool star_test(double u, double v) {
  static double xs[10], ys[10];
  static bool init = false;
  if (!init) {
    const double outer = 1.0, inner = 0.45;
    for (int k = 0; k < 5; ++k) {
      double ao = -1.5707963267948966 + k * 1.2566370614359172;
      double ai = ao + 0.6283185307179586;
      xs[2 * k] = outer * std::cos(ao);
      ys[2 * k] = outer * std::sin(ao);
      xs[2 * k + 1] = inner * std::cos(ai);
      ys[2 * k + 1] = inner * std::sin(ai);
    }
    init = true;
  }
  return point_in_polygon(u, v, xs, ys, 10);
}

bool heart_test(double u, double v) {
  double x = 1.2 * u;
  double y = 1.2 * (-v) + 0.25;
  double q = x * x + y * y - 1.0;
  return q * q * q - x * x * y * y * y <= 0.0;
}

bool glyph_test(int glyph, double u, double v) {
  if (u < -1.0 || u > 1.0 || v < -1.0 || v > 1.0) return false;
  int col = std::clamp(static_cast<int>((u + 1.0) * 0.5 * 5.0), 0, 4);
  int row = std::clamp(static_cast<int>((v + 1.0) * 0.5 * 7.0), 0, 6);
  return kGlyphRows[glyph][row][col] == '#';
}

bool unit_shape_test(int object, int glyph, double u, double v) {
  switch (object) {
    case 1: return u * u + v * v <= 1.0;                       // circle
    case 2: return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;   // square
    case 3:                                                     // triangle (up)
      return v >= -1.0 && v <= 1.0 && std::abs(u) <= 0.5 * (v + 1.0);
    case 4: return star_test(u, v);                             // star
    case 5: {                                                   // ellipse (wide)
      double vv = v / 0.6;
      return u * u + vv * vv <= 1.0;
    }
    case 6: return std::abs(u) + std::abs(v) <= 1.0;            // diamond
    case 7: {                                                   // arrow (right)
      if (u >= -1.0 && u <= 0.1 && std::abs(v) <= 0.3) return true;
      if (u > 0.1 && u <= 1.0) return std::abs(v) <= 0.8 * (1.0 - u) / 0.9;
      return false;
    }
    case 8: return heart_test(u, v);                            // heart
    case 9:                                                     // cross
      return (std::abs(u) <= 0.35 && std::abs(v) <= 1.0) ||
             (std::abs(v) <= 0.35 && std::abs(u) <= 1.0);
    case 10: {                                                  // ring
      double r2 = u * u + v * v;
      return r2 >= 0.55 * 0.55 && r2 <= 1.0;
    }
    case 11: return glyph_test(glyph, u, v);                    // glyph
    default: return false;
  }
}

}  // namespace

void ImageGrid::clamp01() {
  for (double& v : data) v = std::clamp(v, 0.0, 1.0);
}

bool shape_covers(const PlanningToken& t, double px, double py) {
  const double x1 = t.bbox.x1 * kS, x2 = t.bbox.x2 * kS;
  const double y1 = t.bbox.y1 * kS, y2 = t.bbox.y2 * kS;
  if (px < x1 || px >= x2 || py < y1 || py >= y2) return false;
  const double cx = 0.5 * (x1 + x2), cy = 0.5 * (y1 + y2);
  const double hw = 0.5 * (x2 - x1), hh = 0.5 * (y2 - y1);
  double dx = px - cx, dy = py - cy;
  if (t.pose != 0) {
    const double a = t.pose * 0.7853981633974483;  // 45 degrees per bin
    const double c = std::cos(a), s = std::sin(a);
    double rx = c * dx + s * dy;
    double ry = -s * dx + c * dy;
    dx = rx;
    dy = ry;
  }
  return unit_shape_test(t.object, t.glyph, dx / hw, dy / hh);
}

double texture_factor(int texture, int x, int y) {
  switch (texture) {
    case 1: return (y / 4) % 2 == 0 ? 1.0 : 0.6;                  // striped
    case 2: return (x % 3 == 1 && y % 3 == 1) ? 0.55 : 1.0;       // dotted
    case 3: return ((x / 4) + (y / 4)) % 2 == 0 ? 1.0 : 0.6;      // checker
    default: return 1.0;                                          // solid
  }
}

std::array<double, 3> effective_background(const dsl::SceneGlobals& g) {
  auto rgb = Vocabulary::color_rgb(g.background);
  double f = Vocabulary::light_factor(g.light);
  return {std::clamp(rgb[0] * f, 0.0, 1.0), std::clamp(rgb[1] * f, 0.0, 1.0),
          std::clamp(rgb[2] * f, 0.0, 1.0)};
}

ImageGrid box_blur3(const ImageGrid& img) {
  ImageGrid out;
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int xx = std::clamp(x + dx, 0, kS - 1);
            int yy = std::clamp(y + dy, 0, kS - 1);
            s += img.at(xx, yy, c);
          }
        out.at(x, y, c) = s / 9.0;
      }
  return out;
}

namespace {

std::vector<double> union_shape_mask(const Plan& plan) {
  std::vector<double> mask(static_cast<size_t>(kS) * kS, 0.0);
  const int n = plan.slot_count();
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x)
      for (int i = 0; i < n; ++i)
        if (shape_covers(plan.slots[i], x + 0.5, y + 0.5)) {
          mask[static_cast<size_t>(y) * kS + x] = 1.0;
          break;
        }
  return mask;
}

std::vector<double> blur_mask3(const std::vector<double>& m) {
  std::vector<double> out(m.size(), 0.0);
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int xx = std::clamp(x + dx, 0, kS - 1);
          int yy = std::clamp(y + dy, 0, kS - 1);
          s += m[static_cast<size_t>(yy) * kS + xx];
        }
      out[static_cast<size_t>(y) * kS + x] = s / 9.0;
    }
  return out;
}

bool inside_any_bbox(const Plan& plan, int x, int y, double pad_px) {
  const int n = plan.slot_count();
  for (int i = 0; i < n; ++i) {
    const Box& b = plan.slots[i].bbox;
    if (x + 0.5 >= b.x1 * kS - pad_px && x + 0.5 <= b.x2 * kS + pad_px &&
        y + 0.5 >= b.y1 * kS - pad_px && y + 0.5 <= b.y2 * kS + pad_px)
      return true;
  }
  return false;
}

}  // namespace

ImageGrid rasterize(const Plan& plan) {
  plan.validate();
  ImageGrid img;
  const auto bg = effective_background(plan.globals);
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = bg[c];

  const int n = plan.slot_count();
  for (int i = 0; i < n; ++i) {
    const PlanningToken& t = plan.slots[i];
    const auto rgb = Vocabulary::color_rgb(t.color);
    const int x_lo = std::max(0, static_cast<int>(std::floor(t.bbox.x1 * kS)));
    const int x_hi = std::min(kS - 1, static_cast<int>(std::ceil(t.bbox.x2 * kS)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(t.bbox.y1 * kS)));
    const int y_hi = std::min(kS - 1, static_cast<int>(std::ceil(t.bbox.y2 * kS)));
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x)
        if (shape_covers(t, x + 0.5, y + 0.5)) {
          double f = texture_factor(t.texture, x, y);
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c] * f;
        }
  }

  switch (plan.globals.effect) {
    case 1: {  // glow: additive halo outside the shapes
      auto mask = union_shape_mask(plan);
      auto halo = blur_mask3(blur_mask3(mask));
      for (int y = 0; y < kS; ++y)
        for (int x = 0; x < kS; ++x) {
          size_t k = static_cast<size_t>(y) * kS + x;
          double add = 0.25 * halo[k] * (1.0 - mask[k]);
          for (int c = 0; c < 3; ++c) img.at(x, y, c) += add;
        }
      break;
    }
    case 2:  // blur: whole-image 3x3 box filter
      img = box_blur3(img);
      break;
    case 3: {  // sparkle: 16 seeded isolated white dots on the background
      Rng rng(plan.content_hash());
      std::vector<std::pair<int, int>> dots;
      for (int d = 0; d < 16; ++d) {
        int bx = -1, by = -1;
        for (int attempt = 0; attempt < 200; ++attempt) {
          int x = 1 + rng.uniform_int(kS - 2);
          int y = 1 + rng.uniform_int(kS - 2);
          bool clear = !inside_any_bbox(plan, x, y, 1.0);
          for (auto& [ox, oy] : dots)
            if (std::abs(ox - x) < 3 && std::abs(oy - y) < 3) clear = false;
          if (clear || attempt == 199) {
            bx = x;
            by = y;
            if (clear) break;
          }
        }
        dots.emplace_back(bx, by);
        for (int c = 0; c < 3; ++c) img.at(bx, by, c) = 1.0;
      }
      break;
    }
    default:
      break;
  }

  img.clamp01();
  return img;
}

double pixel_luminance(const ImageGrid& img, int x, int y) {
  return dsl::luminance(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
}

std::vector<double> luminance_image(const ImageGrid& img) {
  std::vector<double> out(static_cast<size_t>(kS) * kS);
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x)
      out[static_cast<size_t>(y) * kS + x] = pixel_luminance(img, x, y);
  return out;
}

}  // namespace composer::gen
