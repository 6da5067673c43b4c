#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "composer/plan.hpp"

namespace composer::gen {

// 64x64 RGB raster with intensities in [0,1], row-major (y, x, channel).
struct ImageGrid {
  static constexpr int kSize = 64;
  static constexpr int kChannels = 3;

  std::vector<double> data;

  ImageGrid() : data(static_cast<size_t>(kSize) * kSize * kChannels, 0.0) {}

  double& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * kSize + x) * kChannels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * kSize + x) * kChannels + c];
  }

  void clamp01();

  friend bool operator==(const ImageGrid& a, const ImageGrid& b) {
    return a.data == b.data;
  }
};

// True when the pixel center (px, py), in pixel units, falls on the slot's
// shape: inside the bounding box and passing the analytic mask test after
// inverse rotation about the box center.
bool shape_covers(const dsl::PlanningToken& token, double px, double py);

// Texture intensity multiplier in absolute image coordinates, so a reference
// patch rendered at the same location has the same phase.
double texture_factor(int texture, int x, int y);

// Deterministic renderer: background fill scaled by the light level, then
// each non-null slot in order (color times texture), then the post effect
// (glow halo / 3x3 box blur / 16 seeded sparkle dots).
ImageGrid rasterize(const dsl::Plan& plan);

double pixel_luminance(const ImageGrid& img, int x, int y);
std::vector<double> luminance_image(const ImageGrid& img);

// 3x3 box filter with edge replication; shared by the blur effect and the
// glow halo construction.
ImageGrid box_blur3(const ImageGrid& img);

// Background color after the light multiplier, clamped.
std::array<double, 3> effective_background(const dsl::SceneGlobals& globals);

}  // namespace composer::gen
