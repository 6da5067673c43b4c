#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace composer {

// Axis-aligned box in normalized [0,1] image coordinates, y down.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 1.0, y2 = 1.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  static Box from_center(double cx, double cy, double w, double h) {
    return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool strictly_inside(const Box& outer) const {
    return x1 > outer.x1 && y1 > outer.y1 && x2 < outer.x2 && y2 < outer.y2;
  }

  friend bool operator==(const Box& a, const Box& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
  }
};

inline double intersection_area(const Box& a, const Box& b) {
  double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return std::max(0.0, w) * std::max(0.0, h);
}

inline double iou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// IoU minus the normalized empty area of the smallest enclosing box; in (-1,1].
inline double giou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  double hw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  double hh = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  double hull = hw * hh;
  double i = uni > 0.0 ? inter / uni : 0.0;
  return hull > 0.0 ? i - (hull - uni) / hull : i;
}

// Spatial predicates used both by ground-truth placement and by the
// composition scorer. The margin keeps centroid comparisons off knife edges.
constexpr double kRelationMargin = 0.05;
constexpr double kOverlapIoUThreshold = 0.05;

inline bool relation_holds(int relation, const Box& a, const Box& b,
                           double margin = kRelationMargin) {
  switch (relation) {
    case 0: return a.cx() < b.cx() - margin;            // left-of
    case 1: return a.cx() > b.cx() + margin;            // right-of
    case 2: return a.cy() < b.cy() - margin;            // above
    case 3: return a.cy() > b.cy() + margin;            // below
    case 4: return a.strictly_inside(b);                // inside
    case 5: return iou(a, b) > kOverlapIoUThreshold;    // overlapping
    default: return true;                               // none
  }
}

}  // namespace composer
