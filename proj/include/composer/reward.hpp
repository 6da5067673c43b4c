#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "composer/ppm.hpp"
#include "composer/raster.hpp"
#include "composer/scene.hpp"

namespace composer::reward {

constexpr int kNumDimensions = 9;

enum Dimension {
  kObj = 0, kBackg, kColor, kTexture, kLight, kText, kComp, kPose, kFx
};

const std::array<std::string_view, kNumDimensions>& dimension_names();

struct DimensionScores {
  std::array<double, kNumDimensions> scores{};
  double composite = 0.0;

  double operator[](int d) const { return scores[d]; }
  std::string to_json() const;
  static DimensionScores from_json(const std::string& text);
};

struct RewardWeights {
  std::array<double, kNumDimensions> w;

  static RewardWeights uniform();
  void validate() const;  // non-negative, sums to 1
};

// Best template-match per non-null ground-truth slot: the slot's shape mask
// slid on a stride-2 grid within +-8 px of its ground-truth box, scored by
// normalized cross-correlation against the image luminance (absolute value;
// contrast polarity is irrelevant on arbitrary backgrounds).
struct SlotMatch {
  int slot = 0;
  int dx = 0, dy = 0;   // pixel offset of the match from the gt position
  double corr = 0.0;    // |NCC| at the match; 0 under the zero-variance guard
  Box matched;          // gt box shifted by the match offset, normalized
};

struct MatchSet {
  std::vector<SlotMatch> matches;  // one entry per non-null gt slot, in order
};

MatchSet match_templates(const gen::ImageGrid& img, const dsl::Plan& gt);

// One dimension, recomputed from scratch (its own template matching and
// reference renders). The pipeline scorer below must agree bit-for-bit.
double score_dimension(int dim, const gen::ImageGrid& img, const dsl::Plan& gt);

// All nine dimensions with the matching and reference renders shared.
DimensionScores score_plan(const gen::ImageGrid& img, const dsl::Plan& gt,
                           const RewardWeights& w);

// The reward model proper: re-derives the ground-truth plan from the prompt
// text, so the plan that produced the image cannot influence its own score.
DimensionScores composite_reward(const gen::ImageGrid& img,
                                 const std::string& prompt_text,
                                 const RewardWeights& w);

}  // namespace composer::reward
