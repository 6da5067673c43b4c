#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace composer::dsl {

// Fixed closed-world vocabulary of the prompt language. Index order is part
// of the stable on-disk / prediction-head contract; never reorder.
struct Vocabulary {
  static constexpr int kNumObjects = 12;   // incl. null at index 0
  static constexpr int kNumColors = 8;
  static constexpr int kNumTextures = 4;
  static constexpr int kNumSizes = 3;
  static constexpr int kNumPoses = 8;      // k * 45 degrees
  static constexpr int kNumRelations = 7;  // incl. none at index 6
  static constexpr int kNumLights = 3;
  static constexpr int kNumEffects = 4;    // incl. none at index 0
  static constexpr int kNumGlyphs = 10;
  static constexpr int kMaxSlots = 8;

  static constexpr int kRelationNone = 6;
  static constexpr int kObjectNull = 0;
  static constexpr int kObjectGlyph = 11;
  static constexpr int kEffectNone = 0;
  static constexpr int kLightNormal = 1;
  static constexpr int kColorWhite = 6;
  static constexpr int kSizeMedium = 1;

  static const std::array<std::string_view, kNumObjects>& object_names();
  static const std::array<std::string_view, kNumColors>& color_names();
  static const std::array<std::string_view, kNumTextures>& texture_names();
  static const std::array<std::string_view, kNumSizes>& size_names();
  static const std::array<std::string_view, kNumRelations>& relation_names();
  static const std::array<std::string_view, kNumLights>& light_names();
  static const std::array<std::string_view, kNumEffects>& effect_names();
  static const std::array<char, kNumGlyphs>& glyph_alphabet();

  static std::optional<int> object_index(std::string_view w);
  static std::optional<int> color_index(std::string_view w);
  static std::optional<int> texture_index(std::string_view w);
  static std::optional<int> size_index(std::string_view w);
  static std::optional<int> relation_index(std::string_view w);
  static std::optional<int> light_index(std::string_view w);
  static std::optional<int> effect_index(std::string_view w);
  static std::optional<int> glyph_index(char c);  // case-insensitive

  // Normalized box side per size bin: small / medium / large.
  static double size_side(int size_idx);
  // Light multiplier applied to the background fill.
  static double light_factor(int light_idx);
  static std::array<double, 3> color_rgb(int color_idx);
  static int pose_degrees(int pose_idx) { return pose_idx * 45; }
  static int snap_pose(int degrees);  // nearest 45-degree bin
};

// Word-level token vocabulary of the prompt language, shared by the parser
// and the text encoder. Index 0 is the reserved pad token.
class TokenVocab {
 public:
  static const TokenVocab& instance();

  int size() const { return static_cast<int>(words_.size()); }
  int pad_index() const { return 0; }
  std::optional<int> index_of(const std::string& word) const;
  const std::string& word(int idx) const { return words_.at(idx); }

  // Lexes a prompt into vocabulary ids. Numeric tokens are snapped to the
  // nearest canonical value (pose bins / entity ordinals). Throws
  // std::out_of_range naming the word on unknown input.
  std::vector<int> tokenize(const std::string& text) const;

 private:
  TokenVocab();
  std::vector<std::string> words_;
};

double luminance(double r, double g, double b);

}  // namespace composer::dsl
