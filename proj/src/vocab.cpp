#include "composer/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace composer::dsl {

namespace {

template <typename Arr>
std::optional<int> find_in(const Arr& arr, std::string_view w) {
  for (size_t i = 0; i < arr.size(); ++i)
    if (arr[i] == w) return static_cast<int>(i);
  return std::nullopt;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

const std::array<std::string_view, Vocabulary::kNumObjects>& Vocabulary::object_names() {
  static const std::array<std::string_view, kNumObjects> v = {
      "null", "circle", "square", "triangle", "star", "ellipse",
      "diamond", "arrow", "heart", "cross", "ring", "glyph"};
  return v;
}

const std::array<std::string_view, Vocabulary::kNumColors>& Vocabulary::color_names() {
  static const std::array<std::string_view, kNumColors> v = {
      "red", "green", "blue", "yellow", "purple", "orange", "white", "black"};
  return v;
}

const std::array<std::string_view, Vocabulary::kNumTextures>& Vocabulary::texture_names() {
  static const std::array<std::string_view, kNumTextures> v = {"solid", "striped",
                                                               "dotted", "checker"};
  return v;
}

const std::array<std::string_view, Vocabulary::kNumSizes>& Vocabulary::size_names() {
  static const std::array<std::string_view, kNumSizes> v = {"small", "medium", "large"};
  return v;
}

const std::array<std::string_view, Vocabulary::kNumRelations>& Vocabulary::relation_names() {
  static const std::array<std::string_view, kNumRelations> v = {
      "left-of", "right-of", "above", "below", "inside", "overlapping", "none"};
  return v;
}

const std::array<std::string_view, Vocabulary::kNumLights>& Vocabulary::light_names() {
  static const std::array<std::string_view, kNumLights> v = {"dim", "normal", "bright"};
  return v;
}

const std::array<std::string_view, Vocabulary::kNumEffects>& Vocabulary::effect_names() {
  static const std::array<std::string_view, kNumEffects> v = {"none", "glow", "blur",
                                                              "sparkle"};
  return v;
}

const std::array<char, Vocabulary::kNumGlyphs>& Vocabulary::glyph_alphabet() {
  static const std::array<char, kNumGlyphs> v = {'A', 'B', 'C', 'E', 'F',
                                                 'H', 'L', 'O', 'T', 'X'};
  return v;
}

std::optional<int> Vocabulary::object_index(std::string_view w) {
  return find_in(object_names(), w);
}
std::optional<int> Vocabulary::color_index(std::string_view w) {
  return find_in(color_names(), w);
}
std::optional<int> Vocabulary::texture_index(std::string_view w) {
  return find_in(texture_names(), w);
}
std::optional<int> Vocabulary::size_index(std::string_view w) {
  return find_in(size_names(), w);
}
std::optional<int> Vocabulary::relation_index(std::string_view w) {
  auto i = find_in(relation_names(), w);
  if (i && *i == kRelationNone) return std::nullopt;  // "none" is not a keyword
  return i;
}
std::optional<int> Vocabulary::light_index(std::string_view w) {
  return find_in(light_names(), w);
}
std::optional<int> Vocabulary::effect_index(std::string_view w) {
  auto i = find_in(effect_names(), w);
  if (i && *i == kEffectNone) return std::nullopt;
  return i;
}

std::optional<int> Vocabulary::glyph_index(char c) {
  char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  const auto& a = glyph_alphabet();
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] == u) return static_cast<int>(i);
  return std::nullopt;
}

double Vocabulary::size_side(int size_idx) {
  switch (size_idx) {
    case 0: return 0.15;
    case 1: return 0.25;
    case 2: return 0.40;
    default: throw std::out_of_range("size_side: bad index");
  }
}

double Vocabulary::light_factor(int light_idx) {
  switch (light_idx) {
    case 0: return 0.6;
    case 1: return 1.0;
    case 2: return 1.3;
    default: throw std::out_of_range("light_factor: bad index");
  }
}

std::array<double, 3> Vocabulary::color_rgb(int color_idx) {
  switch (color_idx) {
    case 0: return {1.0, 0.0, 0.0};   // red
    case 1: return {0.0, 1.0, 0.0};   // green
    case 2: return {0.0, 0.0, 1.0};   // blue
    case 3: return {1.0, 1.0, 0.0};   // yellow
    case 4: return {0.5, 0.0, 0.5};   // purple
    case 5: return {1.0, 0.5, 0.0};   // orange
    case 6: return {1.0, 1.0, 1.0};   // white
    case 7: return {0.0, 0.0, 0.0};   // black
    default: throw std::out_of_range("color_rgb: bad index");
  }
}

int Vocabulary::snap_pose(int degrees) {
  int d = ((degrees % 360) + 360) % 360;
  int bin = static_cast<int>(std::lround(d / 45.0)) % kNumPoses;
  return bin;
}

double luminance(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

const TokenVocab& TokenVocab::instance() {
  static const TokenVocab v;
  return v;
}

TokenVocab::TokenVocab() {
  words_.push_back("<pad>");
  for (const char* w : {";", ",", "a", "on", "background", "light", "with",
                        "rotated", "degrees", "entity"})
    words_.push_back(w);
  auto push_all = [&](const auto& arr, size_t from = 0) {
    for (size_t i = from; i < arr.size(); ++i) words_.push_back(std::string(arr[i]));
  };
  push_all(Vocabulary::size_names());
  push_all(Vocabulary::color_names());
  push_all(Vocabulary::texture_names());
  push_all(Vocabulary::object_names(), 1);  // "null" never appears in prompts
  push_all(Vocabulary::light_names());
  for (size_t i = 1; i < Vocabulary::effect_names().size(); ++i)
    words_.push_back(std::string(Vocabulary::effect_names()[i]));
  for (size_t i = 0; i + 1 < Vocabulary::relation_names().size(); ++i)
    words_.push_back(std::string(Vocabulary::relation_names()[i]));
  for (char c : Vocabulary::glyph_alphabet()) {
    std::string q = "'";
    q += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    q += "'";
    words_.push_back(q);
  }
  for (int k = 1; k < Vocabulary::kNumPoses; ++k)
    words_.push_back(std::to_string(45 * k));
  for (int k = 1; k <= Vocabulary::kMaxSlots; ++k)
    words_.push_back(std::to_string(k));
}

std::optional<int> TokenVocab::index_of(const std::string& word) const {
  for (size_t i = 0; i < words_.size(); ++i)
    if (words_[i] == word) return static_cast<int>(i);
  return std::nullopt;
}

std::vector<int> TokenVocab::tokenize(const std::string& text) const {
  std::vector<int> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    unsigned char c = text[i];
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::string tok;
    if (c == ';' || c == ',') {
      tok = std::string(1, static_cast<char>(c));
      ++i;
    } else if (c == '\'') {
      size_t j = i + 1;
      while (j < n && text[j] != '\'') ++j;
      tok = lower(text.substr(i, j < n ? j - i + 1 : n - i));
      i = (j < n) ? j + 1 : n;
    } else if (std::isdigit(c)) {
      size_t j = i;
      while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      int v = std::stoi(text.substr(i, j - i));
      if (v > Vocabulary::kMaxSlots) {
        // pose value: snap to the canonical bin word
        int bin = Vocabulary::snap_pose(v);
        if (bin == 0) {
          i = j;
          continue;  // 0 degrees never appears in canonical prompts
        }
        tok = std::to_string(45 * bin);
      } else {
        tok = std::to_string(v);
      }
      i = j;
    } else {
      size_t j = i;
      while (j < n) {
        unsigned char cj = text[j];
        if (std::isalpha(cj) || cj == '-') ++j;
        else break;
      }
      if (j == i) throw std::out_of_range("tokenize: unexpected character '" +
                                          std::string(1, text[i]) + "'");
      tok = lower(text.substr(i, j - i));
      i = j;
    }
    auto idx = index_of(tok);
    if (!idx) throw std::out_of_range("tokenize: unknown word '" + tok + "'");
    out.push_back(*idx);
  }
  return out;
}

}  // namespace composer::dsl
