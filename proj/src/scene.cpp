#include "composer/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "composer/rng.hpp"

namespace composer::dsl {

namespace {

constexpr std::uint64_t kSymStream = 0x5c33u;
constexpr std::uint64_t kPlaceStream = 0x9a1cu;

std::string verbalize_prefix(const Plan& plan, int count);

constexpr double kBorderMargin = 0.04;
constexpr double kPlaceSlack = 0.02;   // on top of the relation margin
constexpr double kInsideMargin = 0.02;
constexpr double kAnchorOverlapLimit = 0.15;
constexpr int kMaxPlaceAttempts = 1000;
constexpr int kRelaxAfter = 500;

// ---------------------------------------------------------------------------
// Lexer

enum class TokKind { Word, Number, Semicolon, Comma, Glyph };

struct Token {
  TokKind kind;
  std::string word;  // lowercased
  int number = 0;
  char glyph = 0;
  size_t begin = 0;
  size_t end = 0;
};

std::vector<Token> lex(const std::string& text) {
  std::vector<Token> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    unsigned char c = text[i];
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    Token t;
    t.begin = i;
    if (c == ';') {
      t.kind = TokKind::Semicolon;
      ++i;
    } else if (c == ',') {
      t.kind = TokKind::Comma;
      ++i;
    } else if (c == '\'') {
      size_t j = i + 1;
      if (j >= n || text[j] == '\'')
        throw ParseError(i, "empty glyph quote");
      char g = text[j];
      ++j;
      if (j >= n || text[j] != '\'')
        throw ParseError(i, "unterminated glyph quote");
      t.kind = TokKind::Glyph;
      t.glyph = g;
      i = j + 1;
    } else if (std::isdigit(c)) {
      size_t j = i;
      long v = 0;
      while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) {
        v = v * 10 + (text[j] - '0');
        if (v > 1000000) throw ParseError(i, "number too large");
        ++j;
      }
      t.kind = TokKind::Number;
      t.number = static_cast<int>(v);
      i = j;
    } else if (std::isalpha(c)) {
      size_t j = i;
      while (j < n) {
        unsigned char cj = text[j];
        if (std::isalpha(cj) || cj == '-') ++j;
        else break;
      }
      t.kind = TokKind::Word;
      t.word = text.substr(i, j - i);
      std::transform(t.word.begin(), t.word.end(), t.word.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      i = j;
    } else {
      throw ParseError(i, std::string("unexpected character '") +
                              static_cast<char>(c) + "'");
    }
    t.end = i;
    out.push_back(std::move(t));
  }
  return out;
}

bool known_word(const std::string& w) {
  static const char* keywords[] = {"a", "on", "background", "light", "with",
                                   "rotated", "degrees", "entity"};
  for (const char* k : keywords)
    if (w == k) return true;
  return Vocabulary::object_index(w) || Vocabulary::color_index(w) ||
         Vocabulary::texture_index(w) || Vocabulary::size_index(w) ||
         Vocabulary::relation_index(w) || Vocabulary::light_index(w) ||
         Vocabulary::effect_index(w);
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text), toks_(lex(text)) {}

  PromptAST parse() {
    PromptAST ast;
    if (toks_.empty()) throw ParseError(0, "empty prompt");
    if (peek_word("on")) {
      ast.scene = parse_scene();
      expect_semicolon("expected ';' after scene clause");
    }
    while (true) {
      if (ast.entities.size() >= Vocabulary::kMaxSlots)
        throw ParseError(cur_offset(), "too many entities (max 8)");
      ast.entities.push_back(parse_entity(static_cast<int>(ast.entities.size())));
      if (pos_ >= toks_.size()) break;
      expect_semicolon("expected ';' between entities");
      if (pos_ >= toks_.size())
        throw ParseError(text_.size(), "trailing ';' without an entity");
    }
    return ast;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  bool done() const { return pos_ >= toks_.size(); }
  size_t cur_offset() const { return done() ? text_.size() : cur().begin; }

  bool peek_word(const char* w) const {
    return !done() && cur().kind == TokKind::Word && cur().word == w;
  }

  void expect_word(const char* w, const char* what) {
    if (!peek_word(w))
      throw ParseError(cur_offset(), std::string("expected '") + w + "' " + what);
    ++pos_;
  }

  void expect_semicolon(const char* msg) {
    if (done() || cur().kind != TokKind::Semicolon)
      throw ParseError(cur_offset(), msg);
    ++pos_;
  }

  [[noreturn]] void fail_word(const Token& t, const std::string& expected) {
    if (t.kind == TokKind::Word && !known_word(t.word))
      throw ParseError(t.begin, "unknown word '" + t.word + "'");
    throw ParseError(t.begin, "expected " + expected);
  }

  SceneClause parse_scene() {
    SceneClause sc;
    sc.span.begin = cur().begin;
    expect_word("on", "to open the scene clause");
    expect_word("a", "after 'on'");
    if (done() || cur().kind != TokKind::Word)
      throw ParseError(cur_offset(), "expected background color");
    auto col = Vocabulary::color_index(cur().word);
    if (!col) fail_word(cur(), "background color");
    sc.background = *col;
    ++pos_;
    expect_word("background", "after the color");
    while (!done() && cur().kind == TokKind::Comma) {
      ++pos_;
      if (peek_word("with")) {
        ++pos_;
        if (done() || cur().kind != TokKind::Word)
          throw ParseError(cur_offset(), "expected effect name after 'with'");
        auto fx = Vocabulary::effect_index(cur().word);
        if (!fx) fail_word(cur(), "effect name");
        sc.effect = *fx;
        ++pos_;
      } else {
        if (done() || cur().kind != TokKind::Word)
          throw ParseError(cur_offset(), "expected light level");
        auto li = Vocabulary::light_index(cur().word);
        if (!li) fail_word(cur(), "light level");
        sc.light = *li;
        ++pos_;
        expect_word("light", "after the light level");
      }
    }
    sc.span.end = pos_ > 0 ? toks_[pos_ - 1].end : sc.span.begin;
    return sc;
  }

  EntityClause parse_entity(int index) {
    EntityClause e;
    if (done()) throw ParseError(cur_offset(), "expected an entity clause");
    e.span.begin = cur().begin;
    expect_word("a", "to open an entity clause");

    // [SIZE] COLOR [TEXTURE] OBJECT
    if (!done() && cur().kind == TokKind::Word) {
      if (auto s = Vocabulary::size_index(cur().word)) {
        e.size = *s;
        ++pos_;
      }
    }
    if (done() || cur().kind != TokKind::Word)
      throw ParseError(cur_offset(), "expected a color");
    if (auto c = Vocabulary::color_index(cur().word)) {
      e.color = *c;
      ++pos_;
    } else {
      fail_word(cur(), "a color");
    }
    if (!done() && cur().kind == TokKind::Word) {
      if (auto t = Vocabulary::texture_index(cur().word)) {
        e.texture = *t;
        ++pos_;
      }
    }
    if (done() || cur().kind != TokKind::Word ||
        !Vocabulary::object_index(cur().word) ||
        *Vocabulary::object_index(cur().word) == Vocabulary::kObjectNull) {
      if (!done() && cur().kind == TokKind::Word && !known_word(cur().word))
        throw ParseError(cur().begin, "unknown word '" + cur().word + "'");
      throw ParseError(cur_offset(), "missing object noun");
    }
    e.object = *Vocabulary::object_index(cur().word);
    ++pos_;

    // ["'" GLYPHCHAR "'"]
    if (!done() && cur().kind == TokKind::Glyph) {
      if (e.object != Vocabulary::kObjectGlyph)
        throw ParseError(cur().begin, "glyph character on a non-glyph object");
      auto gi = Vocabulary::glyph_index(cur().glyph);
      if (!gi)
        throw ParseError(cur().begin, std::string("unknown glyph '") +
                                          cur().glyph + "'");
      e.glyph = *gi;
      ++pos_;
    }

    // ["rotated" INT "degrees"]
    if (peek_word("rotated")) {
      ++pos_;
      if (done() || cur().kind != TokKind::Number)
        throw ParseError(cur_offset(), "expected an angle after 'rotated'");
      e.pose = Vocabulary::snap_pose(cur().number);
      ++pos_;
      expect_word("degrees", "after the angle");
    }

    // [REL "entity" INT]
    if (!done() && cur().kind == TokKind::Word &&
        Vocabulary::relation_index(cur().word)) {
      RelationPhrase rp;
      rp.span.begin = cur().begin;
      rp.relation = *Vocabulary::relation_index(cur().word);
      ++pos_;
      expect_word("entity", "after the relation");
      if (done() || cur().kind != TokKind::Number)
        throw ParseError(cur_offset(), "expected an entity ordinal");
      rp.target_ordinal = cur().number;
      rp.span.end = cur().end;
      if (rp.target_ordinal < 1 || rp.target_ordinal > index)
        throw ParseError(rp.span.begin, "forward/unknown entity reference");
      ++pos_;
      e.relation = rp;
    }

    if (!done() && cur().kind != TokKind::Semicolon) {
      if (cur().kind == TokKind::Word && !known_word(cur().word))
        throw ParseError(cur().begin, "unknown word '" + cur().word + "'");
      throw ParseError(cur().begin, "unexpected token in entity clause");
    }
    e.span.end = pos_ > 0 ? toks_[pos_ - 1].end : e.span.begin;
    return e;
  }

  const std::string& text_;
  std::vector<Token> toks_;
  size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Placement

struct CenterRange {
  double lox, hix, loy, hiy;
  bool empty() const { return lox > hix || loy > hiy; }
};

CenterRange canvas_range(double side) {
  double lo = kBorderMargin + 0.5 * side;
  double hi = 1.0 - kBorderMargin - 0.5 * side;
  return {lo, hi, lo, hi};
}

CenterRange relation_center_range(int rel, const Box& target, double side) {
  CenterRange r = canvas_range(side);
  const double m = kRelationMargin + kPlaceSlack;
  switch (rel) {
    case 0: r.hix = std::min(r.hix, target.cx() - m); break;
    case 1: r.lox = std::max(r.lox, target.cx() + m); break;
    case 2: r.hiy = std::min(r.hiy, target.cy() - m); break;
    case 3: r.loy = std::max(r.loy, target.cy() + m); break;
    case 4:
      r.lox = std::max(r.lox, target.x1 + 0.5 * side + kInsideMargin);
      r.hix = std::min(r.hix, target.x2 - 0.5 * side - kInsideMargin);
      r.loy = std::max(r.loy, target.y1 + 0.5 * side + kInsideMargin);
      r.hiy = std::min(r.hiy, target.y2 - 0.5 * side - kInsideMargin);
      break;
    case 5:
      r.lox = std::max(r.lox, target.cx() - 0.5 * (side + target.width()));
      r.hix = std::min(r.hix, target.cx() + 0.5 * (side + target.width()));
      r.loy = std::max(r.loy, target.cy() - 0.5 * (side + target.height()));
      r.hiy = std::min(r.hiy, target.cy() + 0.5 * (side + target.height()));
      break;
    default: break;
  }
  return r;
}

bool relation_feasible(int rel, const Box& target, double side) {
  return !relation_center_range(rel, target, side).empty();
}

Box clamp_box_into_canvas(double cx, double cy, double side) {
  double half = 0.5 * side;
  cx = std::clamp(cx, kBorderMargin + half, 1.0 - kBorderMargin - half);
  cy = std::clamp(cy, kBorderMargin + half, 1.0 - kBorderMargin - half);
  return Box::from_center(cx, cy, side, side);
}

double max_iou_with(const Box& b, const std::vector<Box>& placed, int skip = -1) {
  double m = 0.0;
  for (size_t i = 0; i < placed.size(); ++i)
    if (static_cast<int>(i) != skip) m = std::max(m, iou(b, placed[i]));
  return m;
}

// Anchor grid in reading order; centers at thirds of the canvas.
std::array<std::pair<double, double>, 9> anchor_centers() {
  std::array<std::pair<double, double>, 9> a;
  const double pos[3] = {1.0 / 6.0, 0.5, 5.0 / 6.0};
  int k = 0;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) a[k++] = {pos[col], pos[row]};
  return a;
}

// Placement is seeded by a hash of the already-verbalized scene prefix, not
// by the caller's seed: anyone holding only the prompt text (in particular
// the reward model) can then reconstruct the exact ground-truth boxes.
Box place_slot(const Plan& plan, int slot_idx, const std::vector<Box>& placed,
               std::array<bool, 9>& anchor_used) {
  const PlanningToken& tok = plan.slots[slot_idx];
  const double side = Vocabulary::size_side(tok.size);
  if (tok.relation == Vocabulary::kRelationNone) {
    if (slot_idx == 0) {
      anchor_used[4] = true;
      return clamp_box_into_canvas(0.5, 0.5, side);
    }
    const auto anchors = anchor_centers();
    int best = -1;
    double best_overlap = 2.0;
    for (int a = 0; a < 9; ++a) {
      if (anchor_used[a]) continue;
      Box b = clamp_box_into_canvas(anchors[a].first, anchors[a].second, side);
      double ov = max_iou_with(b, placed);
      if (ov <= kAnchorOverlapLimit) {
        anchor_used[a] = true;
        return b;
      }
      if (ov < best_overlap) {
        best_overlap = ov;
        best = a;
      }
    }
    if (best < 0) {
      // every anchor consumed; fall back to the least crowded one
      for (int a = 0; a < 9; ++a) {
        Box b = clamp_box_into_canvas(anchors[a].first, anchors[a].second, side);
        double ov = max_iou_with(b, placed);
        if (ov < best_overlap) {
          best_overlap = ov;
          best = a;
        }
      }
    }
    anchor_used[best] = true;
    return clamp_box_into_canvas(anchors[best].first, anchors[best].second, side);
  }

  const Box& target = placed.at(tok.relation_target);
  const CenterRange range = relation_center_range(tok.relation, target, side);
  const bool ignore_target_overlap = tok.relation == 4 || tok.relation == 5;
  Rng prng(derive_seed(fnv1a(verbalize_prefix(plan, slot_idx + 1)), kPlaceStream));
  for (int attempt = 0; attempt < kMaxPlaceAttempts; ++attempt) {
    double u = prng.uniform();
    double v = prng.uniform();
    if (range.empty()) continue;  // burn the full attempt budget, then report
    double cx = range.lox + (range.hix - range.lox) * u;
    double cy = range.loy + (range.hiy - range.loy) * v;
    Box b = Box::from_center(cx, cy, side, side);
    if (!relation_holds(tok.relation, b, target, kRelationMargin + kPlaceSlack))
      continue;
    if (tok.relation == 5 && iou(b, target) > 0.35) continue;
    double limit = attempt >= kRelaxAfter ? 0.5 : kAnchorOverlapLimit;
    if (max_iou_with(b, placed, ignore_target_overlap ? tok.relation_target : -1) >
        limit)
      continue;
    return b;
  }
  throw PlacementError(slot_idx,
                       "unsatisfiable relation chain after 1000 placement attempts");
}

}  // namespace

PromptAST parse_prompt(const std::string& text) {
  if (text.size() > 4096) throw ParseError(0, "prompt longer than 4096 bytes");
  return Parser(text).parse();
}

Plan derive_plan(const PromptAST& ast, std::uint64_t seed) {
  if (ast.entities.empty()) throw std::invalid_argument("derive_plan: no entities");
  if (ast.entities.size() > Vocabulary::kMaxSlots)
    throw std::invalid_argument("derive_plan: too many entities");
  Plan p;
  if (ast.scene) {
    p.globals.background = ast.scene->background;
    p.globals.light = ast.scene->light.value_or(Vocabulary::kLightNormal);
    p.globals.effect = ast.scene->effect.value_or(Vocabulary::kEffectNone);
  }
  for (size_t i = 0; i < ast.entities.size(); ++i) {
    const EntityClause& e = ast.entities[i];
    PlanningToken& t = p.slots[i];
    t.object = e.object;
    t.color = e.color;
    t.texture = e.texture.value_or(0);
    t.size = e.size.value_or(Vocabulary::kSizeMedium);
    t.pose = e.pose.value_or(0);
    t.glyph = e.glyph.value_or(0);
    if (t.object != Vocabulary::kObjectGlyph) t.glyph = 0;
    if (e.relation) {
      t.relation = e.relation->relation;
      t.relation_target = e.relation->target_ordinal - 1;
    }
  }

  (void)seed;  // locations are a pure function of the scene content
  std::vector<Box> placed;
  std::array<bool, 9> anchor_used{};
  for (size_t i = 0; i < ast.entities.size(); ++i) {
    p.slots[i].bbox = place_slot(p, static_cast<int>(i), placed, anchor_used);
    placed.push_back(p.slots[i].bbox);
  }
  p.validate();
  return p;
}

namespace {

std::string verbalize_prefix(const Plan& plan, int count) {
  std::string out;
  const SceneGlobals& g = plan.globals;
  const bool scene_needed = g.background != Vocabulary::kColorWhite ||
                            g.light != Vocabulary::kLightNormal ||
                            g.effect != Vocabulary::kEffectNone;
  if (scene_needed) {
    out += "on a ";
    out += Vocabulary::color_names()[g.background];
    out += " background";
    if (g.light != Vocabulary::kLightNormal) {
      out += ", ";
      out += Vocabulary::light_names()[g.light];
      out += " light";
    }
    if (g.effect != Vocabulary::kEffectNone) {
      out += ", with ";
      out += Vocabulary::effect_names()[g.effect];
    }
  }
  for (int i = 0; i < count; ++i) {
    const PlanningToken& t = plan.slots[i];
    if (!out.empty()) out += "; ";
    out += "a ";
    if (t.size != Vocabulary::kSizeMedium) {
      out += Vocabulary::size_names()[t.size];
      out += " ";
    }
    out += Vocabulary::color_names()[t.color];
    out += " ";
    if (t.texture != 0) {
      out += Vocabulary::texture_names()[t.texture];
      out += " ";
    }
    out += Vocabulary::object_names()[t.object];
    if (t.object == Vocabulary::kObjectGlyph) {
      out += " '";
      out += Vocabulary::glyph_alphabet()[t.glyph];
      out += "'";
    }
    if (t.pose != 0) {
      out += " rotated ";
      out += std::to_string(Vocabulary::pose_degrees(t.pose));
      out += " degrees";
    }
    if (t.relation != Vocabulary::kRelationNone) {
      out += " ";
      out += Vocabulary::relation_names()[t.relation];
      out += " entity ";
      out += std::to_string(t.relation_target + 1);
    }
  }
  return out;
}

}  // namespace

std::string verbalize(const Plan& plan) {
  plan.validate();
  return verbalize_prefix(plan, plan.slot_count());
}

const char* bucket_name(Bucket b) {
  switch (b) {
    case Bucket::Simple: return "simple";
    case Bucket::Medium: return "medium";
    default: return "complex";
  }
}

std::optional<Bucket> bucket_from_name(const std::string& s) {
  if (s == "simple") return Bucket::Simple;
  if (s == "medium") return Bucket::Medium;
  if (s == "complex") return Bucket::Complex;
  return std::nullopt;
}

Plan sample_scene(std::uint64_t seed, Bucket bucket) {
  Rng sym(derive_seed(seed, kSymStream));
  int n = 0;
  switch (bucket) {
    case Bucket::Simple: n = 1 + sym.uniform_int(2); break;
    case Bucket::Medium: n = 3 + sym.uniform_int(3); break;
    case Bucket::Complex: n = 6 + sym.uniform_int(3); break;
  }

  Plan p;
  p.globals.background = sym.uniform_int(Vocabulary::kNumColors);
  p.globals.light = sym.uniform_int(Vocabulary::kNumLights);
  {
    auto rgb = Vocabulary::color_rgb(p.globals.background);
    double f = Vocabulary::light_factor(p.globals.light);
    double er = std::min(1.0, rgb[0] * f), eg = std::min(1.0, rgb[1] * f),
           eb = std::min(1.0, rgb[2] * f);
    double lum = luminance(er, eg, eb);
    // effects that cannot register on this background are skipped: sparkle
    // dots are white, the glow halo only brightens channels with headroom
    const bool sparkle_ok = lum <= 0.88;
    const double glow_headroom = luminance(1.0 - er, 1.0 - eg, 1.0 - eb);
    const bool glow_ok = glow_headroom >= 0.15;
    std::vector<int> allowed = {Vocabulary::kEffectNone, 2};
    if (glow_ok) allowed.push_back(1);
    if (sparkle_ok) allowed.push_back(3);
    p.globals.effect = allowed[sym.uniform_int(static_cast<int>(allowed.size()))];
  }

  for (int i = 0; i < n; ++i) {
    PlanningToken& t = p.slots[i];
    t.object = 1 + sym.uniform_int(Vocabulary::kNumObjects - 1);
    t.glyph = t.object == Vocabulary::kObjectGlyph
                  ? sym.uniform_int(Vocabulary::kNumGlyphs)
                  : 0;
    // entity colors avoid the background color so every object stays visible
    int c = sym.uniform_int(Vocabulary::kNumColors - 1);
    if (c >= p.globals.background) ++c;
    t.color = c;
    t.texture = sym.uniform_int(Vocabulary::kNumTextures);
    t.size = sym.uniform_int(Vocabulary::kNumSizes);
    t.pose = sym.uniform_int(Vocabulary::kNumPoses);
  }

  std::vector<Box> placed;
  std::array<bool, 9> anchor_used{};
  for (int i = 0; i < n; ++i) {
    PlanningToken& t = p.slots[i];
    if (i > 0 && sym.bernoulli(0.7)) {
      for (int attempt = 0; attempt < 8; ++attempt) {
        int target = sym.uniform_int(i);
        int rel = sym.uniform_int(Vocabulary::kNumRelations - 1);
        if (relation_feasible(rel, placed[target],
                              Vocabulary::size_side(t.size))) {
          t.relation = rel;
          t.relation_target = target;
          break;
        }
      }
    }
    t.bbox = place_slot(p, i, placed, anchor_used);
    placed.push_back(t.bbox);
  }
  p.validate();
  return p;
}

}  // namespace composer::dsl
