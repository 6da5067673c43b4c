#include "composer/reward.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace composer::reward {

using dsl::Plan;
using dsl::PlanningToken;
using dsl::Vocabulary;
using gen::ImageGrid;

namespace {

constexpr int kS = ImageGrid::kSize;
constexpr int kSearchRadius = 8;
constexpr int kSearchStride = 2;
constexpr int kWindowPad = 3;        // template window ring outside the bbox
constexpr double kVarGuard = 1e-12;
constexpr double kPoseTie = 0.01;
constexpr double kPoseEvidence = 0.2;   // below this the pose is unreadable
constexpr double kObjFloor = 0.1;       // oracle ceiling below which a slot
                                        // counts as unmeasurable
constexpr double kGlowRelative = 0.5;   // fraction of the achievable halo signal
constexpr double kGlowFloor = 0.004;    // below this the halo cannot be seen

constexpr double kBlurHfRatio = 0.45;
constexpr double kSparkleContrast = 0.08;
constexpr int kSparkleMinCount = 8;

struct Window {
  int x0, y0, x1, y1;  // half-open pixel rect
};

Window template_window(const Box& b) {
  int x0 = std::max(0, static_cast<int>(std::floor(b.x1 * kS)) - kWindowPad);
  int y0 = std::max(0, static_cast<int>(std::floor(b.y1 * kS)) - kWindowPad);
  int x1 = std::min(kS, static_cast<int>(std::ceil(b.x2 * kS)) + kWindowPad);
  int y1 = std::min(kS, static_cast<int>(std::ceil(b.y2 * kS)) + kWindowPad);
  return {x0, y0, x1, y1};
}

// |NCC| between the slot's mask (rendered at its gt geometry) and the image
// luminance window shifted by (dx, dy). Pixels shifted off-canvas are
// dropped from both sides.
double shifted_mask_ncc(const PlanningToken& t, const Window& w,
                        const std::vector<double>& lum, int dx, int dy) {
  double st = 0.0, si = 0.0, stt = 0.0, sii = 0.0, sti = 0.0;
  int count = 0;
  for (int y = w.y0; y < w.y1; ++y)
    for (int x = w.x0; x < w.x1; ++x) {
      int xi = x + dx, yi = y + dy;
      if (xi < 0 || xi >= kS || yi < 0 || yi >= kS) continue;
      double tv = gen::shape_covers(t, x + 0.5, y + 0.5) ? 1.0 : 0.0;
      double iv = lum[static_cast<size_t>(yi) * kS + xi];
      st += tv;
      si += iv;
      stt += tv * tv;
      sii += iv * iv;
      sti += tv * iv;
      ++count;
    }
  if (count == 0) return 0.0;
  double n = static_cast<double>(count);
  double vt = stt - st * st / n;
  double vi = sii - si * si / n;
  if (vt < kVarGuard || vi < kVarGuard) return 0.0;
  double cov = sti - st * si / n;
  return std::abs(cov / std::sqrt(vt * vi));
}

const std::vector<std::pair<int, int>>& search_offsets() {
  // ordered center-out so exact matches win ties
  static const std::vector<std::pair<int, int>> offsets = [] {
    std::vector<std::pair<int, int>> o;
    for (int dy = -kSearchRadius; dy <= kSearchRadius; dy += kSearchStride)
      for (int dx = -kSearchRadius; dx <= kSearchRadius; dx += kSearchStride)
        o.emplace_back(dx, dy);
    std::stable_sort(o.begin(), o.end(), [](auto a, auto b) {
      int ra = a.first * a.first + a.second * a.second;
      int rb = b.first * b.first + b.second * b.second;
      if (ra != rb) return ra < rb;
      if (a.second != b.second) return a.second < b.second;
      return a.first < b.first;
    });
    return o;
  }();
  return offsets;
}

MatchSet match_templates_on(const std::vector<double>& lum, const Plan& gt) {
  MatchSet ms;
  const int n = gt.slot_count();
  for (int i = 0; i < n; ++i) {
    const PlanningToken& t = gt.slots[i];
    Window w = template_window(t.bbox);
    SlotMatch best;
    best.slot = i;
    best.corr = -1.0;
    for (auto [dx, dy] : search_offsets()) {
      double c = shifted_mask_ncc(t, w, lum, dx, dy);
      if (c > best.corr) {
        best.corr = c;
        best.dx = dx;
        best.dy = dy;
      }
    }
    if (best.corr < 0.0) best.corr = 0.0;
    const double sx = static_cast<double>(best.dx) / kS;
    const double sy = static_cast<double>(best.dy) / kS;
    best.matched = Box{t.bbox.x1 + sx, t.bbox.y1 + sy, t.bbox.x2 + sx, t.bbox.y2 + sy};
    ms.matches.push_back(best);
  }
  return ms;
}

// Everything the nine scorers need. The oracle render of the ground-truth
// plan is the reference appearance: every scorer either compares the image
// against it or normalizes by what the oracle itself can display, so a
// perfect render scores 5 on every dimension by construction.
struct ScoreContext {
  const ImageGrid* img;
  const Plan* gt;
  ImageGrid oracle;        // rasterize(gt)
  ImageGrid oracle_none;   // same scene with the post effect removed
  std::vector<double> lum;
  std::vector<double> oracle_lum;
  std::vector<double> oracle_none_lum;
  MatchSet img_matches;
  MatchSet oracle_matches;
};

ScoreContext make_context(const ImageGrid& img, const Plan& gt) {
  ScoreContext ctx;
  ctx.img = &img;
  ctx.gt = &gt;
  ctx.oracle = gen::rasterize(gt);
  Plan none_plan = gt;
  none_plan.globals.effect = Vocabulary::kEffectNone;
  ctx.oracle_none = gen::rasterize(none_plan);
  ctx.lum = gen::luminance_image(img);
  ctx.oracle_lum = gen::luminance_image(ctx.oracle);
  ctx.oracle_none_lum = gen::luminance_image(ctx.oracle_none);
  ctx.img_matches = match_templates_on(ctx.lum, gt);
  ctx.oracle_matches = match_templates_on(ctx.oracle_lum, gt);
  return ctx;
}

double clamp_score(double v) { return std::clamp(v, 0.0, 5.0); }

// --- per-dimension scorers ---------------------------------------------

// Template correlation normalized by the oracle's own ceiling, so occlusion
// or a blur effect in the reference scene never penalizes a faithful image.
double slot_presence(const ScoreContext& ctx, int i) {
  double ceiling = ctx.oracle_matches.matches[i].corr;
  if (ceiling < kObjFloor) return 1.0;  // the oracle itself cannot show it
  return std::clamp(ctx.img_matches.matches[i].corr / ceiling, 0.0, 1.0);
}

double score_obj(const ScoreContext& ctx) {
  const int n = ctx.gt->slot_count();
  if (n == 0) return 5.0;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += slot_presence(ctx, i);
  return clamp_score(5.0 * s / n);
}

double score_backg(const ScoreContext& ctx) {
  const Plan& gt = *ctx.gt;
  const int n = gt.slot_count();
  double mi[3] = {0, 0, 0}, mo[3] = {0, 0, 0};
  int count = 0;
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x) {
      bool in_box = false;
      for (int i = 0; i < n && !in_box; ++i) {
        const Box& b = gt.slots[i].bbox;
        if (x + 0.5 >= b.x1 * kS && x + 0.5 < b.x2 * kS && y + 0.5 >= b.y1 * kS &&
            y + 0.5 < b.y2 * kS)
          in_box = true;
      }
      if (in_box) continue;
      for (int c = 0; c < 3; ++c) {
        mi[c] += ctx.img->at(x, y, c);
        mo[c] += ctx.oracle.at(x, y, c);
      }
      ++count;
    }
  if (count == 0) return 5.0;
  double d2 = 0.0;
  for (int c = 0; c < 3; ++c) {
    double d = (mi[c] - mo[c]) / count;
    d2 += d * d;
  }
  return clamp_score(5.0 * (1.0 - std::sqrt(d2) / std::sqrt(3.0)));
}

// Mean color over the slot's mask pixels, image and oracle both sampled at
// the matched location.
double score_color(const ScoreContext& ctx) {
  const int n = ctx.gt->slot_count();
  if (n == 0) return 5.0;
  double total = 0.0;
  for (const SlotMatch& m : ctx.img_matches.matches) {
    const PlanningToken& t = ctx.gt->slots[m.slot];
    Window w = template_window(t.bbox);
    double mi[3] = {0, 0, 0}, mo[3] = {0, 0, 0};
    int count = 0;
    for (int y = w.y0; y < w.y1; ++y)
      for (int x = w.x0; x < w.x1; ++x) {
        if (!gen::shape_covers(t, x + 0.5, y + 0.5)) continue;
        int xi = x + m.dx, yi = y + m.dy;
        if (xi < 0 || xi >= kS || yi < 0 || yi >= kS) continue;
        for (int c = 0; c < 3; ++c) {
          mi[c] += ctx.img->at(xi, yi, c);
          mo[c] += ctx.oracle.at(xi, yi, c);
        }
        ++count;
      }
    if (count == 0) {
      total += 5.0;  // mask entirely off-canvas at the match; nothing to read
      continue;
    }
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      double d = (mi[c] - mo[c]) / count;
      d2 += d * d;
    }
    total += clamp_score(5.0 * (1.0 - std::sqrt(d2) / std::sqrt(3.0)));
  }
  return clamp_score(total / n);
}

// Pattern correlation between image and oracle luminance over the mask,
// both sampled at the matched location.
double score_texture(const ScoreContext& ctx) {
  const int n = ctx.gt->slot_count();
  if (n == 0) return 5.0;
  double total = 0.0;
  for (const SlotMatch& m : ctx.img_matches.matches) {
    const PlanningToken& t = ctx.gt->slots[m.slot];
    Window w = template_window(t.bbox);
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    int count = 0;
    for (int y = w.y0; y < w.y1; ++y)
      for (int x = w.x0; x < w.x1; ++x) {
        if (!gen::shape_covers(t, x + 0.5, y + 0.5)) continue;
        int xi = x + m.dx, yi = y + m.dy;
        if (xi < 0 || xi >= kS || yi < 0 || yi >= kS) continue;
        double a = ctx.oracle_lum[static_cast<size_t>(yi) * kS + xi];
        double b = ctx.lum[static_cast<size_t>(yi) * kS + xi];
        sa += a; sb += b; saa += a * a; sbb += b * b; sab += a * b;
        ++count;
      }
    if (count == 0) {
      total += 5.0;
      continue;
    }
    double nn = static_cast<double>(count);
    double va = saa - sa * sa / nn;
    double vb = sbb - sb * sb / nn;
    if (va < kVarGuard && vb < kVarGuard) {
      total += 5.0;  // both flat: matching constancy
    } else if (va < kVarGuard || vb < kVarGuard) {
      total += 0.0;
    } else {
      double ncc = (sab - sa * sb / nn) / std::sqrt(va * vb);
      total += clamp_score(5.0 * std::clamp(ncc, 0.0, 1.0));
    }
  }
  return clamp_score(total / n);
}

double score_light(const ScoreContext& ctx) {
  double a = 0.0, b = 0.0;
  for (size_t k = 0; k < ctx.lum.size(); ++k) {
    a += ctx.lum[k];
    b += ctx.oracle_lum[k];
  }
  a /= static_cast<double>(ctx.lum.size());
  b /= static_cast<double>(ctx.lum.size());
  return clamp_score(5.0 * (1.0 - std::abs(a - b)));
}

double score_text(const ScoreContext& ctx) {
  const int n = ctx.gt->slot_count();
  double total = 0.0;
  int glyphs = 0;
  for (int i = 0; i < n; ++i) {
    if (ctx.gt->slots[i].object != Vocabulary::kObjectGlyph) continue;
    ++glyphs;
    total += slot_presence(ctx, i);
  }
  if (glyphs == 0) return 5.0;  // vacuous: nothing textual requested
  return clamp_score(5.0 * total / glyphs);
}

// A stated relation counts when the predicate over the image's matched
// centroids agrees with the same predicate over the oracle's matched
// centroids (which is simply "true" whenever matching noise is absent).
double score_comp(const ScoreContext& ctx) {
  const Plan& gt = *ctx.gt;
  const int n = gt.slot_count();
  int relations = 0, agree = 0;
  for (int i = 0; i < n; ++i) {
    const PlanningToken& t = gt.slots[i];
    if (t.relation == Vocabulary::kRelationNone) continue;
    ++relations;
    bool img_holds =
        relation_holds(t.relation, ctx.img_matches.matches[i].matched,
                       ctx.img_matches.matches[t.relation_target].matched);
    bool oracle_holds =
        relation_holds(t.relation, ctx.oracle_matches.matches[i].matched,
                       ctx.oracle_matches.matches[t.relation_target].matched);
    if (img_holds == oracle_holds) ++agree;
  }
  if (relations == 0) return 5.0;
  return clamp_score(5.0 * agree / relations);
}

// Lowest-index member of the near-tie set of best rotated templates; ties
// absorb the rotations a symmetric shape cannot reveal.
int detect_pose(const PlanningToken& t, const Window& w,
                const std::vector<double>& lum, int dx, int dy, double* best_out) {
  std::array<double, Vocabulary::kNumPoses> corr{};
  double best = -1.0;
  for (int k = 0; k < Vocabulary::kNumPoses; ++k) {
    PlanningToken variant = t;
    variant.pose = k;
    corr[k] = shifted_mask_ncc(variant, w, lum, dx, dy);
    best = std::max(best, corr[k]);
  }
  if (best_out) *best_out = best;
  for (int k = 0; k < Vocabulary::kNumPoses; ++k)
    if (corr[k] >= best - kPoseTie) return k;
  return 0;
}

double score_pose(const ScoreContext& ctx) {
  const int n = ctx.gt->slot_count();
  if (n == 0) return 5.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const PlanningToken& t = ctx.gt->slots[i];
    Window w = template_window(t.bbox);
    const SlotMatch& mo = ctx.oracle_matches.matches[i];
    double oracle_best = 0.0;
    int ko = detect_pose(t, w, ctx.oracle_lum, mo.dx, mo.dy, &oracle_best);
    if (oracle_best < kPoseEvidence) {
      total += 1.0;  // unreadable even on the oracle render
      continue;
    }
    const SlotMatch& mi = ctx.img_matches.matches[i];
    double img_best = 0.0;
    int ki = detect_pose(t, w, ctx.lum, mi.dx, mi.dy, &img_best);
    if (img_best < kPoseEvidence) continue;  // no pose evidence in the image
    int d = std::abs(45 * (ki - ko));
    d = std::min(d, 360 - d);
    total += 1.0 - static_cast<double>(d) / 180.0;
  }
  return clamp_score(5.0 * total / n);
}

// Effect detectors with oracle-derived baselines. Precedence: sparkle, blur,
// glow; "none" when nothing fires.
bool sparkle_fires(const ScoreContext& ctx) {
  int count = 0;
  for (int y = 1; y < kS - 1; ++y)
    for (int x = 1; x < kS - 1; ++x) {
      double v = ctx.lum[static_cast<size_t>(y) * kS + x];
      double mx = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          mx = std::max(mx, ctx.lum[static_cast<size_t>(y + dy) * kS + (x + dx)]);
        }
      if (v >= mx + kSparkleContrast) ++count;
    }
  return count >= kSparkleMinCount;
}

double hf_energy(const ImageGrid& img) {
  ImageGrid low = gen::box_blur3(img);
  double s = 0.0;
  for (size_t k = 0; k < img.data.size(); ++k) {
    double d = img.data[k] - low.data[k];
    s += d * d;
  }
  return s / static_cast<double>(img.data.size());
}

bool blur_fires(const ScoreContext& ctx) {
  double ref = hf_energy(ctx.oracle_none);
  if (ref < 1e-9) return false;
  return hf_energy(*ctx.img) <= kBlurHfRatio * ref;
}

// Mean luminance lift over the halo ring (within 2 px of a shape, outside
// all shapes), relative to the effect-free oracle.
double ring_signal(const Plan& gt, const std::vector<double>& lum,
                   const std::vector<double>& base_lum) {
  const int n = gt.slot_count();
  std::vector<char> mask(static_cast<size_t>(kS) * kS, 0);
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x)
      for (int i = 0; i < n; ++i)
        if (gen::shape_covers(gt.slots[i], x + 0.5, y + 0.5)) {
          mask[static_cast<size_t>(y) * kS + x] = 1;
          break;
        }
  double diff = 0.0;
  int ring = 0;
  for (int y = 0; y < kS; ++y)
    for (int x = 0; x < kS; ++x) {
      if (mask[static_cast<size_t>(y) * kS + x]) continue;
      bool near = false;
      for (int dy = -2; dy <= 2 && !near; ++dy)
        for (int dx = -2; dx <= 2 && !near; ++dx) {
          int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= kS || yy < 0 || yy >= kS) continue;
          if (mask[static_cast<size_t>(yy) * kS + xx]) near = true;
        }
      if (!near) continue;
      diff += lum[static_cast<size_t>(y) * kS + x] -
              base_lum[static_cast<size_t>(y) * kS + x];
      ++ring;
    }
  return ring > 0 ? diff / ring : 0.0;
}

bool glow_fires(const ScoreContext& ctx) {
  Plan glow_plan = *ctx.gt;
  glow_plan.globals.effect = 1;
  ImageGrid oracle_glow = gen::rasterize(glow_plan);
  double achievable =
      ring_signal(*ctx.gt, gen::luminance_image(oracle_glow), ctx.oracle_none_lum);
  if (achievable < kGlowFloor) return false;  // halo invisible on this scene
  double measured = ring_signal(*ctx.gt, ctx.lum, ctx.oracle_none_lum);
  return measured >= kGlowRelative * achievable;
}

double score_fx(const ScoreContext& ctx) {
  int classified = Vocabulary::kEffectNone;
  if (sparkle_fires(ctx)) classified = 3;
  else if (blur_fires(ctx)) classified = 2;
  else if (glow_fires(ctx)) classified = 1;
  return classified == ctx.gt->globals.effect ? 5.0 : 0.0;
}

double score_in_context(int dim, const ScoreContext& ctx) {
  switch (dim) {
    case kObj: return score_obj(ctx);
    case kBackg: return score_backg(ctx);
    case kColor: return score_color(ctx);
    case kTexture: return score_texture(ctx);
    case kLight: return score_light(ctx);
    case kText: return score_text(ctx);
    case kComp: return score_comp(ctx);
    case kPose: return score_pose(ctx);
    case kFx: return score_fx(ctx);
    default: throw std::invalid_argument("score_dimension: unknown dimension");
  }
}

}  // namespace

const std::array<std::string_view, kNumDimensions>& dimension_names() {
  static const std::array<std::string_view, kNumDimensions> v = {
      "Obj", "Backg", "Color", "Texture", "Light", "Text", "Comp", "Pose", "FX"};
  return v;
}

std::string DimensionScores::to_json() const {
  nlohmann::ordered_json j;
  for (int d = 0; d < kNumDimensions; ++d)
    j[std::string(dimension_names()[d])] = scores[d];
  j["composite"] = composite;
  return j.dump();
}

DimensionScores DimensionScores::from_json(const std::string& text) {
  auto j = nlohmann::ordered_json::parse(text);
  DimensionScores s;
  for (int d = 0; d < kNumDimensions; ++d)
    s.scores[d] = j.at(std::string(dimension_names()[d])).get<double>();
  s.composite = j.at("composite").get<double>();
  return s;
}

RewardWeights RewardWeights::uniform() {
  RewardWeights w;
  w.w.fill(1.0 / kNumDimensions);
  return w;
}

void RewardWeights::validate() const {
  double s = 0.0;
  for (double v : w) {
    if (v < 0.0) throw std::invalid_argument("RewardWeights: negative weight");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("RewardWeights: weights must sum to 1");
}

MatchSet match_templates(const ImageGrid& img, const Plan& gt) {
  return match_templates_on(gen::luminance_image(img), gt);
}

double score_dimension(int dim, const ImageGrid& img, const Plan& gt) {
  if (dim < 0 || dim >= kNumDimensions)
    throw std::invalid_argument("score_dimension: unknown dimension");
  ScoreContext ctx = make_context(img, gt);
  return score_in_context(dim, ctx);
}

DimensionScores score_plan(const ImageGrid& img, const Plan& gt,
                           const RewardWeights& w) {
  w.validate();
  ScoreContext ctx = make_context(img, gt);
  DimensionScores out;
  out.composite = 0.0;
  for (int d = 0; d < kNumDimensions; ++d) {
    out.scores[d] = score_in_context(d, ctx);
    out.composite += w.w[d] * out.scores[d];
  }
  return out;
}

DimensionScores composite_reward(const ImageGrid& img,
                                 const std::string& prompt_text,
                                 const RewardWeights& w) {
  dsl::Plan gt = dsl::derive_plan(dsl::parse_prompt(prompt_text), 0);
  return score_plan(img, gt, w);
}

}  // namespace composer::reward
