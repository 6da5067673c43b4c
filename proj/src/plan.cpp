#include "composer/plan.hpp"

#include <json.hpp>

#include <stdexcept>

#include "composer/rng.hpp"

namespace composer::dsl {

using ordered_json = nlohmann::ordered_json;

namespace {

int index_or_throw(std::optional<int> idx, const std::string& what,
                   const std::string& value) {
  if (!idx) throw std::invalid_argument("plan json: unknown " + what + " '" + value + "'");
  return *idx;
}

}  // namespace

void Plan::validate() const {
  bool seen_null = false;
  for (int i = 0; i < Vocabulary::kMaxSlots; ++i) {
    const PlanningToken& t = slots[i];
    if (t.is_null()) {
      seen_null = true;
      if (!(t == PlanningToken{}))
        throw std::invalid_argument("plan: null slot " + std::to_string(i) +
                                    " has non-default fields");
      continue;
    }
    if (seen_null)
      throw std::invalid_argument("plan: non-null slot " + std::to_string(i) +
                                  " after a null slot");
    if (t.object < 0 || t.object >= Vocabulary::kNumObjects ||
        t.color < 0 || t.color >= Vocabulary::kNumColors ||
        t.texture < 0 || t.texture >= Vocabulary::kNumTextures ||
        t.size < 0 || t.size >= Vocabulary::kNumSizes ||
        t.pose < 0 || t.pose >= Vocabulary::kNumPoses ||
        t.glyph < 0 || t.glyph >= Vocabulary::kNumGlyphs ||
        t.relation < 0 || t.relation >= Vocabulary::kNumRelations)
      throw std::invalid_argument("plan: slot " + std::to_string(i) +
                                  " field out of range");
    if (!(t.bbox.x1 < t.bbox.x2) || !(t.bbox.y1 < t.bbox.y2) ||
        t.bbox.x1 < 0.0 || t.bbox.y1 < 0.0 || t.bbox.x2 > 1.0 || t.bbox.y2 > 1.0)
      throw std::invalid_argument("plan: slot " + std::to_string(i) + " bad bbox");
    const bool has_rel = t.relation != Vocabulary::kRelationNone;
    if (has_rel != (t.relation_target >= 0))
      throw std::invalid_argument("plan: slot " + std::to_string(i) +
                                  " relation/target inconsistency");
    if (has_rel) {
      if (t.relation_target >= i)
        throw std::invalid_argument("plan: slot " + std::to_string(i) +
                                    " relation must point backward");
      if (slots[t.relation_target].is_null())
        throw std::invalid_argument("plan: slot " + std::to_string(i) +
                                    " relation targets a null slot");
    }
  }
  if (globals.background < 0 || globals.background >= Vocabulary::kNumColors ||
      globals.light < 0 || globals.light >= Vocabulary::kNumLights ||
      globals.effect < 0 || globals.effect >= Vocabulary::kNumEffects)
    throw std::invalid_argument("plan: globals out of range");
}

Plan Plan::canonicalized() const {
  Plan p = *this;
  bool seen_null = false;
  for (int i = 0; i < Vocabulary::kMaxSlots; ++i) {
    PlanningToken& t = p.slots[i];
    if (seen_null || t.is_null()) {
      t = PlanningToken{};
      seen_null = true;
      continue;
    }
    if (t.object != Vocabulary::kObjectGlyph) t.glyph = 0;
    t.bbox.x1 = std::clamp(t.bbox.x1, 0.0, 1.0);
    t.bbox.y1 = std::clamp(t.bbox.y1, 0.0, 1.0);
    t.bbox.x2 = std::clamp(t.bbox.x2, 0.0, 1.0);
    t.bbox.y2 = std::clamp(t.bbox.y2, 0.0, 1.0);
    if (t.bbox.x1 > t.bbox.x2) std::swap(t.bbox.x1, t.bbox.x2);
    if (t.bbox.y1 > t.bbox.y2) std::swap(t.bbox.y1, t.bbox.y2);
    const double kMinSide = 1.0 / 64.0;
    if (t.bbox.x2 - t.bbox.x1 < kMinSide) {
      double c = t.bbox.cx();
      t.bbox.x1 = std::clamp(c - 0.5 * kMinSide, 0.0, 1.0 - kMinSide);
      t.bbox.x2 = t.bbox.x1 + kMinSide;
    }
    if (t.bbox.y2 - t.bbox.y1 < kMinSide) {
      double c = t.bbox.cy();
      t.bbox.y1 = std::clamp(c - 0.5 * kMinSide, 0.0, 1.0 - kMinSide);
      t.bbox.y2 = t.bbox.y1 + kMinSide;
    }
    if (t.relation != Vocabulary::kRelationNone) {
      if (t.relation_target < 0 || t.relation_target >= i ||
          p.slots[t.relation_target].is_null()) {
        t.relation = Vocabulary::kRelationNone;
        t.relation_target = -1;
      }
    } else {
      t.relation_target = -1;
    }
  }
  return p;
}

std::string Plan::to_json() const {
  ordered_json j;
  j["globals"] = {
      {"background", std::string(Vocabulary::color_names()[globals.background])},
      {"light", std::string(Vocabulary::light_names()[globals.light])},
      {"fx", std::string(Vocabulary::effect_names()[globals.effect])}};
  ordered_json arr = ordered_json::array();
  for (const PlanningToken& t : slots) {
    ordered_json s;
    s["object"] = std::string(Vocabulary::object_names()[t.object]);
    s["color"] = std::string(Vocabulary::color_names()[t.color]);
    s["texture"] = std::string(Vocabulary::texture_names()[t.texture]);
    s["size"] = std::string(Vocabulary::size_names()[t.size]);
    s["pose_deg"] = Vocabulary::pose_degrees(t.pose);
    if (t.object == Vocabulary::kObjectGlyph)
      s["glyph"] = std::string(1, Vocabulary::glyph_alphabet()[t.glyph]);
    else
      s["glyph"] = nullptr;
    s["bbox"] = {t.bbox.x1, t.bbox.y1, t.bbox.x2, t.bbox.y2};
    if (t.relation != Vocabulary::kRelationNone) {
      s["relation"] = std::string(Vocabulary::relation_names()[t.relation]);
      s["target"] = t.relation_target;
    } else {
      s["relation"] = nullptr;
      s["target"] = nullptr;
    }
    arr.push_back(std::move(s));
  }
  j["slots"] = std::move(arr);
  return j.dump();
}

Plan Plan::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  Plan p;
  const auto& g = j.at("globals");
  p.globals.background = index_or_throw(
      Vocabulary::color_index(g.at("background").get<std::string>()), "color",
      g.at("background").get<std::string>());
  p.globals.light = index_or_throw(
      Vocabulary::light_index(g.at("light").get<std::string>()), "light",
      g.at("light").get<std::string>());
  {
    std::string fx = g.at("fx").get<std::string>();
    if (fx == "none") {
      p.globals.effect = Vocabulary::kEffectNone;
    } else {
      p.globals.effect = index_or_throw(Vocabulary::effect_index(fx), "effect", fx);
    }
  }
  const auto& arr = j.at("slots");
  if (!arr.is_array() || arr.size() != Vocabulary::kMaxSlots)
    throw std::invalid_argument("plan json: slots must have exactly 8 entries");
  for (int i = 0; i < Vocabulary::kMaxSlots; ++i) {
    const auto& s = arr[i];
    PlanningToken t;
    std::string obj = s.at("object").get<std::string>();
    t.object = index_or_throw(Vocabulary::object_index(obj), "object", obj);
    if (t.object == Vocabulary::kObjectNull) {
      p.slots[i] = PlanningToken{};
      continue;
    }
    std::string col = s.at("color").get<std::string>();
    t.color = index_or_throw(Vocabulary::color_index(col), "color", col);
    std::string tex = s.at("texture").get<std::string>();
    t.texture = index_or_throw(Vocabulary::texture_index(tex), "texture", tex);
    std::string sz = s.at("size").get<std::string>();
    t.size = index_or_throw(Vocabulary::size_index(sz), "size", sz);
    t.pose = Vocabulary::snap_pose(s.at("pose_deg").get<int>());
    if (!s.at("glyph").is_null()) {
      std::string gl = s.at("glyph").get<std::string>();
      if (gl.size() != 1) throw std::invalid_argument("plan json: bad glyph");
      t.glyph = index_or_throw(Vocabulary::glyph_index(gl[0]), "glyph", gl);
    }
    const auto& bb = s.at("bbox");
    if (!bb.is_array() || bb.size() != 4)
      throw std::invalid_argument("plan json: bbox must have 4 numbers");
    t.bbox = Box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
                 bb[3].get<double>()};
    if (!s.at("relation").is_null()) {
      std::string rel = s.at("relation").get<std::string>();
      t.relation = index_or_throw(Vocabulary::relation_index(rel), "relation", rel);
      t.relation_target = s.at("target").get<int>();
    }
    p.slots[i] = t;
  }
  p.validate();
  return p;
}

std::uint64_t Plan::content_hash() const { return fnv1a(to_json()); }

}  // namespace composer::dsl
