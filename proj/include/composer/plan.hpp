#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "composer/geometry.hpp"
#include "composer/vocab.hpp"

namespace composer::dsl {

// One slot of the visual blueprint: an entity with its attributes, a
// normalized bounding box and an optional backward relation.
struct PlanningToken {
  int object = Vocabulary::kObjectNull;
  int color = 0;
  int texture = 0;
  int size = Vocabulary::kSizeMedium;
  int pose = 0;
  int glyph = 0;                     // meaningful only when object == glyph
  Box bbox{0.0, 0.0, 1.0, 1.0};
  int relation = Vocabulary::kRelationNone;
  int relation_target = -1;          // slot index; -1 means none

  bool is_null() const { return object == Vocabulary::kObjectNull; }

  friend bool operator==(const PlanningToken& a, const PlanningToken& b) {
    return a.object == b.object && a.color == b.color && a.texture == b.texture &&
           a.size == b.size && a.pose == b.pose && a.glyph == b.glyph &&
           a.bbox == b.bbox && a.relation == b.relation &&
           a.relation_target == b.relation_target;
  }
};

struct SceneGlobals {
  int background = Vocabulary::kColorWhite;
  int light = Vocabulary::kLightNormal;
  int effect = Vocabulary::kEffectNone;

  friend bool operator==(const SceneGlobals& a, const SceneGlobals& b) {
    return a.background == b.background && a.light == b.light && a.effect == b.effect;
  }
};

struct Plan {
  std::array<PlanningToken, Vocabulary::kMaxSlots> slots;
  SceneGlobals globals;

  int slot_count() const {
    int n = 0;
    while (n < Vocabulary::kMaxSlots && !slots[n].is_null()) ++n;
    return n;
  }

  // Throws std::invalid_argument when an invariant is violated: non-null
  // slots must form a prefix, boxes must be ordered and inside [0,1],
  // relations must point backward at non-null slots.
  void validate() const;

  // Forces the invariants: null-pads after the first null slot, resets null
  // slots to defaults, drops relations whose target is invalid.
  Plan canonicalized() const;

  std::string to_json() const;            // fixed field order
  static Plan from_json(const std::string& text);

  std::uint64_t content_hash() const;

  friend bool operator==(const Plan& a, const Plan& b) {
    return a.slots == b.slots && a.globals == b.globals;
  }
};

}  // namespace composer::dsl
