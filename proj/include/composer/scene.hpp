#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "composer/plan.hpp"

namespace composer::dsl {

// Parse failure with the byte offset of the offending input.
class ParseError : public std::runtime_error {
 public:
  ParseError(size_t offset, const std::string& msg)
      : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset), message_(msg) {}
  size_t offset() const { return offset_; }
  const std::string& message() const { return message_; }

 private:
  size_t offset_;
  std::string message_;
};

class PlacementError : public std::runtime_error {
 public:
  PlacementError(int slot, const std::string& msg)
      : std::runtime_error(msg + " (slot " + std::to_string(slot) + ")"),
        slot_(slot) {}
  int slot() const { return slot_; }

 private:
  int slot_;
};

struct SourceSpan {
  size_t begin = 0;
  size_t end = 0;
};

struct SceneClause {
  int background = Vocabulary::kColorWhite;
  std::optional<int> light;
  std::optional<int> effect;
  SourceSpan span;
};

struct RelationPhrase {
  int relation = Vocabulary::kRelationNone;
  int target_ordinal = 0;  // 1-based, as written in the prompt
  SourceSpan span;
};

struct EntityClause {
  std::optional<int> size;
  int color = 0;
  std::optional<int> texture;
  int object = Vocabulary::kObjectNull;
  std::optional<int> glyph;
  std::optional<int> pose;  // snapped bin
  std::optional<RelationPhrase> relation;
  SourceSpan span;
};

struct PromptAST {
  std::optional<SceneClause> scene;
  std::vector<EntityClause> entities;
};

// Recursive-descent parser for the prompt grammar. Case-insensitive,
// ';'-separated clauses; every error carries a byte offset.
PromptAST parse_prompt(const std::string& text);

// Ground-truth plan construction: attributes from the AST, locations from a
// deterministic placement search (first entity centered, unconstrained
// entities on a 3x3 anchor grid, related entities searched to satisfy their
// predicate). The search rng is seeded from a hash of the scene content, so
// the same prompt always yields the same boxes and the reward model can
// rebuild them from text alone; the seed argument is reserved and does not
// affect placement. Throws PlacementError after 1000 failed attempts.
Plan derive_plan(const PromptAST& ast, std::uint64_t seed);

// Canonical prompt for a plan; parses back to an equivalent AST.
std::string verbalize(const Plan& plan);

enum class Bucket { Simple, Medium, Complex };

const char* bucket_name(Bucket b);
std::optional<Bucket> bucket_from_name(const std::string& s);

// Random scene with entity count 1-2 / 3-5 / 6-8 per bucket. Deterministic
// in the seed; the same seed fed to derive_plan reproduces the locations.
// Scenes are kept renderable and scoreable: entity colors avoid the
// background color, relations are only chosen when geometrically satisfiable
// and the sparkle effect is skipped on very bright backgrounds.
Plan sample_scene(std::uint64_t seed, Bucket bucket);

}  // namespace composer::dsl
