#pragma once

#include <string>
#include <string_view>

#include "factrank/kb_store.hpp"

namespace factrank {

// Relation label -> plain phrase: camelCase boundaries split and lowercased,
// underscores to spaces, spaces collapsed. Spaced labels pass through.
// Idempotent: relation_phrase(relation_phrase(x)) == relation_phrase(x).
//   "hasOccupation" -> "has occupation"
//   "member of"     -> "member of"
//   "hasURL"        -> "has url"
std::string relation_phrase(std::string_view label);

// Entity canonical name -> display phrase: underscores to spaces, everything
// else (case, parenthetical disambiguators) verbatim.
//   "UFO_(band)" -> "UFO (band)"
std::string entity_phrase(std::string_view canonical_name);

struct VerbalizedTriple {
  TripleId id{};
  std::string text;  // entity_phrase(head) + " " + relation_phrase(r) + " " + entity_phrase(tail)
};

// Throws std::out_of_range on ids not resolvable in the snapshot.
VerbalizedTriple verbalize(const Triple& triple, const KbSnapshot& kb);

} // namespace factrank
