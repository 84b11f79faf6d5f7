#pragma once

#include <optional>
#include <string>
#include <vector>

namespace esource::mediator {

struct Temporal {
  enum class Kind { Latest, All, Within };
  Kind kind = Kind::Latest;
  int days = 0;  // only meaningful for Within; must be >= 1

  static Temporal latest() { return {Kind::Latest, 0}; }
  static Temporal all() { return {Kind::All, 0}; }
  static Temporal within(int d) { return {Kind::Within, d}; }
  friend bool operator==(const Temporal&, const Temporal&) = default;
};

/// Selects one concept family from a record, optionally restricted to the
/// codes a terminology-neutral label resolves to.
struct ConceptSelector {
  std::string concept_id;
  std::optional<std::string> code_filter;  // concept label in the terminology map
  Temporal temporal;
  friend bool operator==(const ConceptSelector&, const ConceptSelector&) = default;
};

/// Source-neutral data extraction query, referenced from ODM item groups.
struct DataExtractionQuery {
  std::string query_id;
  std::vector<ConceptSelector> selectors;
  std::vector<std::string> projection;
  friend bool operator==(const DataExtractionQuery&, const DataExtractionQuery&) = default;
};

}  // namespace esource::mediator
