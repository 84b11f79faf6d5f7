#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "esource/util/xml.hpp"

namespace esource::cdim {

/// Absolute record path: `/seg(/seg)*` followed by an optional value selector
/// `/@attr` or `/text()`. A segment is `name`, `name[@attr='v']` or `name[n]`
/// (1-based position among same-named siblings, used in source_path traces).
struct RecordPath {
  struct Step {
    std::string name;
    std::optional<std::pair<std::string, std::string>> predicate;
    std::optional<int> position;
    friend bool operator==(const Step&, const Step&) = default;
  };
  enum class Selector { None, Attribute, Text };

  std::vector<Step> steps;
  Selector selector = Selector::None;
  std::string attribute;

  /// Throws Error(InvalidConfig) on grammar violations.
  static RecordPath parse(std::string_view text);
  std::string to_string() const;
  /// The element part, without the value selector.
  RecordPath entry() const;
  friend bool operator==(const RecordPath&, const RecordPath&) = default;
};

struct PathMatch {
  const xml::Element* element;
  std::string indexed_path;  // e.g. /pacjent[1]/pomiary[1]/pomiar[3]
};

/// Elements matched by the path's steps, in document order. Throws
/// Error(PathEvaluationError) if the first step does not name the root.
std::vector<PathMatch> match_elements(const RecordPath& path, const xml::Element& root);

/// Value at the selector, relative to an element the entry path matched.
/// nullopt if the attribute is absent.
std::optional<std::string> select_value(const RecordPath& path, const xml::Element& entry);

}  // namespace esource::cdim
