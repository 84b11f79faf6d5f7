#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace esource::cdim {

/// Static cross-coding table: each demo concept label lists its codes per
/// terminology. Translation is concept-level, hence symmetric.
class TerminologyMap {
 public:
  struct Entry {
    std::string label;
    std::string domain;
    std::map<std::string, std::set<std::string>> codes;  // terminology -> codes
  };

  static TerminologyMap load(const std::filesystem::path& json_file);
  static TerminologyMap from_json_text(std::string_view text);
  static const TerminologyMap& builtin();

  bool knows(std::string_view terminology) const;

  /// Codes in `to` that share a concept with `code` in `from`. Identity when
  /// from == to. Throws Error(UnknownTerminology).
  std::set<std::string> translate_code(std::string_view code, std::string_view from, std::string_view to) const;

  /// Codes for a concept label in one terminology; empty if none. Throws
  /// UnknownTerminology, or UnknownConcept for an unknown label.
  std::set<std::string> codes_for(std::string_view label, std::string_view terminology) const;

  /// Labels whose code set in `terminology` contains `code`.
  std::vector<std::string> labels_for(std::string_view code, std::string_view terminology) const;

  const std::vector<Entry>& entries() const { return entries_; }
  const std::set<std::string>& terminologies() const { return terminologies_; }

 private:
  std::set<std::string> terminologies_;
  std::vector<Entry> entries_;
};

}  // namespace esource::cdim
