#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace esource::cdim {

enum class ValueKind { Identifier, Coded, Datum, Instant, UnitLabel, Scalar };

std::string_view to_string(ValueKind k) noexcept;
std::optional<ValueKind> value_kind_from_string(std::string_view s) noexcept;

/// Position of a concept within its family. A family groups the concepts a
/// single record entry yields, e.g. a weight reading's value, date and unit.
enum class Role { Anchor, Instant, Unit, Value };

struct CdimConcept {
  std::string concept_id;
  std::string label;
  ValueKind value_kind = ValueKind::Scalar;
  std::string family;
  Role role = Role::Anchor;
  std::optional<std::string> domain;  // diagnosis, drug, lab, symptom for coded anchors
};

class Catalog {
 public:
  static Catalog load(const std::filesystem::path& json_file);
  static Catalog from_json_text(std::string_view text);
  /// Catalog shipped with the build.
  static const Catalog& builtin();

  /// Throws Error(UnknownConcept). Accepts any spelling normalize_concept_id does.
  const CdimConcept& resolve(std::string_view concept_id) const;
  bool contains(std::string_view concept_id) const;
  const std::vector<CdimConcept>& concepts() const { return concepts_; }
  /// Members of the concept's family, anchor first.
  std::vector<const CdimConcept*> family_of(std::string_view concept_id) const;
  const std::string& version() const { return version_; }

 private:
  std::string version_;
  std::vector<CdimConcept> concepts_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Directory holding catalog, source models and terminology map.
std::filesystem::path resource_dir();

}  // namespace esource::cdim
