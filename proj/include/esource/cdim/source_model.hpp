#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "esource/cdim/catalog.hpp"
#include "esource/cdim/path.hpp"

namespace esource::cdim {

enum class DateFormat { Iso, Dmy, EpochDays };

struct PathMapping {
  RecordPath path;
  friend bool operator==(const PathMapping&, const PathMapping&) = default;
};
struct ImplicitValue {
  std::string literal;
  friend bool operator==(const ImplicitValue&, const ImplicitValue&) = default;
};
struct Unsupported {
  friend bool operator==(const Unsupported&, const Unsupported&) = default;
};
using MappingOutcome = std::variant<PathMapping, ImplicitValue, Unsupported>;

std::string describe(const MappingOutcome& m);

/// Per-source structural and terminological mapping (the data source model).
class SourceModel {
 public:
  /// Throws Error(InvalidConfig) if the three concept sets overlap, miss a
  /// catalog concept, or a family's paths do not share one entry path.
  static SourceModel from_json_text(std::string_view text, const Catalog& catalog);
  static SourceModel load(const std::filesystem::path& json_file, const Catalog& catalog);

  const std::string& source_id() const { return source_id_; }
  const std::string& display_name() const { return display_name_; }
  const std::string& record_root() const { return record_root_; }
  DateFormat date_format() const { return date_format_; }

  /// Terminology for a coded domain; "none" when the source has none.
  std::string terminology_for(std::string_view domain) const;
  const std::map<std::string, std::string>& native_terminologies() const { return terminologies_; }

  /// Throws Error(UnknownConcept) for ids outside the catalog.
  MappingOutcome outcome_for(std::string_view concept_id) const;

  const std::map<std::string, RecordPath>& mappings() const { return mappings_; }
  const std::map<std::string, std::string>& implicit_values() const { return implicit_; }
  const std::set<std::string>& unsupported() const { return unsupported_; }

  /// Native-to-canonical value rewrite for the concept (e.g. `K` -> `female`).
  std::string map_value(std::string_view concept_id, std::string_view native) const;
  /// Inverse of map_value; used by record renderers.
  std::string native_value(std::string_view concept_id, std::string_view canonical) const;

 private:
  std::string source_id_;
  std::string display_name_;
  std::string record_root_;
  DateFormat date_format_ = DateFormat::Iso;
  std::map<std::string, std::string> terminologies_;
  std::map<std::string, RecordPath> mappings_;
  std::map<std::string, std::string> implicit_;
  std::set<std::string> unsupported_;
  std::map<std::string, std::map<std::string, std::string>> value_maps_;
  const Catalog* catalog_ = nullptr;
};

/// Registered sources, keyed by source_id.
class SourceRegistry {
 public:
  /// Loads every `<id>.dsm.json` in the directory.
  static SourceRegistry load_dir(const std::filesystem::path& dir, const Catalog& catalog);
  static const SourceRegistry& builtin();

  void add(SourceModel model);
  /// Throws Error(UnknownSource).
  const SourceModel& get(std::string_view source_id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, SourceModel, std::less<>> models_;
};

/// Table-level lookup: which outcome does source `source_id` give `concept_id`.
/// Throws UnknownConcept or UnknownSource.
MappingOutcome map_to_source(std::string_view concept_id, std::string_view source_id,
                             const SourceRegistry& registry = SourceRegistry::builtin());

}  // namespace esource::cdim
