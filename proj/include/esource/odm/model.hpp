#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "esource/dnc/eligibility.hpp"
#include "esource/mediator/query.hpp"
#include "esource/util/xml.hpp"

namespace esource::odm {

inline constexpr std::string_view kOdmNamespace = "http://www.cdisc.org/ns/odm/v1.3";
inline constexpr std::string_view kExtNamespace = "urn:transform:odm-ext:1";
inline constexpr std::string_view kExtPrefix = "tfm";

enum class DataType { Text, Integer, Float, Date, DateTime, Coded };

std::string_view to_string(DataType t) noexcept;
std::optional<DataType> data_type_from_string(std::string_view s) noexcept;

/// True when `value` is a lexically valid instance of the data type. Coded
/// values are `<terminology>:<code>` with both parts non-empty.
bool value_matches(DataType t, std::string_view value);

/// Binding of an ItemDef to a CDIM concept through ODM's Alias element.
struct CdimAlias {
  std::string context;     // e.g. CDIM_2.2
  std::string name;        // as written in the document
  std::string concept_id;  // normalised `PREFIX/n`; empty if `name` does not normalise
  friend bool operator==(const CdimAlias&, const CdimAlias&) = default;
};

struct OtherAlias {
  std::string context;
  std::string name;
  friend bool operator==(const OtherAlias&, const OtherAlias&) = default;
};

struct ItemDef {
  std::string oid;
  std::string name;
  DataType data_type = DataType::Text;
  std::string question;
  bool mandatory = false;
  std::optional<CdimAlias> cdim_alias;
  std::vector<OtherAlias> other_aliases;
  std::optional<std::string> unit_item_ref;
  std::vector<std::string> extensions;  // verbatim unknown children
  friend bool operator==(const ItemDef&, const ItemDef&) = default;
};

struct ItemGroupDef {
  std::string oid;
  std::string name;
  std::optional<std::string> query_id;
  std::vector<ItemDef> items;
  std::vector<std::string> extensions;
  const ItemDef* find_item(std::string_view oid) const;
  friend bool operator==(const ItemGroupDef&, const ItemGroupDef&) = default;
};

struct FormDef {
  std::string oid;
  std::string name;
  std::vector<ItemGroupDef> item_groups;
  std::vector<std::string> extensions;
  const ItemDef* find_item(std::string_view oid) const;
  const ItemGroupDef* group_of(std::string_view item_oid) const;
  friend bool operator==(const FormDef&, const FormDef&) = default;
};

/// Position of a form in the study design and its workflow role.
enum class Stage { Crom1, Crom2, Prom1, Prom2 };
std::string_view to_string(Stage s) noexcept;
std::optional<Stage> stage_from_string(std::string_view s) noexcept;

struct ScheduledEvent {
  std::string event_oid;
  std::string event_name;
  std::string form_oid;
  int sequence_index = 0;
  std::optional<Stage> stage;
  friend bool operator==(const ScheduledEvent&, const ScheduledEvent&) = default;
};

struct OdmStudyBundle {
  std::string file_oid;
  std::string creation_datetime;
  std::string study_oid;
  std::string study_name;
  std::string study_description;
  std::string protocol_name;
  std::string metadata_version;
  std::string metadata_version_name;
  std::vector<FormDef> forms;
  std::map<std::string, mediator::DataExtractionQuery> queries;
  std::vector<ScheduledEvent> event_schedule;
  std::optional<dnc::EligibilityCriterion> eligibility;
  std::vector<std::string> root_extensions;      // verbatim unknown children of ODM
  std::vector<std::string> study_extensions;     // verbatim unknown children of Study
  std::vector<std::string> metadata_extensions;  // verbatim unknown children of MetaDataVersion
  std::vector<xml::NamespaceDecl> foreign_namespaces;

  const FormDef* find_form(std::string_view oid) const;
  const ScheduledEvent* schedule_for_form(std::string_view form_oid) const;
  const ScheduledEvent* schedule_for_stage(Stage stage) const;
  friend bool operator==(const OdmStudyBundle&, const OdmStudyBundle&) = default;
};

enum class Origin { Prepopulated, Manual, Edited };
std::string_view to_string(Origin o) noexcept;
std::optional<Origin> origin_from_string(std::string_view s) noexcept;

struct FieldValue {
  std::string item_oid;
  std::string value;
  std::optional<std::string> unit;
  Origin origin = Origin::Manual;
  /// The value the field was pre-populated with, kept when origin is Edited.
  std::optional<std::string> prepopulated_value;
  friend bool operator==(const FieldValue&, const FieldValue&) = default;
};

struct ClinicalDataSubmission {
  std::string study_oid;
  std::string metadata_version;
  std::string subject_key;
  std::string form_oid;
  std::string event_oid;
  std::vector<FieldValue> field_values;
  std::string submitted_at;
  std::string provenance_ref;
  friend bool operator==(const ClinicalDataSubmission&, const ClinicalDataSubmission&) = default;
};

}  // namespace esource::odm
