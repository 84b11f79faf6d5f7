#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "esource/cdim/catalog.hpp"
#include "esource/cdim/source_model.hpp"
#include "esource/cdim/terminology.hpp"
#include "esource/mediator/query.hpp"
#include "esource/odm/model.hpp"
#include "esource/util/time.hpp"

namespace esource::mediator {

/// Source-native XML snapshot of one patient's record.
struct PatientRecordExtract {
  std::string source_id;
  std::string patient_native_id;
  std::string xml_document;
};

struct TranslatedEntry {
  std::string concept_id;
  cdim::MappingOutcome outcome;
  bool projected = true;
};

/// One selector compiled against a source: its family's mappings plus the
/// code filter rewritten into the source's native terminology.
struct TranslatedSelector {
  ConceptSelector selector;
  std::string anchor;  // concept id of the family anchor
  std::optional<std::set<std::string>> code_filter;
  std::string terminology;  // native terminology of the anchor, "none" if not coded
  std::vector<TranslatedEntry> entries;  // anchor first
};

struct TranslatedQuery {
  std::string query_id;
  std::string source_id;
  std::vector<TranslatedSelector> selectors;
};

/// Errors: UnknownConcept, UntranslatableFilter, InvalidArgument (projection
/// outside every selector's family).
TranslatedQuery translate_query(const DataExtractionQuery& q, const cdim::SourceModel& sm,
                                const cdim::Catalog& catalog = cdim::Catalog::builtin(),
                                const cdim::TerminologyMap& terms = cdim::TerminologyMap::builtin());

inline constexpr std::string_view kImplicitSourcePath = "(implicit)";

struct ResultRow {
  std::string concept_id;
  std::string value;
  std::optional<std::string> unit;
  std::optional<Instant> instant;
  std::string source_path;  // indexed record path, or "(implicit)"
  std::size_t sequence = 0;  // entry position in document order
  std::size_t selector = 0;
  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

struct AnnotatedResultSet {
  std::vector<ResultRow> rows;
  std::vector<const ResultRow*> rows_for(std::string_view concept_id) const;
};

struct ExecutionContext {
  /// Reference date for Within(days); normally the encounter date.
  Date as_of{};
  /// Applied to research-identifier values (the DNC installs the pseudonym).
  std::function<std::string(std::string_view)> identifier_transform;
};

/// Errors: PathEvaluationError, InvalidArgument (record from another source).
AnnotatedResultSet execute_query(const TranslatedQuery& tq, const PatientRecordExtract& rec,
                                 const cdim::SourceModel& sm, const ExecutionContext& ctx,
                                 const cdim::Catalog& catalog = cdim::Catalog::builtin());

enum class UnfilledReason { NoAlias, NoQuery, Unsupported, NoData, Incompatible };
std::string_view to_string(UnfilledReason r) noexcept;

struct PrefilledField {
  std::string item_oid;
  std::string concept_id;
  std::string value;
  std::optional<std::string> unit;
  std::optional<Instant> instant;
  std::string source_path;
};

struct PrepopulatedForm {
  std::string form_oid;
  std::map<std::string, PrefilledField> filled;
  std::map<std::string, UnfilledReason> unfilled;  // manual-required
};

/// Errors: DanglingQueryRef, plus anything translate/execute raise.
PrepopulatedForm prepopulate_form(const odm::FormDef& form,
                                  const std::map<std::string, DataExtractionQuery>& queries,
                                  const PatientRecordExtract& rec, const cdim::SourceModel& sm,
                                  const ExecutionContext& ctx,
                                  const cdim::Catalog& catalog = cdim::Catalog::builtin(),
                                  const cdim::TerminologyMap& terms = cdim::TerminologyMap::builtin());

/// Parses a date in the source's native format; nullopt if malformed.
std::optional<Instant> parse_native_instant(std::string_view text, cdim::DateFormat fmt);
std::string format_native_date(Date d, cdim::DateFormat fmt);

}  // namespace esource::mediator
