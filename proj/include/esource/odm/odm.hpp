#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "esource/odm/model.hpp"

namespace esource::odm {

/// Parses an ODM study document carrying the `tfm` extensions.
///
/// Errors: MalformedXml, SchemaViolation (missing required ODM structure or
/// unresolvable refs), DuplicateQueryId (two ItemGroupDefs share a QueryId;
/// checked before query resolution), DanglingQueryRef.
OdmStudyBundle parse_study_bundle(std::string_view xml_text);

/// Canonical, deterministic serialisation; unknown extension elements are
/// re-emitted byte for byte.
std::string serialize_study_bundle(const OdmStudyBundle& bundle);

enum class Severity { Error, Warning };

enum class FindingCode {
  BadAliasFormat,
  BadAliasContext,
  DanglingQueryRef,
  DuplicateQueryId,
  OrphanQuery,
  EmptyQueryId,
  BadUnitItemRef,
  ScheduleOrder,
  UnknownScheduledForm,
  DuplicateStage,
  DuplicateOid,
};

std::string_view to_string(FindingCode c) noexcept;

struct Finding {
  Severity severity = Severity::Error;
  FindingCode code = FindingCode::BadAliasFormat;
  std::string subject;  // oid or query id the finding is about
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool has_errors() const;
  bool contains(FindingCode code) const;
};

ValidationReport validate_extensions(const OdmStudyBundle& bundle);

/// Builds a ClinicalData ODM document for one completed form.
///
/// Errors: UnknownForm, UnknownItem, TypeMismatch, InvariantViolation (edited
/// without a differing pre-populated value, duplicate item).
std::string attach_clinical_data(const OdmStudyBundle& bundle, const ClinicalDataSubmission& response);

/// Reads back a document produced by attach_clinical_data.
ClinicalDataSubmission parse_clinical_data(std::string_view xml_text);

}  // namespace esource::odm
