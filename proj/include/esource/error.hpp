#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace esource {

/// Error conditions raised across the pipeline. The names are part of the wire
/// contract: HTTP error bodies carry them verbatim.
enum class Errc {
  MalformedXml,
  SchemaViolation,
  DanglingQueryRef,
  DuplicateQueryId,
  UnknownForm,
  UnknownItem,
  TypeMismatch,
  InvariantViolation,
  UnknownConcept,
  UnknownSource,
  UnknownTerminology,
  UntranslatableFilter,
  PathEvaluationError,
  InvalidConfig,
  UnknownPatient,
  UnknownPractice,
  UnknownArtefact,
  RecordFetchFailed,
  NoActiveProtocol,
  UnknownSubject,
  WrongWorkflowState,
  TssRejection,
  ValidationFailed,
  AlreadyAssigned,
  NotConsented,
  UnknownStudy,
  SequenceViolation,
  UnknownArtifact,
  TransportError,
  Unauthorized,
  InvalidArgument,
  StorageError,
};

std::string_view to_string(Errc code) noexcept;
/// Inverse of to_string; unknown names map to InvalidArgument.
Errc errc_from_string(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace esource
