#include "esource/error.hpp"

#include <array>
#include <utility>

namespace esource {

namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 32> kNames{{
    {Errc::MalformedXml, "MalformedXml"},
    {Errc::SchemaViolation, "SchemaViolation"},
    {Errc::DanglingQueryRef, "DanglingQueryRef"},
    {Errc::DuplicateQueryId, "DuplicateQueryId"},
    {Errc::UnknownForm, "UnknownForm"},
    {Errc::UnknownItem, "UnknownItem"},
    {Errc::TypeMismatch, "TypeMismatch"},
    {Errc::InvariantViolation, "InvariantViolation"},
    {Errc::UnknownConcept, "UnknownConcept"},
    {Errc::UnknownSource, "UnknownSource"},
    {Errc::UnknownTerminology, "UnknownTerminology"},
    {Errc::UntranslatableFilter, "UntranslatableFilter"},
    {Errc::PathEvaluationError, "PathEvaluationError"},
    {Errc::InvalidConfig, "InvalidConfig"},
    {Errc::UnknownPatient, "UnknownPatient"},
    {Errc::UnknownPractice, "UnknownPractice"},
    {Errc::UnknownArtefact, "UnknownArtefact"},
    {Errc::RecordFetchFailed, "RecordFetchFailed"},
    {Errc::NoActiveProtocol, "NoActiveProtocol"},
    {Errc::UnknownSubject, "UnknownSubject"},
    {Errc::WrongWorkflowState, "WrongWorkflowState"},
    {Errc::TssRejection, "TssRejection"},
    {Errc::ValidationFailed, "ValidationFailed"},
    {Errc::AlreadyAssigned, "AlreadyAssigned"},
    {Errc::NotConsented, "NotConsented"},
    {Errc::UnknownStudy, "UnknownStudy"},
    {Errc::SequenceViolation, "SequenceViolation"},
    {Errc::UnknownArtifact, "UnknownArtifact"},
    {Errc::TransportError, "TransportError"},
    {Errc::Unauthorized, "Unauthorized"},
    {Errc::InvalidArgument, "InvalidArgument"},
    {Errc::StorageError, "StorageError"},
}};

}  // namespace

std::string_view to_string(Errc code) noexcept {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

Errc errc_from_string(std::string_view name) noexcept {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return Errc::InvalidArgument;
}

}  // namespace esource
