#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "esource/cdim/source_model.hpp"
#include "esource/cdim/terminology.hpp"
#include "esource/ehr/population.hpp"
#include "esource/mediator/mediator.hpp"
#include "esource/net/http.hpp"
#include "esource/util/append_log.hpp"
#include "esource/util/time.hpp"

namespace esource::ehr {

struct EncounterEvent {
  std::string source_id;
  std::string patient_native_id;
  Instant encounter_instant;
  std::string practice_id;
  friend bool operator==(const EncounterEvent&, const EncounterEvent&) = default;
};

struct StoredArtefact {
  std::string patient_native_id;
  std::string artefact_id;
  std::string payload;
  std::string stored_at;
};

struct ClinicConfig {
  double visit_probability = 0.10;  // per registered patient per open day
  int open_minute = 8 * 60;
  int close_minute = 17 * 60;
};

/// One simulated EHR installation of a given source type.
class EhrSystem {
 public:
  EhrSystem(std::shared_ptr<const Population> population, const cdim::SourceModel& model,
            const cdim::TerminologyMap& terms = cdim::TerminologyMap::builtin(),
            std::optional<std::filesystem::path> data_dir = std::nullopt, Clock clock = wall_clock_now);

  const std::string& source_id() const { return model_.source_id(); }
  const cdim::SourceModel& model() const { return model_; }

  void register_practice(const std::string& practice_id, ClinicConfig config = {});
  bool serves(const std::string& practice_id) const;

  /// Errors: UnknownPatient.
  mediator::PatientRecordExtract export_record(const std::string& patient_native_id) const;

  /// Patients of the practice who attend on `date`, ordered by instant.
  /// Pure in (population, practice, date, seed); weekends are closed.
  /// Errors: UnknownPractice.
  std::vector<EncounterEvent> run_clinic_day(const std::string& practice_id, Date date, std::uint64_t seed) const;

  /// Makes the encounter part of the patient's record from now on.
  void note_encounter(const EncounterEvent& e);

  /// Write-once storage. Errors: UnknownPatient.
  std::string store_artefact(const std::string& patient_native_id, const std::string& payload);
  /// Errors: UnknownArtefact.
  StoredArtefact fetch_artefact(const std::string& artefact_id) const;
  std::vector<std::string> list_artefacts(const std::string& patient_native_id) const;

  /// Endpoints: GET /patients/{id}/record, POST /patients/{id}/artefacts,
  /// GET /patients/{id}/artefacts, GET /artefacts/{aid},
  /// GET /clinic/{practice}/day/{date}[?seed=S].
  const net::Router& router() const { return router_; }
  void set_day_seed(std::uint64_t seed) { day_seed_ = seed; }

 private:
  const Patient& patient(const std::string& native_id) const;
  void build_router();

  std::shared_ptr<const Population> population_;
  const cdim::SourceModel& model_;
  const cdim::TerminologyMap& terms_;
  Clock clock_;
  std::map<std::string, ClinicConfig> practices_;
  std::uint64_t day_seed_ = 1;

  mutable std::mutex mutex_;
  std::map<int, std::set<Date>> extra_encounters_;
  std::map<std::string, StoredArtefact> artefacts_;
  std::map<std::string, std::vector<std::string>> by_patient_;
  AppendLog artefact_log_;
  AppendLog encounter_log_;
  net::Router router_;
};

/// Serialises a clinic day as `<encounters practice=.. date=..><encounter .../></encounters>`.
std::string encounters_to_xml(const std::string& practice_id, Date date, const std::vector<EncounterEvent>& events);
std::vector<EncounterEvent> encounters_from_xml(const std::string& source_id, std::string_view xml_text);

}  // namespace esource::ehr
