#include "esource/ehr/ehr_system.hpp"

#include <algorithm>
#include <cstdio>

#include "esource/ehr/record.hpp"
#include "esource/error.hpp"
#include "esource/util/digest.hpp"
#include "esource/util/rng.hpp"
#include "esource/util/xml.hpp"

namespace esource::ehr {

EhrSystem::EhrSystem(std::shared_ptr<const Population> population, const cdim::SourceModel& model,
                     const cdim::TerminologyMap& terms, std::optional<std::filesystem::path> data_dir, Clock clock)
    : population_(std::move(population)), model_(model), terms_(terms), clock_(std::move(clock)) {
  if (data_dir) {
    std::filesystem::create_directories(*data_dir);
    artefact_log_.open(*data_dir / "artefacts.jsonl");
    encounter_log_.open(*data_dir / "encounters.jsonl");
    artefact_log_.replay([&](const nlohmann::json& r) {
      StoredArtefact a{r.at("patient"), r.at("artefact_id"), base64_decode(r.at("payload_b64").get<std::string>()),
                       r.at("stored_at")};
      if (sha256_hex(a.payload) != r.at("sha256").get<std::string>()) {
        throw Error(Errc::StorageError, "artefact " + a.artefact_id + " failed its digest check on reload");
      }
      by_patient_[a.patient_native_id].push_back(a.artefact_id);
      artefacts_.emplace(a.artefact_id, std::move(a));
    });
    encounter_log_.replay([&](const nlohmann::json& r) {
      auto day = parse_iso_date(r.at("date").get<std::string>());
      if (day) extra_encounters_[r.at("index").get<int>()].insert(*day);
    });
  }
  build_router();
}

void EhrSystem::register_practice(const std::string& practice_id, ClinicConfig config) {
  practices_[practice_id] = config;
}

bool EhrSystem::serves(const std::string& practice_id) const { return practices_.count(practice_id) > 0; }

const Patient& EhrSystem::patient(const std::string& id) const {
  int index = index_from_native_id(model_.source_id(), id);
  if (index < 0 || index >= static_cast<int>(population_->patients.size())) {
    throw Error(Errc::UnknownPatient, id + " in " + model_.source_id());
  }
  return population_->patients[static_cast<std::size_t>(index)];
}

mediator::PatientRecordExtract EhrSystem::export_record(const std::string& id) const {
  Patient p = patient(id);
  {
    std::lock_guard lock(mutex_);
    if (auto it = extra_encounters_.find(p.index); it != extra_encounters_.end()) {
      p.encounters.insert(p.encounters.end(), it->second.begin(), it->second.end());
    }
  }
  return {model_.source_id(), id, render_record(p, model_, terms_)};
}

std::vector<EncounterEvent> EhrSystem::run_clinic_day(const std::string& practice_id, Date date,
                                                      std::uint64_t seed) const {
  auto it = practices_.find(practice_id);
  if (it == practices_.end()) throw Error(Errc::UnknownPractice, practice_id + " at " + model_.source_id());
  std::vector<EncounterEvent> events;
  if (is_weekend(date)) return events;
  const auto& cfg = it->second;
  Rng rng(derive_seed(seed, practice_id + "|" + format_iso_date(date)));
  for (const auto* p : population_->of_practice(practice_id)) {
    bool visits = rng.bernoulli(cfg.visit_probability);
    auto minute = static_cast<int>(rng.range(cfg.open_minute, cfg.close_minute - 1));
    if (visits) {
      events.push_back({model_.source_id(), native_id(model_.source_id(), p->index),
                        Instant::at(date, minute / 60, minute % 60), practice_id});
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.encounter_instant < b.encounter_instant; });
  return events;
}

void EhrSystem::note_encounter(const EncounterEvent& e) {
  const auto& p = patient(e.patient_native_id);
  std::lock_guard lock(mutex_);
  if (extra_encounters_[p.index].insert(e.encounter_instant.day).second) {
    encounter_log_.append({{"index", p.index}, {"date", format_iso_date(e.encounter_instant.day)}});
  }
}

std::string EhrSystem::store_artefact(const std::string& id, const std::string& payload) {
  patient(id);
  std::lock_guard lock(mutex_);
  char buf[48];
  std::snprintf(buf, sizeof buf, "ART-%s-%06zu", model_.source_id().c_str(), artefacts_.size() + 1);
  StoredArtefact a{id, buf, payload, clock_().to_string()};
  artefact_log_.append({{"artefact_id", a.artefact_id},
                        {"patient", id},
                        {"stored_at", a.stored_at},
                        {"sha256", sha256_hex(payload)},
                        {"payload_b64", base64_encode(payload)}});
  by_patient_[id].push_back(a.artefact_id);
  auto aid = a.artefact_id;
  artefacts_.emplace(aid, std::move(a));
  return aid;
}

StoredArtefact EhrSystem::fetch_artefact(const std::string& artefact_id) const {
  std::lock_guard lock(mutex_);
  auto it = artefacts_.find(artefact_id);
  if (it == artefacts_.end()) throw Error(Errc::UnknownArtefact, artefact_id);
  return it->second;
}

std::vector<std::string> EhrSystem::list_artefacts(const std::string& id) const {
  patient(id);
  std::lock_guard lock(mutex_);
  auto it = by_patient_.find(id);
  return it == by_patient_.end() ? std::vector<std::string>{} : it->second;
}

void EhrSystem::build_router() {
  router_.add("GET", "/patients/{id}/record", [this](const net::Request& r) {
    return net::Response::xml(export_record(r.param("id")).xml_document);
  });
  router_.add("POST", "/patients/{id}/artefacts", [this](const net::Request& r) {
    return net::Response::json({{"artefact_id", store_artefact(r.param("id"), r.body)}}, 201);
  });
  router_.add("GET", "/patients/{id}/artefacts", [this](const net::Request& r) {
    return net::Response::json({{"artefacts", list_artefacts(r.param("id"))}});
  });
  router_.add("GET", "/artefacts/{aid}", [this](const net::Request& r) {
    auto a = fetch_artefact(r.param("aid"));
    net::Response out;
    out.body = a.payload;
    out.headers["x-stored-at"] = a.stored_at;
    out.headers["x-patient"] = a.patient_native_id;
    return out;
  });
  router_.add("GET", "/clinic/{practice}/day/{date}", [this](const net::Request& r) {
    auto date = parse_iso_date(r.param("date"));
    if (!date) throw Error(Errc::InvalidArgument, "bad date " + r.param("date"));
    std::uint64_t seed = day_seed_;
    if (auto s = r.query_param("seed")) seed = std::stoull(*s);
    auto events = run_clinic_day(r.param("practice"), *date, seed);
    for (const auto& e : events) note_encounter(e);
    return net::Response::xml(encounters_to_xml(r.param("practice"), *date, events));
  });
}

std::string encounters_to_xml(const std::string& practice_id, Date date, const std::vector<EncounterEvent>& events) {
  xml::Node root("encounters");
  root.attr("practice", practice_id).attr("date", format_iso_date(date));
  for (const auto& e : events) {
    root.add("encounter").attr("patient", e.patient_native_id).attr("instant", e.encounter_instant.to_string());
  }
  return xml::serialize(root);
}

std::vector<EncounterEvent> encounters_from_xml(const std::string& source_id, std::string_view xml_text) {
  auto doc = xml::parse(std::string(xml_text));
  const auto& root = doc.root();
  if (root.name != "encounters") throw Error(Errc::SchemaViolation, "expected <encounters>");
  std::string practice(root.attr("practice").value_or(""));
  std::vector<EncounterEvent> out;
  for (const auto& e : root.children) {
    auto instant = Instant::parse(e.attr("instant").value_or(""));
    if (!instant) throw Error(Errc::SchemaViolation, "encounter without a valid instant");
    out.push_back({source_id, std::string(e.attr("patient").value_or("")), *instant, practice});
  }
  return out;
}

}  // namespace esource::ehr
