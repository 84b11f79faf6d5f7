#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esource/util/time.hpp"

namespace esource::ehr {

struct PopulationConfig {
  int size = 200;
  std::uint64_t seed = 42;
  Date reference_date = make_date(2016, 3, 1);
  std::vector<std::string> practices = {"P1"};
  double gord = 0.20;
  double ppi_given_gord = 0.75;
  double ppi_without_gord = 0.05;
  double ppi_lapsed = 0.15;  // share of PPI users whose last prescription is long past
  double hypertension = 0.25;
  double diabetes = 0.10;
  double heartburn_given_gord = 0.5;
  double lab_tested = 0.6;
  int min_age = 12;
  int max_age = 90;
};

/// A coded fact, identified by its terminology-map label. `variant` picks
/// which of the label's codes each source uses, so sources differ in code
/// choice as well as in terminology.
struct CodedFact {
  std::string label;
  Date date;
  int variant = 0;
  friend bool operator==(const CodedFact&, const CodedFact&) = default;
};

enum class MeasurementKind { Weight, Height, Systolic, Diastolic };

struct Measurement {
  MeasurementKind kind;
  std::string value;  // decimal text as recorded
  Date date;
  friend bool operator==(const Measurement&, const Measurement&) = default;
};

struct LabResult {
  std::string label;
  std::string value;
  std::string unit;
  Date date;
  int variant = 0;
  friend bool operator==(const LabResult&, const LabResult&) = default;
};

struct Patient {
  int index = 0;
  std::string practice_id;
  std::string sex;  // female | male
  Date birth;
  std::vector<Date> encounters;
  std::vector<CodedFact> diagnoses;
  std::vector<CodedFact> prescriptions;
  std::vector<CodedFact> symptoms;
  std::vector<Measurement> measurements;
  std::vector<LabResult> labs;
  friend bool operator==(const Patient&, const Patient&) = default;
};

struct Population {
  PopulationConfig config;
  std::vector<Patient> patients;

  std::vector<const Patient*> of_practice(const std::string& practice_id) const;
};

/// Deterministic in (config). Errors: InvalidConfig.
Population seed_population(const PopulationConfig& config);

struct PopulationSummary {
  int size = 0;
  int with_gord = 0;
  int with_ppi = 0;
  int adults = 0;
};
PopulationSummary summarize(const Population& p);

/// Native patient identifier of population member `index` in a source.
std::string native_id(const std::string& source_id, int index);
/// Inverse of native_id; -1 if the id does not belong to the source.
int index_from_native_id(const std::string& source_id, const std::string& id);

std::string_view to_string(MeasurementKind k) noexcept;

}  // namespace esource::ehr
