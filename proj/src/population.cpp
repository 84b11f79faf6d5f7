#include "esource/ehr/population.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "esource/error.hpp"
#include "esource/util/rng.hpp"

namespace esource::ehr {

std::string_view to_string(MeasurementKind k) noexcept {
  switch (k) {
    case MeasurementKind::Weight: return "weight";
    case MeasurementKind::Height: return "height";
    case MeasurementKind::Systolic: return "systolic";
    case MeasurementKind::Diastolic: return "diastolic";
  }
  return "weight";
}

std::vector<const Patient*> Population::of_practice(const std::string& practice_id) const {
  std::vector<const Patient*> out;
  for (const auto& p : patients) {
    if (p.practice_id == practice_id) out.push_back(&p);
  }
  return out;
}

namespace {

std::string decimal(double v, int places) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

Date days_before(Date ref, std::int64_t n) { return ref - std::chrono::days(n); }

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidConfig, std::string(name) + " must lie in [0, 1]");
}

}  // namespace

Population seed_population(const PopulationConfig& config) {
  if (config.size < 1) throw Error(Errc::InvalidConfig, "population size must be >= 1");
  if (config.practices.empty()) throw Error(Errc::InvalidConfig, "at least one practice is required");
  if (config.min_age < 0 || config.max_age < config.min_age) throw Error(Errc::InvalidConfig, "bad age range");
  check_probability(config.gord, "gord");
  check_probability(config.ppi_given_gord, "ppi_given_gord");
  check_probability(config.ppi_without_gord, "ppi_without_gord");
  check_probability(config.ppi_lapsed, "ppi_lapsed");
  check_probability(config.hypertension, "hypertension");
  check_probability(config.diabetes, "diabetes");
  check_probability(config.heartburn_given_gord, "heartburn_given_gord");
  check_probability(config.lab_tested, "lab_tested");

  Population pop;
  pop.config = config;
  const auto ref = config.reference_date;
  for (int i = 0; i < config.size; ++i) {
    Rng rng(derive_seed(config.seed, "patient", static_cast<std::uint64_t>(i)));
    Patient p;
    p.index = i;
    p.practice_id = config.practices[static_cast<std::size_t>(i) % config.practices.size()];
    p.sex = rng.bernoulli(0.5) ? "female" : "male";
    auto age = rng.range(config.min_age, config.max_age);
    auto ymd = std::chrono::year_month_day(ref);
    auto birthday = make_date(static_cast<int>(ymd.year()) - static_cast<int>(age), static_cast<unsigned>(ymd.month()),
                              std::min(static_cast<unsigned>(ymd.day()), 28u));
    p.birth = days_before(birthday, rng.range(0, 364));

    auto past = [&](std::int64_t lo, std::int64_t hi) { return days_before(ref, rng.range(lo, hi)); };

    for (auto n = rng.range(1, 5); n > 0; --n) p.encounters.push_back(past(1, 3 * 365));
    std::sort(p.encounters.begin(), p.encounters.end());

    bool gord = rng.bernoulli(config.gord);
    if (gord) p.diagnoses.push_back({"GORD", past(30, 5 * 365), static_cast<int>(rng.range(0, 2))});
    bool htn = rng.bernoulli(config.hypertension);
    if (htn) p.diagnoses.push_back({"Hypertension", past(30, 5 * 365), static_cast<int>(rng.range(0, 1))});
    bool dm = rng.bernoulli(config.diabetes);
    if (dm) p.diagnoses.push_back({"Type2Diabetes", past(30, 5 * 365), static_cast<int>(rng.range(0, 1))});

    bool ppi = rng.bernoulli(gord ? config.ppi_given_gord : config.ppi_without_gord);
    if (ppi) {
      bool lapsed = rng.bernoulli(config.ppi_lapsed);
      auto last = lapsed ? rng.range(150, 400) : rng.range(1, 60);
      int variant = static_cast<int>(rng.range(0, 3));
      auto count = rng.range(1, 3);
      for (auto k = count - 1; k >= 0; --k) p.prescriptions.push_back({"PPI", days_before(ref, last + 30 * k), variant});
    }
    if (htn && rng.bernoulli(0.6)) p.prescriptions.push_back({"Amlodipine", past(1, 80), 0});
    if (dm && rng.bernoulli(0.8)) p.prescriptions.push_back({"Metformin", past(1, 80), 0});
    if (gord && rng.bernoulli(config.heartburn_given_gord)) p.symptoms.push_back({"Heartburn", past(1, 365), 0});

    for (auto n = rng.range(1, 3); n > 0; --n) {
      p.measurements.push_back({MeasurementKind::Weight, decimal(50.0 + rng.uniform() * 60.0, 1), past(1, 3 * 365)});
    }
    p.measurements.push_back({MeasurementKind::Height, std::to_string(rng.range(150, 195)), past(1, 5 * 365)});
    for (auto n = rng.range(1, 3); n > 0; --n) {
      auto d = past(1, 3 * 365);
      p.measurements.push_back({MeasurementKind::Systolic, std::to_string(rng.range(105, 170)), d});
      p.measurements.push_back({MeasurementKind::Diastolic, std::to_string(rng.range(60, 100)), d});
    }
    if (rng.bernoulli(config.lab_tested)) {
      p.labs.push_back({"Haemoglobin", decimal(11.0 + rng.uniform() * 6.0, 1), "g/dL", past(1, 2 * 365), 0});
      if (rng.bernoulli(0.5)) {
        p.labs.push_back({"Creatinine", std::to_string(rng.range(50, 120)), "umol/L", past(1, 2 * 365), 0});
      }
    }
    pop.patients.push_back(std::move(p));
  }
  return pop;
}

PopulationSummary summarize(const Population& p) {
  PopulationSummary s;
  s.size = static_cast<int>(p.patients.size());
  for (const auto& x : p.patients) {
    bool g = std::any_of(x.diagnoses.begin(), x.diagnoses.end(), [](const auto& d) { return d.label == "GORD"; });
    bool r = std::any_of(x.prescriptions.begin(), x.prescriptions.end(), [](const auto& d) { return d.label == "PPI"; });
    s.with_gord += g;
    s.with_ppi += r;
    s.adults += age_in_years(x.birth, p.config.reference_date) >= 18;
  }
  return s;
}

namespace {

std::string prefix_for(const std::string& source_id) {
  if (source_id.empty()) return "X-";
  return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(source_id[0])))) + "-";
}

}  // namespace

std::string native_id(const std::string& source_id, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index + 1);
  return prefix_for(source_id) + buf;
}

int index_from_native_id(const std::string& source_id, const std::string& id) {
  auto prefix = prefix_for(source_id);
  if (id.size() != prefix.size() + 6 || id.compare(0, prefix.size(), prefix) != 0) return -1;
  int n = 0;
  for (std::size_t i = prefix.size(); i < id.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(id[i]))) return -1;
    n = n * 10 + (id[i] - '0');
  }
  return n - 1;
}

}  // namespace esource::ehr
