#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "esource/util/time.hpp"

namespace esource::analytics {

enum class Arm { T, C };
std::string_view to_string(Arm a) noexcept;
std::optional<Arm> arm_from_string(std::string_view s) noexcept;

enum class EventKind { Flagged, Consented, Randomized, Crom1, Crom2, Prom1, Prom2 };
std::string_view to_string(EventKind k) noexcept;
std::optional<EventKind> event_kind_from_string(std::string_view s) noexcept;

/// A practice taking part in the evaluation. `arm` is the practice's cluster
/// arm; `pair_id` links it to its matched practice in the other arm.
struct PracticeInfo {
  std::string practice_id;
  std::string country;
  Arm arm = Arm::T;
  std::string pair_id;
  std::string source_id;
  /// Active recruitment span; derived from the event instants when absent.
  std::optional<double> weeks;
  friend bool operator==(const PracticeInfo&, const PracticeInfo&) = default;
};

struct RecruitmentEvent {
  std::string practice_id;
  std::string country;
  std::string pseudonym;
  EventKind kind = EventKind::Flagged;
  Instant instant;
  std::optional<Arm> arm;
  friend bool operator==(const RecruitmentEvent&, const RecruitmentEvent&) = default;
};

nlohmann::json to_json(const PracticeInfo& p);
nlohmann::json to_json(const RecruitmentEvent& e);
PracticeInfo practice_from_json(const nlohmann::json& j);
RecruitmentEvent event_from_json(const nlohmann::json& j);

/// Append-only event stream plus the practice registry it refers to.
/// Text form: JSON lines, `{"practice":...}` records and `{"event":...}` records.
class RecruitmentLog {
 public:
  void add_practice(PracticeInfo p);
  void append(RecruitmentEvent e);

  const std::map<std::string, PracticeInfo>& practices() const { return practices_; }
  const std::vector<RecruitmentEvent>& events() const { return events_; }
  const PracticeInfo* practice(const std::string& id) const;

  /// The event's own arm, else its practice's arm.
  std::optional<Arm> arm_of(const RecruitmentEvent& e) const;

  /// Keeps only events (and practices) from the given countries.
  RecruitmentLog restricted_to(const std::set<std::string>& countries) const;

  static RecruitmentLog from_jsonl(std::string_view text);
  static RecruitmentLog load(const std::filesystem::path& path);
  std::string to_jsonl() const;

 private:
  std::map<std::string, PracticeInfo> practices_;
  std::vector<RecruitmentEvent> events_;
};

/// Kinds that must already be on file for a subject before `k` is recorded.
std::vector<EventKind> prerequisites(EventKind k);

/// Subjects whose event sequence breaks the workflow partial order.
std::vector<std::string> order_violations(const RecruitmentLog& log);

struct ArmCounts {
  int t = 0;
  int c = 0;
  int total() const { return t + c; }
  friend bool operator==(const ArmCounts&, const ArmCounts&) = default;
};

struct RecruitmentTable {
  std::map<std::string, ArmCounts> by_country;
  ArmCounts totals;
  int grand_total() const { return totals.total(); }
  /// Fraction of the grand total recruited in the given countries (0 when empty).
  double share(const std::set<std::string>& countries) const;
};

/// Randomized events grouped by country and arm.
RecruitmentTable tabulate_recruitment(const RecruitmentLog& log);

struct PracticeRate {
  std::string practice_id;
  Arm arm = Arm::T;
  std::string pair_id;
  int randomized = 0;
  double weeks = 0;
  double per_week = 0;
};

/// Randomized subjects per active week for every registered practice.
std::vector<PracticeRate> weekly_rates(const RecruitmentLog& log);

struct ArmMeans {
  std::optional<double> t;
  std::optional<double> c;
};
/// Means over practices of complete matched pairs; unpaired practices are left out.
ArmMeans mean_weekly_rate(const std::vector<PracticeRate>& rates);

struct CompletionFraction {
  int completed = 0;
  int started = 0;
  /// Absent when nobody started.
  std::optional<double> fraction() const;
};

struct CompletionRates {
  CompletionFraction crom_t, crom_c;  // Crom2 given Crom1
  CompletionFraction prom_t, prom_c;  // Prom2 given Prom1
};

CompletionRates completion_rates(const RecruitmentLog& log);

std::string format_table(const RecruitmentTable& table);

}  // namespace esource::analytics
