#pragma once

#include <chrono>
#include <compare>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace esource {

using Date = std::chrono::sys_days;

std::optional<Date> parse_iso_date(std::string_view text);      // YYYY-MM-DD
std::optional<Date> parse_dmy_date(std::string_view text);      // DD/MM/YYYY
std::optional<Date> parse_epoch_days(std::string_view text);    // integer days since 1970-01-01
std::string format_iso_date(Date d);
std::string format_dmy_date(Date d);
std::string format_epoch_days(Date d);
Date make_date(int year, unsigned month, unsigned day);
bool is_weekend(Date d);

/// Whole years elapsed between birth and on (floor), negative if on < birth.
int age_in_years(Date birth, Date on);

/// A clinical timestamp of either date or minute granularity. A date-only
/// instant orders before every datetime falling on the same day.
struct Instant {
  Date day{};
  std::optional<int> minute_of_day;

  static Instant on(Date d) { return Instant{d, std::nullopt}; }
  static Instant at(Date d, int hour, int minute) { return Instant{d, hour * 60 + minute}; }

  /// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM` and `YYYY-MM-DDTHH:MM:SS` (seconds dropped).
  static std::optional<Instant> parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const Instant&, const Instant&) = default;
  friend std::strong_ordering operator<=>(const Instant& a, const Instant& b) {
    if (auto c = a.day <=> b.day; c != 0) return c;
    if (a.minute_of_day.has_value() != b.minute_of_day.has_value()) {
      return a.minute_of_day.has_value() ? std::strong_ordering::greater : std::strong_ordering::less;
    }
    return a.minute_of_day.value_or(0) <=> b.minute_of_day.value_or(0);
  }
};

/// Current wall-clock instant, minute resolution, UTC.
Instant wall_clock_now();

}  // namespace esource

namespace esource {

/// Source of "now" for components; simulations install a manual clock.
using Clock = std::function<Instant()>;

/// Settable clock shared by the components of one simulation.
class ManualClock {
 public:
  explicit ManualClock(Instant start) : now_(std::make_shared<Instant>(start)) {}
  void set(Instant t) { *now_ = t; }
  Instant now() const { return *now_; }
  Clock clock() const {
    return [p = now_] { return *p; };
  }

 private:
  std::shared_ptr<Instant> now_;
};

}  // namespace esource
