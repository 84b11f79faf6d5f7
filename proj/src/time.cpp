#include "esource/util/time.hpp"

#include <charconv>
#include <cstdio>

namespace esource {

namespace {

bool read_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::optional<Date> checked(int y, int m, int d) {
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

}  // namespace

Date make_date(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  return sys_days{year_month_day{year{y}, month{m}, day{d}}};
}

std::optional<Date> parse_iso_date(std::string_view t) {
  if (t.size() != 10 || t[4] != '-' || t[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!read_int(t.substr(0, 4), y) || !read_int(t.substr(5, 2), m) || !read_int(t.substr(8, 2), d)) {
    return std::nullopt;
  }
  return checked(y, m, d);
}

std::optional<Date> parse_dmy_date(std::string_view t) {
  if (t.size() != 10 || t[2] != '/' || t[5] != '/') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!read_int(t.substr(0, 2), d) || !read_int(t.substr(3, 2), m) || !read_int(t.substr(6, 4), y)) {
    return std::nullopt;
  }
  return checked(y, m, d);
}

std::optional<Date> parse_epoch_days(std::string_view t) {
  bool negative = !t.empty() && t.front() == '-';
  int n = 0;
  if (!read_int(negative ? t.substr(1) : t, n)) return std::nullopt;
  return Date{std::chrono::days{negative ? -n : n}};
}

std::string format_iso_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_dmy_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02u/%02u/%04d", static_cast<unsigned>(ymd.day()),
                static_cast<unsigned>(ymd.month()), static_cast<int>(ymd.year()));
  return buf;
}

std::string format_epoch_days(Date d) { return std::to_string(d.time_since_epoch().count()); }

bool is_weekend(Date d) {
  std::chrono::weekday wd{d};
  return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

int age_in_years(Date birth, Date on) {
  std::chrono::year_month_day b{birth}, o{on};
  int years = static_cast<int>(o.year()) - static_cast<int>(b.year());
  auto before_birthday = std::pair{static_cast<unsigned>(o.month()), static_cast<unsigned>(o.day())} <
                         std::pair{static_cast<unsigned>(b.month()), static_cast<unsigned>(b.day())};
  if (before_birthday) --years;
  return years;
}

std::optional<Instant> Instant::parse(std::string_view text) {
  if (text.size() == 10) {
    auto d = parse_iso_date(text);
    if (!d) return std::nullopt;
    return Instant::on(*d);
  }
  if ((text.size() != 16 && text.size() != 19) || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
    return std::nullopt;
  }
  auto d = parse_iso_date(text.substr(0, 10));
  int h = 0, m = 0;
  if (!d || !read_int(text.substr(11, 2), h) || !read_int(text.substr(14, 2), m) || h > 23 || m > 59) {
    return std::nullopt;
  }
  if (text.size() == 19) {
    int s = 0;
    if (text[16] != ':' || !read_int(text.substr(17, 2), s) || s > 59) return std::nullopt;
  }
  return Instant::at(*d, h, m);
}

std::string Instant::to_string() const {
  auto out = format_iso_date(day);
  if (minute_of_day) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "T%02d:%02d", *minute_of_day / 60, *minute_of_day % 60);
    out += buf;
  }
  return out;
}

Instant wall_clock_now() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto day = floor<days>(now);
  auto minutes = duration_cast<std::chrono::minutes>(now - day).count();
  return Instant{day, static_cast<int>(minutes)};
}

}  // namespace esource
