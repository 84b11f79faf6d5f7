#include "esource/analytics/recruitment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "esource/error.hpp"
#include "esource/util/file.hpp"
#include "esource/util/strings.hpp"

namespace esource::analytics {

namespace {

constexpr EventKind kKinds[] = {EventKind::Flagged, EventKind::Consented, EventKind::Randomized, EventKind::Crom1,
                                EventKind::Crom2,   EventKind::Prom1,     EventKind::Prom2};

}  // namespace

std::string_view to_string(Arm a) noexcept { return a == Arm::T ? "T" : "C"; }

std::optional<Arm> arm_from_string(std::string_view s) noexcept {
  if (s == "T") return Arm::T;
  if (s == "C") return Arm::C;
  return std::nullopt;
}

std::string_view to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::Flagged: return "Flagged";
    case EventKind::Consented: return "Consented";
    case EventKind::Randomized: return "Randomized";
    case EventKind::Crom1: return "Crom1";
    case EventKind::Crom2: return "Crom2";
    case EventKind::Prom1: return "Prom1";
    case EventKind::Prom2: return "Prom2";
  }
  return "Flagged";
}

std::optional<EventKind> event_kind_from_string(std::string_view s) noexcept {
  for (auto k : kKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

nlohmann::json to_json(const PracticeInfo& p) {
  nlohmann::json j{{"practice", p.practice_id}, {"country", p.country}, {"arm", to_string(p.arm)},
                   {"pair", p.pair_id},         {"source", p.source_id}};
  if (p.weeks) j["weeks"] = *p.weeks;
  return j;
}

nlohmann::json to_json(const RecruitmentEvent& e) {
  nlohmann::json j{{"event", to_string(e.kind)},
                   {"practice", e.practice_id},
                   {"country", e.country},
                   {"pseudonym", e.pseudonym},
                   {"instant", e.instant.to_string()}};
  if (e.arm) j["arm"] = to_string(*e.arm);
  return j;
}

PracticeInfo practice_from_json(const nlohmann::json& j) {
  PracticeInfo p;
  p.practice_id = j.at("practice").get<std::string>();
  if (p.practice_id.empty()) throw Error(Errc::InvalidArgument, "practice id is empty");
  p.country = j.value("country", "");
  auto arm = arm_from_string(j.value("arm", ""));
  if (!arm) throw Error(Errc::InvalidArgument, "practice " + p.practice_id + " has no arm T/C");
  p.arm = *arm;
  p.pair_id = j.value("pair", "");
  p.source_id = j.value("source", "");
  if (j.contains("weeks") && !j["weeks"].is_null()) p.weeks = j["weeks"].get<double>();
  return p;
}

RecruitmentEvent event_from_json(const nlohmann::json& j) {
  RecruitmentEvent e;
  auto kind = event_kind_from_string(j.at("event").get<std::string>());
  if (!kind) throw Error(Errc::InvalidArgument, "unknown event kind " + j.at("event").dump());
  e.kind = *kind;
  e.practice_id = j.at("practice").get<std::string>();
  e.country = j.value("country", "");
  e.pseudonym = j.at("pseudonym").get<std::string>();
  auto instant = Instant::parse(j.at("instant").get<std::string>());
  if (!instant) throw Error(Errc::InvalidArgument, "bad instant " + j.at("instant").dump());
  e.instant = *instant;
  if (j.contains("arm")) {
    e.arm = arm_from_string(j["arm"].get<std::string>());
    if (!e.arm) throw Error(Errc::InvalidArgument, "bad arm " + j["arm"].dump());
  }
  return e;
}

void RecruitmentLog::add_practice(PracticeInfo p) { practices_[p.practice_id] = std::move(p); }

void RecruitmentLog::append(RecruitmentEvent e) {
  if (e.country.empty()) {
    if (auto* p = practice(e.practice_id)) e.country = p->country;
  }
  events_.push_back(std::move(e));
}

const PracticeInfo* RecruitmentLog::practice(const std::string& id) const {
  auto it = practices_.find(id);
  return it == practices_.end() ? nullptr : &it->second;
}

std::optional<Arm> RecruitmentLog::arm_of(const RecruitmentEvent& e) const {
  if (e.arm) return e.arm;
  if (auto* p = practice(e.practice_id)) return p->arm;
  return std::nullopt;
}

RecruitmentLog RecruitmentLog::restricted_to(const std::set<std::string>& countries) const {
  RecruitmentLog out;
  for (const auto& [id, p] : practices_) {
    if (countries.count(p.country)) out.add_practice(p);
  }
  for (const auto& e : events_) {
    if (countries.count(e.country)) out.events_.push_back(e);
  }
  return out;
}

RecruitmentLog RecruitmentLog::from_jsonl(std::string_view text) {
  RecruitmentLog log;
  std::size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.contains("event")) {
        log.append(event_from_json(j));
      } else {
        log.add_practice(practice_from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidArgument, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

RecruitmentLog RecruitmentLog::load(const std::filesystem::path& path) { return from_jsonl(read_file(path)); }

std::string RecruitmentLog::to_jsonl() const {
  std::string out;
  for (const auto& [id, p] : practices_) out += to_json(p).dump() + "\n";
  for (const auto& e : events_) out += to_json(e).dump() + "\n";
  return out;
}

std::vector<EventKind> prerequisites(EventKind k) {
  switch (k) {
    case EventKind::Flagged: return {};
    case EventKind::Consented: return {EventKind::Flagged};
    case EventKind::Randomized: return {EventKind::Consented};
    case EventKind::Crom1: return {EventKind::Randomized};
    case EventKind::Crom2: return {EventKind::Crom1};
    case EventKind::Prom1: return {EventKind::Randomized};
    case EventKind::Prom2: return {EventKind::Prom1};
  }
  return {};
}

std::vector<std::string> order_violations(const RecruitmentLog& log) {
  std::map<std::string, std::set<EventKind>> seen;
  std::set<std::string> bad;
  for (const auto& e : log.events()) {
    auto& have = seen[e.pseudonym];
    for (auto need : prerequisites(e.kind)) {
      if (!have.count(need)) bad.insert(e.pseudonym);
    }
    if (!have.insert(e.kind).second) bad.insert(e.pseudonym);
  }
  return {bad.begin(), bad.end()};
}

double RecruitmentTable::share(const std::set<std::string>& countries) const {
  if (grand_total() == 0) return 0;
  int n = 0;
  for (const auto& c : countries) {
    if (auto it = by_country.find(c); it != by_country.end()) n += it->second.total();
  }
  return static_cast<double>(n) / grand_total();
}

RecruitmentTable tabulate_recruitment(const RecruitmentLog& log) {
  RecruitmentTable t;
  for (const auto& [id, p] : log.practices()) t.by_country.try_emplace(p.country);
  for (const auto& e : log.events()) {
    if (e.kind != EventKind::Randomized) continue;
    auto arm = log.arm_of(e);
    if (!arm) continue;
    auto& row = t.by_country[e.country];
    (*arm == Arm::T ? row.t : row.c) += 1;
    (*arm == Arm::T ? t.totals.t : t.totals.c) += 1;
  }
  return t;
}

std::vector<PracticeRate> weekly_rates(const RecruitmentLog& log) {
  struct Span {
    int n = 0;
    std::optional<Date> first, last;
  };
  std::map<std::string, Span> spans;
  for (const auto& e : log.events()) {
    if (e.kind != EventKind::Randomized) continue;
    auto& s = spans[e.practice_id];
    ++s.n;
    if (!s.first || e.instant.day < *s.first) s.first = e.instant.day;
    if (!s.last || e.instant.day > *s.last) s.last = e.instant.day;
  }
  std::vector<PracticeRate> out;
  for (const auto& [id, p] : log.practices()) {
    PracticeRate r{id, p.arm, p.pair_id};
    auto it = spans.find(id);
    r.randomized = it == spans.end() ? 0 : it->second.n;
    if (p.weeks) {
      r.weeks = *p.weeks;
    } else if (r.randomized > 0) {
      auto days = (*it->second.last - *it->second.first).count();
      r.weeks = static_cast<double>(days / 7 + 1);
    }
    r.per_week = r.weeks > 0 ? r.randomized / r.weeks : 0.0;
    out.push_back(r);
  }
  return out;
}

ArmMeans mean_weekly_rate(const std::vector<PracticeRate>& rates) {
  std::map<std::string, std::set<Arm>> arms_by_pair;
  for (const auto& r : rates) {
    if (!r.pair_id.empty()) arms_by_pair[r.pair_id].insert(r.arm);
  }
  double sum[2] = {0, 0};
  int n[2] = {0, 0};
  for (const auto& r : rates) {
    if (r.pair_id.empty() || arms_by_pair[r.pair_id].size() != 2) continue;
    int i = r.arm == Arm::T ? 0 : 1;
    sum[i] += r.per_week;
    ++n[i];
  }
  ArmMeans m;
  if (n[0]) m.t = sum[0] / n[0];
  if (n[1]) m.c = sum[1] / n[1];
  return m;
}

std::optional<double> CompletionFraction::fraction() const {
  if (started == 0) return std::nullopt;
  return static_cast<double>(completed) / started;
}

CompletionRates completion_rates(const RecruitmentLog& log) {
  std::map<std::string, std::set<EventKind>> kinds;
  std::map<std::string, Arm> arm;
  for (const auto& e : log.events()) {
    kinds[e.pseudonym].insert(e.kind);
    if (auto a = log.arm_of(e)) arm[e.pseudonym] = *a;
  }
  CompletionRates r;
  for (const auto& [subject, ks] : kinds) {
    auto a = arm.find(subject);
    if (a == arm.end()) continue;
    bool t = a->second == Arm::T;
    if (ks.count(EventKind::Crom1)) {
      auto& f = t ? r.crom_t : r.crom_c;
      ++f.started;
      if (ks.count(EventKind::Crom2)) ++f.completed;
    }
    if (ks.count(EventKind::Prom1)) {
      auto& f = t ? r.prom_t : r.prom_c;
      ++f.started;
      if (ks.count(EventKind::Prom2)) ++f.completed;
    }
  }
  return r;
}

std::string format_table(const RecruitmentTable& table) {
  std::ostringstream out;
  char line[96];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s\n", "Country", "T", "C", "Total");
  out << line;
  for (const auto& [country, n] : table.by_country) {
    std::snprintf(line, sizeof line, "%-16s %8d %8d %8d\n", country.c_str(), n.t, n.c, n.total());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-16s %8d %8d %8d\n", "Total", table.totals.t, table.totals.c,
                table.grand_total());
  out << line;
  return out.str();
}

}  // namespace esource::analytics
