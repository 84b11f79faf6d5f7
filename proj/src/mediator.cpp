#include "esource/mediator/mediator.hpp"

#include <algorithm>

#include "esource/cdim/concept_id.hpp"
#include "esource/error.hpp"
#include "esource/util/strings.hpp"
#include "esource/util/xml.hpp"

namespace esource::mediator {

std::vector<const ResultRow*> AnnotatedResultSet::rows_for(std::string_view concept_id) const {
  std::vector<const ResultRow*> out;
  for (const auto& r : rows) {
    if (r.concept_id == concept_id) out.push_back(&r);
  }
  return out;
}

std::string_view to_string(UnfilledReason r) noexcept {
  switch (r) {
    case UnfilledReason::NoAlias: return "no-alias";
    case UnfilledReason::NoQuery: return "no-query";
    case UnfilledReason::Unsupported: return "unsupported";
    case UnfilledReason::NoData: return "no-data";
    case UnfilledReason::Incompatible: return "incompatible";
  }
  return "no-data";
}

std::optional<Instant> parse_native_instant(std::string_view text, cdim::DateFormat fmt) {
  text = trim(text);
  switch (fmt) {
    case cdim::DateFormat::Iso: return Instant::parse(text);
    case cdim::DateFormat::EpochDays: {
      auto d = parse_epoch_days(text);
      if (!d) return std::nullopt;
      return Instant::on(*d);
    }
    case cdim::DateFormat::Dmy: {
      auto d = parse_dmy_date(text.substr(0, 10));
      if (!d) return std::nullopt;
      if (text.size() == 10) return Instant::on(*d);
      // "dd/mm/yyyy HH:MM"
      auto rest = text.substr(10);
      if (rest.size() != 6 || rest[0] != ' ' || rest[3] != ':') return std::nullopt;
      auto iso = format_iso_date(*d) + "T" + std::string(rest.substr(1));
      return Instant::parse(iso);
    }
  }
  return std::nullopt;
}

std::string format_native_date(Date d, cdim::DateFormat fmt) {
  switch (fmt) {
    case cdim::DateFormat::Iso: return format_iso_date(d);
    case cdim::DateFormat::Dmy: return format_dmy_date(d);
    case cdim::DateFormat::EpochDays: return format_epoch_days(d);
  }
  return format_iso_date(d);
}

TranslatedQuery translate_query(const DataExtractionQuery& q, const cdim::SourceModel& sm,
                                const cdim::Catalog& catalog, const cdim::TerminologyMap& terms) {
  TranslatedQuery tq{q.query_id, sm.source_id(), {}};
  std::set<std::string> covered;
  for (const auto& sel : q.selectors) {
    TranslatedSelector ts;
    ts.selector = sel;
    auto family = catalog.family_of(sel.concept_id);
    ts.anchor = family.front()->concept_id;
    const auto& anchor = *family.front();
    ts.terminology = anchor.domain ? sm.terminology_for(*anchor.domain) : "none";
    for (const auto* member : family) {
      covered.insert(member->concept_id);
      bool projected = q.projection.empty() ||
                       std::find(q.projection.begin(), q.projection.end(), member->concept_id) != q.projection.end();
      ts.entries.push_back({member->concept_id, sm.outcome_for(member->concept_id), projected});
    }
    bool anchor_unsupported = std::holds_alternative<cdim::Unsupported>(ts.entries.front().outcome);
    if (sel.code_filter && !anchor_unsupported) {
      if (!anchor.domain || ts.terminology == "none") {
        throw Error(Errc::UntranslatableFilter, "filter '" + *sel.code_filter + "' on " + ts.anchor + " in source " +
                                                    sm.source_id() + " which has no terminology for it");
      }
      auto codes = terms.codes_for(*sel.code_filter, ts.terminology);
      if (codes.empty()) {
        throw Error(Errc::UntranslatableFilter,
                    "'" + *sel.code_filter + "' has no " + ts.terminology + " code (source " + sm.source_id() + ")");
      }
      ts.code_filter = std::move(codes);
    }
    tq.selectors.push_back(std::move(ts));
  }
  for (const auto& p : q.projection) {
    const auto& id = catalog.resolve(p).concept_id;
    if (!covered.count(id)) {
      throw Error(Errc::InvalidArgument, "query " + q.query_id + " projects " + id + " outside its selectors");
    }
  }
  return tq;
}

namespace {

struct Entry {
  std::size_t sequence;
  const xml::Element* element;
  std::string indexed_path;
  std::string anchor_value;
  std::optional<Instant> instant;
};

const cdim::RecordPath* path_of(const TranslatedEntry& e) {
  const auto* p = std::get_if<cdim::PathMapping>(&e.outcome);
  return p ? &p->path : nullptr;
}

std::string required_value(const cdim::RecordPath& path, const xml::Element& element, const std::string& where) {
  auto v = select_value(path, element);
  if (!v) throw Error(Errc::PathEvaluationError, path.to_string() + " has no value at " + where);
  return *v;
}

}  // namespace

AnnotatedResultSet execute_query(const TranslatedQuery& tq, const PatientRecordExtract& rec,
                                 const cdim::SourceModel& sm, const ExecutionContext& ctx,
                                 const cdim::Catalog& catalog) {
  if (rec.source_id != tq.source_id || sm.source_id() != tq.source_id) {
    throw Error(Errc::InvalidArgument, "query translated for " + tq.source_id + " run against " + rec.source_id);
  }
  AnnotatedResultSet out;
  if (tq.selectors.empty()) return out;
  auto doc = xml::parse(rec.xml_document);
  const auto& root = doc.root();
  if (root.name != sm.record_root()) {
    throw Error(Errc::PathEvaluationError, "record root <" + root.name + "> is not <" + sm.record_root() + ">");
  }

  auto render = [&](const std::string& concept_id, const std::string& native) {
    const auto& c = catalog.resolve(concept_id);
    switch (c.value_kind) {
      case cdim::ValueKind::Identifier:
        return ctx.identifier_transform && c.role == cdim::Role::Anchor && concept_id == "CDIM/3"
                   ? ctx.identifier_transform(native)
                   : native;
      case cdim::ValueKind::Coded:
        if (c.domain) return sm.terminology_for(*c.domain) + ":" + native;
        return sm.map_value(concept_id, native);
      case cdim::ValueKind::Instant: {
        auto i = parse_native_instant(native, sm.date_format());
        if (!i) throw Error(Errc::PathEvaluationError, "'" + native + "' is not a date for " + concept_id);
        return i->to_string();
      }
      default: return native;
    }
  };

  for (std::size_t s = 0; s < tq.selectors.size(); ++s) {
    const auto& ts = tq.selectors[s];
    const auto& anchor = ts.entries.front();
    const TranslatedEntry* instant_entry = nullptr;
    const TranslatedEntry* unit_entry = nullptr;
    for (const auto& e : ts.entries) {
      auto role = catalog.resolve(e.concept_id).role;
      if (role == cdim::Role::Instant) instant_entry = &e;
      if (role == cdim::Role::Unit) unit_entry = &e;
    }

    if (std::holds_alternative<cdim::Unsupported>(anchor.outcome)) continue;
    if (std::holds_alternative<cdim::ImplicitValue>(anchor.outcome)) {
      for (const auto& e : ts.entries) {
        const auto* member_lit = std::get_if<cdim::ImplicitValue>(&e.outcome);
        if (e.projected && member_lit) {
          out.rows.push_back({e.concept_id, member_lit->literal, std::nullopt, std::nullopt,
                              std::string(kImplicitSourcePath), 0, s});
        }
      }
      continue;
    }

    const auto& anchor_path = *path_of(anchor);
    std::vector<Entry> entries;
    std::size_t seq = 0;
    for (auto& m : cdim::match_elements(anchor_path.entry(), root)) {
      Entry e{seq++, m.element, m.indexed_path, required_value(anchor_path, *m.element, m.indexed_path), std::nullopt};
      if (instant_entry) {
        if (const auto* ip = path_of(*instant_entry)) {
          auto raw = required_value(*ip, *m.element, m.indexed_path);
          e.instant = parse_native_instant(raw, sm.date_format());
          if (!e.instant) throw Error(Errc::PathEvaluationError, "'" + raw + "' at " + m.indexed_path + " is not a date");
        }
      }
      if (ts.code_filter && !ts.code_filter->count(std::string(trim(e.anchor_value)))) continue;
      entries.push_back(std::move(e));
    }

    auto later = [](const Entry& a, const Entry& b) {
      // strict "a before b" under (instant, sequence); absent instants sort first
      if (a.instant != b.instant) {
        if (!a.instant) return true;
        if (!b.instant) return false;
        return *a.instant < *b.instant;
      }
      return a.sequence < b.sequence;
    };
    switch (ts.selector.temporal.kind) {
      case Temporal::Kind::All: break;
      case Temporal::Kind::Latest:
        if (!entries.empty()) {
          auto best = *std::max_element(entries.begin(), entries.end(), later);
          entries = {best};
        }
        break;
      case Temporal::Kind::Within: {
        auto lo = ctx.as_of - std::chrono::days(ts.selector.temporal.days);
        std::erase_if(entries, [&](const Entry& e) {
          return !e.instant || e.instant->day < lo || e.instant->day > ctx.as_of;
        });
        break;
      }
    }

    for (const auto& e : entries) {
      std::optional<std::string> unit;
      if (unit_entry) {
        if (const auto* up = path_of(*unit_entry)) {
          unit = select_value(*up, *e.element);
        } else if (const auto* ul = std::get_if<cdim::ImplicitValue>(&unit_entry->outcome)) {
          unit = ul->literal;
        }
      }
      for (const auto& member : ts.entries) {
        if (!member.projected) continue;
        auto role = catalog.resolve(member.concept_id).role;
        ResultRow row{member.concept_id, {}, std::nullopt, e.instant, {}, e.sequence, s};
        if (const auto* p = path_of(member)) {
          auto raw = required_value(*p, *e.element, e.indexed_path);
          row.value = render(member.concept_id, std::string(trim(raw)));
          row.source_path = e.indexed_path + (p->selector == cdim::RecordPath::Selector::Text
                                                  ? std::string("/text()")
                                                  : "/@" + p->attribute);
        } else if (const auto* lit = std::get_if<cdim::ImplicitValue>(&member.outcome)) {
          row.value = lit->literal;
          row.source_path = std::string(kImplicitSourcePath);
        } else {
          continue;
        }
        if (role == cdim::Role::Anchor || role == cdim::Role::Value) row.unit = unit;
        out.rows.push_back(std::move(row));
      }
    }
  }
  return out;
}

PrepopulatedForm prepopulate_form(const odm::FormDef& form, const std::map<std::string, DataExtractionQuery>& queries,
                                  const PatientRecordExtract& rec, const cdim::SourceModel& sm,
                                  const ExecutionContext& ctx, const cdim::Catalog& catalog,
                                  const cdim::TerminologyMap& terms) {
  PrepopulatedForm out;
  out.form_oid = form.oid;
  for (const auto& group : form.item_groups) {
    std::optional<AnnotatedResultSet> results;
    if (group.query_id) {
      auto q = queries.find(*group.query_id);
      if (q == queries.end()) {
        throw Error(Errc::DanglingQueryRef, "group " + group.oid + " references undefined query " + *group.query_id);
      }
      results = execute_query(translate_query(q->second, sm, catalog, terms), rec, sm, ctx, catalog);
    }
    for (const auto& item : group.items) {
      if (!item.cdim_alias || item.cdim_alias->concept_id.empty()) {
        out.unfilled[item.oid] = UnfilledReason::NoAlias;
        continue;
      }
      const auto& concept_id = item.cdim_alias->concept_id;
      if (!results) {
        out.unfilled[item.oid] = UnfilledReason::NoQuery;
        continue;
      }
      if (std::holds_alternative<cdim::Unsupported>(sm.outcome_for(concept_id))) {
        out.unfilled[item.oid] = UnfilledReason::Unsupported;
        continue;
      }
      auto rows = results->rows_for(concept_id);
      if (rows.empty()) {
        out.unfilled[item.oid] = UnfilledReason::NoData;
        continue;
      }
      const auto* best = *std::max_element(rows.begin(), rows.end(), [](const ResultRow* a, const ResultRow* b) {
        if (a->instant != b->instant) {
          if (!a->instant) return true;
          if (!b->instant) return false;
          return *a->instant < *b->instant;
        }
        return a->sequence < b->sequence;
      });
      if (!odm::value_matches(item.data_type, best->value)) {
        out.unfilled[item.oid] = UnfilledReason::Incompatible;
        continue;
      }
      out.filled[item.oid] = PrefilledField{item.oid, concept_id, best->value, best->unit, best->instant, best->source_path};
    }
  }
  return out;
}

}  // namespace esource::mediator
