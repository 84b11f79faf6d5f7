#include "esource/odm/odm.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <regex>
#include <set>
#include <unordered_map>

#include "esource/cdim/concept_id.hpp"
#include "esource/error.hpp"
#include "esource/util/strings.hpp"
#include "esource/util/time.hpp"

namespace esource::odm {

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(DataType t) noexcept {
  switch (t) {
    case DataType::Text: return "text";
    case DataType::Integer: return "integer";
    case DataType::Float: return "float";
    case DataType::Date: return "date";
    case DataType::DateTime: return "datetime";
    case DataType::Coded: return "coded";
  }
  return "text";
}

std::optional<DataType> data_type_from_string(std::string_view s) noexcept {
  if (s == "text" || s == "string") return DataType::Text;
  if (s == "integer") return DataType::Integer;
  if (s == "float" || s == "double") return DataType::Float;
  if (s == "date") return DataType::Date;
  if (s == "datetime") return DataType::DateTime;
  if (s == "coded") return DataType::Coded;
  return std::nullopt;
}

bool value_matches(DataType t, std::string_view v) {
  switch (t) {
    case DataType::Text: return true;
    case DataType::Integer: {
      if (v.empty()) return false;
      std::size_t i = (v[0] == '+' || v[0] == '-') ? 1 : 0;
      if (i == v.size()) return false;
      return std::all_of(v.begin() + static_cast<std::ptrdiff_t>(i), v.end(),
                         [](char c) { return c >= '0' && c <= '9'; });
    }
    case DataType::Float: {
      if (v.empty() || trim(v).size() != v.size()) return false;
      std::string s(v);
      char* end = nullptr;
      std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size()) return false;
      // reject inf/nan spellings; clinical values are finite decimals
      return s.find_first_of("iInN") == std::string::npos;
    }
    case DataType::Date: return parse_iso_date(v).has_value();
    case DataType::DateTime: return v.size() > 10 && Instant::parse(v).has_value();
    case DataType::Coded: {
      auto pos = v.find(':');
      return pos != std::string_view::npos && pos > 0 && pos + 1 < v.size();
    }
  }
  return false;
}

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Crom1: return "CROM1";
    case Stage::Crom2: return "CROM2";
    case Stage::Prom1: return "PROM1";
    case Stage::Prom2: return "PROM2";
  }
  return "CROM1";
}

std::optional<Stage> stage_from_string(std::string_view s) noexcept {
  if (s == "CROM1") return Stage::Crom1;
  if (s == "CROM2") return Stage::Crom2;
  if (s == "PROM1") return Stage::Prom1;
  if (s == "PROM2") return Stage::Prom2;
  return std::nullopt;
}

std::string_view to_string(Origin o) noexcept {
  switch (o) {
    case Origin::Prepopulated: return "prepopulated";
    case Origin::Manual: return "manual";
    case Origin::Edited: return "edited";
  }
  return "manual";
}

std::optional<Origin> origin_from_string(std::string_view s) noexcept {
  if (s == "prepopulated") return Origin::Prepopulated;
  if (s == "manual") return Origin::Manual;
  if (s == "edited") return Origin::Edited;
  return std::nullopt;
}

std::string_view to_string(FindingCode c) noexcept {
  switch (c) {
    case FindingCode::BadAliasFormat: return "BadAliasFormat";
    case FindingCode::BadAliasContext: return "BadAliasContext";
    case FindingCode::DanglingQueryRef: return "DanglingQueryRef";
    case FindingCode::DuplicateQueryId: return "DuplicateQueryId";
    case FindingCode::OrphanQuery: return "OrphanQuery";
    case FindingCode::EmptyQueryId: return "EmptyQueryId";
    case FindingCode::BadUnitItemRef: return "BadUnitItemRef";
    case FindingCode::ScheduleOrder: return "ScheduleOrder";
    case FindingCode::UnknownScheduledForm: return "UnknownScheduledForm";
    case FindingCode::DuplicateStage: return "DuplicateStage";
    case FindingCode::DuplicateOid: return "DuplicateOid";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Lookups

const ItemDef* ItemGroupDef::find_item(std::string_view item_oid) const {
  for (const auto& i : items) {
    if (i.oid == item_oid) return &i;
  }
  return nullptr;
}

const ItemDef* FormDef::find_item(std::string_view item_oid) const {
  for (const auto& g : item_groups) {
    if (const auto* i = g.find_item(item_oid)) return i;
  }
  return nullptr;
}

const ItemGroupDef* FormDef::group_of(std::string_view item_oid) const {
  for (const auto& g : item_groups) {
    if (g.find_item(item_oid)) return &g;
  }
  return nullptr;
}

const FormDef* OdmStudyBundle::find_form(std::string_view oid) const {
  for (const auto& f : forms) {
    if (f.oid == oid) return &f;
  }
  return nullptr;
}

const ScheduledEvent* OdmStudyBundle::schedule_for_form(std::string_view form_oid) const {
  for (const auto& e : event_schedule) {
    if (e.form_oid == form_oid) return &e;
  }
  return nullptr;
}

const ScheduledEvent* OdmStudyBundle::schedule_for_stage(Stage stage) const {
  for (const auto& e : event_schedule) {
    if (e.stage == stage) return &e;
  }
  return nullptr;
}

bool ValidationReport::has_errors() const {
  return std::any_of(findings.begin(), findings.end(), [](const Finding& f) { return f.severity == Severity::Error; });
}

bool ValidationReport::contains(FindingCode code) const {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.code == code; });
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

constexpr std::string_view kXmlNamespace = "http://www.w3.org/XML/1998/namespace";

[[noreturn]] void schema_violation(const std::string& what) { throw Error(Errc::SchemaViolation, what); }

std::string required_attr(const xml::Element& e, std::string_view name) {
  auto v = e.attr(name);
  if (!v || v->empty()) schema_violation("<" + e.name + "> lacks " + std::string(name));
  return std::string(*v);
}

std::string optional_attr(const xml::Element& e, std::string_view name, std::string_view ns = {}) {
  return std::string(e.attr(name, ns).value_or(""));
}

bool is_odm(const xml::Element& e, std::string_view local) { return e.is(kOdmNamespace, local); }
bool is_ext(const xml::Element& e, std::string_view local) { return e.is(kExtNamespace, local); }

std::string normalized_or_raw(std::string_view raw) {
  auto n = cdim::normalize_concept_id(raw);
  return n ? *n : std::string(trim(raw));
}

int parse_int_attr(const xml::Element& e, std::string_view name) {
  auto v = required_attr(e, name);
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) schema_violation(std::string(name) + " is not an integer");
  return out;
}

mediator::DataExtractionQuery parse_query(const xml::Element& e) {
  mediator::DataExtractionQuery q;
  q.query_id = std::string(trim(required_attr(e, "QueryId")));
  for (const auto& c : e.children) {
    if (is_ext(c, "Selector")) {
      mediator::ConceptSelector s;
      s.concept_id = normalized_or_raw(required_attr(c, "ConceptId"));
      auto temporal = optional_attr(c, "Temporal");
      if (temporal.empty() || temporal == "Latest") {
        s.temporal = mediator::Temporal::latest();
      } else if (temporal == "All") {
        s.temporal = mediator::Temporal::all();
      } else if (temporal == "Within") {
        int days = parse_int_attr(c, "Days");
        if (days < 1) schema_violation("Within(days) requires days >= 1 in query " + q.query_id);
        s.temporal = mediator::Temporal::within(days);
      } else {
        schema_violation("unknown Temporal '" + temporal + "' in query " + q.query_id);
      }
      if (auto f = c.attr("CodeFilter")) s.code_filter = std::string(*f);
      q.selectors.push_back(std::move(s));
    } else if (is_ext(c, "Project")) {
      q.projection.push_back(normalized_or_raw(required_attr(c, "ConceptId")));
    }
  }
  return q;
}

dnc::Expr parse_expr(const xml::Element& e) {
  using dnc::Atom;
  using dnc::Expr;
  if (e.ns != kExtNamespace) schema_violation("eligibility node <" + e.name + "> outside the extension namespace");
  auto operands = [&] {
    std::vector<Expr> xs;
    for (const auto& c : e.children) xs.push_back(parse_expr(c));
    return xs;
  };
  if (e.name == "And") return Expr::all_of(operands());
  if (e.name == "Or") return Expr::any_of(operands());
  if (e.name == "Not") {
    auto xs = operands();
    if (xs.size() != 1) schema_violation("Not takes exactly one operand");
    return Expr::negate(std::move(xs[0]));
  }
  if (e.name == "HasDiagnosis") return Expr::leaf(Atom{Atom::Kind::HasDiagnosis, required_attr(e, "Concept"), 0});
  if (e.name == "HasActiveDrug") return Expr::leaf(Atom{Atom::Kind::HasActiveDrug, required_attr(e, "Concept"), 0});
  if (e.name == "AgeAtLeast") return Expr::leaf(Atom{Atom::Kind::AgeAtLeast, {}, parse_int_attr(e, "Years")});
  if (e.name == "AgeBelow") return Expr::leaf(Atom{Atom::Kind::AgeBelow, {}, parse_int_attr(e, "Years")});
  schema_violation("unknown eligibility node <" + e.name + ">");
}

struct RawItemGroup {
  ItemGroupDef def;
  std::vector<std::pair<std::string, bool>> item_refs;  // oid, mandatory
};

ItemDef parse_item(const xml::Document& doc, const xml::Element& e) {
  ItemDef item;
  item.oid = required_attr(e, "OID");
  item.name = optional_attr(e, "Name");
  auto dt = data_type_from_string(required_attr(e, "DataType"));
  if (!dt) schema_violation("ItemDef " + item.oid + " has unsupported DataType");
  item.data_type = *dt;
  if (auto u = e.attr("UnitItemOID", kExtNamespace)) item.unit_item_ref = std::string(*u);
  for (const auto& c : e.children) {
    if (is_odm(c, "Question")) {
      if (const auto* t = c.child(kOdmNamespace, "TranslatedText")) item.question = std::string(trim(t->text));
    } else if (is_odm(c, "Alias")) {
      auto context = required_attr(c, "Context");
      auto name = required_attr(c, "Name");
      if (starts_with(context, "CDIM")) {
        if (item.cdim_alias) schema_violation("ItemDef " + item.oid + " carries two CDIM aliases");
        item.cdim_alias = CdimAlias{context, name, cdim::normalize_concept_id(name).value_or("")};
      } else {
        item.other_aliases.push_back({context, name});
      }
    } else {
      item.extensions.emplace_back(doc.raw(c));
    }
  }
  return item;
}

void collect_foreign(const xml::Element& e, std::vector<xml::NamespaceDecl>& out) {
  for (const auto& d : e.declarations) {
    if (d.uri == kOdmNamespace || d.uri == kExtNamespace || d.prefix.empty()) continue;
    bool seen = std::any_of(out.begin(), out.end(), [&](const auto& x) { return x.prefix == d.prefix; });
    if (!seen) out.push_back(d);
  }
}

}  // namespace

OdmStudyBundle parse_study_bundle(std::string_view xml_text) {
  auto doc = xml::parse(std::string(xml_text));
  const auto& root = doc.root();
  if (!is_odm(root, "ODM")) schema_violation("document element is not ODM in " + std::string(kOdmNamespace));

  OdmStudyBundle b;
  b.file_oid = optional_attr(root, "FileOID");
  b.creation_datetime = optional_attr(root, "CreationDateTime");
  collect_foreign(root, b.foreign_namespaces);

  const xml::Element* study = nullptr;
  for (const auto& c : root.children) {
    if (is_odm(c, "Study")) {
      if (study) schema_violation("more than one Study");
      study = &c;
    } else {
      b.root_extensions.emplace_back(doc.raw(c));
    }
  }
  if (!study) schema_violation("missing Study");
  collect_foreign(*study, b.foreign_namespaces);
  b.study_oid = required_attr(*study, "OID");

  const xml::Element* mdv = nullptr;
  for (const auto& c : study->children) {
    if (is_odm(c, "GlobalVariables")) {
      if (const auto* n = c.child(kOdmNamespace, "StudyName")) b.study_name = std::string(trim(n->text));
      if (const auto* n = c.child(kOdmNamespace, "StudyDescription")) b.study_description = std::string(trim(n->text));
      if (const auto* n = c.child(kOdmNamespace, "ProtocolName")) b.protocol_name = std::string(trim(n->text));
    } else if (is_odm(c, "MetaDataVersion")) {
      if (mdv) schema_violation("more than one MetaDataVersion");
      mdv = &c;
    } else {
      b.study_extensions.emplace_back(doc.raw(c));
    }
  }
  if (!mdv) schema_violation("missing MetaDataVersion");
  collect_foreign(*mdv, b.foreign_namespaces);
  b.metadata_version = required_attr(*mdv, "OID");
  b.metadata_version_name = optional_attr(*mdv, "Name");

  struct RawForm {
    FormDef def;
    std::vector<std::string> group_refs;
  };
  struct RawEvent {
    std::string oid, name;
    std::optional<Stage> stage;
    std::vector<std::string> form_refs;
  };
  std::vector<RawForm> forms;
  std::vector<RawItemGroup> groups;
  std::unordered_map<std::string, ItemDef> items;
  std::vector<RawEvent> events;
  std::vector<std::pair<std::string, int>> protocol_refs;

  for (const auto& c : mdv->children) {
    if (is_odm(c, "Protocol")) {
      int position = 0;
      for (const auto* ref : c.children_named(kOdmNamespace, "StudyEventRef")) {
        ++position;
        int order = ref->attr("OrderNumber") ? parse_int_attr(*ref, "OrderNumber") : position;
        protocol_refs.emplace_back(required_attr(*ref, "StudyEventOID"), order);
      }
    } else if (is_odm(c, "StudyEventDef")) {
      RawEvent ev{required_attr(c, "OID"), optional_attr(c, "Name"), std::nullopt, {}};
      if (auto s = c.attr("Stage", kExtNamespace)) {
        ev.stage = stage_from_string(*s);
        if (!ev.stage) schema_violation("StudyEventDef " + ev.oid + " has unknown Stage");
      }
      for (const auto* fr : c.children_named(kOdmNamespace, "FormRef")) ev.form_refs.push_back(required_attr(*fr, "FormOID"));
      events.push_back(std::move(ev));
    } else if (is_odm(c, "FormDef")) {
      RawForm f;
      f.def.oid = required_attr(c, "OID");
      f.def.name = optional_attr(c, "Name");
      for (const auto& fc : c.children) {
        if (is_odm(fc, "ItemGroupRef")) {
          f.group_refs.push_back(required_attr(fc, "ItemGroupOID"));
        } else {
          f.def.extensions.emplace_back(doc.raw(fc));
        }
      }
      forms.push_back(std::move(f));
    } else if (is_odm(c, "ItemGroupDef")) {
      RawItemGroup g;
      g.def.oid = required_attr(c, "OID");
      g.def.name = optional_attr(c, "Name");
      for (const auto& gc : c.children) {
        if (is_ext(gc, "QueryId")) {
          if (g.def.query_id) schema_violation("ItemGroupDef " + g.def.oid + " has two QueryId elements");
          auto id = std::string(trim(gc.text));
          if (id.empty()) schema_violation("ItemGroupDef " + g.def.oid + " has an empty QueryId");
          g.def.query_id = id;
        } else if (is_odm(gc, "ItemRef")) {
          g.item_refs.emplace_back(required_attr(gc, "ItemOID"), optional_attr(gc, "Mandatory") == "Yes");
        } else {
          g.def.extensions.emplace_back(doc.raw(gc));
        }
      }
      groups.push_back(std::move(g));
    } else if (is_odm(c, "ItemDef")) {
      auto item = parse_item(doc, c);
      if (items.count(item.oid)) schema_violation("duplicate ItemDef " + item.oid);
      auto oid = item.oid;
      items.emplace(oid, std::move(item));
    } else if (is_ext(c, "Query")) {
      auto q = parse_query(c);
      if (b.queries.count(q.query_id)) schema_violation("duplicate Query " + q.query_id);
      auto id = q.query_id;
      b.queries.emplace(id, std::move(q));
    } else if (is_ext(c, "EligibilityCriterion")) {
      if (b.eligibility) schema_violation("more than one EligibilityCriterion");
      const xml::Element* body = c.children.empty() ? nullptr : &c.children.front();
      if (!body || c.children.size() != 1) schema_violation("EligibilityCriterion needs exactly one expression");
      b.eligibility = dnc::EligibilityCriterion{required_attr(c, "CriterionId"), parse_expr(*body)};
    } else {
      b.metadata_extensions.emplace_back(doc.raw(c));
    }
  }

  // QueryId uniqueness across distinct item group definitions comes first:
  // a duplicated id is reported as such even if it also fails to resolve.
  std::set<std::string> group_oids, query_ids;
  for (const auto& g : groups) {
    if (!group_oids.insert(g.def.oid).second) schema_violation("duplicate ItemGroupDef " + g.def.oid);
    if (g.def.query_id && !query_ids.insert(*g.def.query_id).second) {
      throw Error(Errc::DuplicateQueryId, "QueryId " + *g.def.query_id + " is used by more than one ItemGroupDef");
    }
  }
  for (const auto& g : groups) {
    if (g.def.query_id && !b.queries.count(*g.def.query_id)) {
      throw Error(Errc::DanglingQueryRef,
                  "ItemGroupDef " + g.def.oid + " references undefined query " + *g.def.query_id);
    }
  }

  std::unordered_map<std::string, ItemGroupDef> resolved_groups;
  for (auto& g : groups) {
    for (const auto& [oid, mandatory] : g.item_refs) {
      auto it = items.find(oid);
      if (it == items.end()) schema_violation("ItemRef to undefined ItemDef " + oid);
      auto item = it->second;
      item.mandatory = mandatory;
      g.def.items.push_back(std::move(item));
    }
    auto oid = g.def.oid;
    resolved_groups.emplace(oid, std::move(g.def));
  }

  std::set<std::string> form_oids;
  for (auto& f : forms) {
    if (!form_oids.insert(f.def.oid).second) schema_violation("duplicate FormDef " + f.def.oid);
    for (const auto& ref : f.group_refs) {
      auto it = resolved_groups.find(ref);
      if (it == resolved_groups.end()) schema_violation("ItemGroupRef to undefined ItemGroupDef " + ref);
      f.def.item_groups.push_back(it->second);
    }
    b.forms.push_back(std::move(f.def));
  }

  std::set<std::string> event_oids;
  for (const auto& ev : events) {
    if (!event_oids.insert(ev.oid).second) schema_violation("duplicate StudyEventDef " + ev.oid);
  }
  auto find_event = [&](const std::string& oid) -> const RawEvent* {
    for (const auto& ev : events) {
      if (ev.oid == oid) return &ev;
    }
    return nullptr;
  };
  auto emit_event = [&](const RawEvent& ev, int order) {
    for (const auto& form_oid : ev.form_refs) {
      if (!form_oids.count(form_oid)) schema_violation("FormRef to undefined FormDef " + form_oid);
      b.event_schedule.push_back({ev.oid, ev.name, form_oid, order, ev.stage});
    }
  };
  std::set<std::string> scheduled;
  int last_order = 0;
  for (const auto& [oid, order] : protocol_refs) {
    const auto* ev = find_event(oid);
    if (!ev) schema_violation("StudyEventRef to undefined StudyEventDef " + oid);
    if (!scheduled.insert(oid).second) schema_violation("StudyEventDef " + oid + " referenced twice by Protocol");
    emit_event(*ev, order);
    last_order = std::max(last_order, order);
  }
  for (const auto& ev : events) {
    if (!scheduled.count(ev.oid)) emit_event(ev, ++last_order);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

std::string ext(std::string_view local) { return std::string(kExtPrefix) + ":" + std::string(local); }

xml::Node render_query(const mediator::DataExtractionQuery& q) {
  xml::Node n(ext("Query"));
  n.attr("QueryId", q.query_id);
  for (const auto& s : q.selectors) {
    auto& sel = n.add(ext("Selector"));
    sel.attr("ConceptId", s.concept_id);
    switch (s.temporal.kind) {
      case mediator::Temporal::Kind::Latest: sel.attr("Temporal", "Latest"); break;
      case mediator::Temporal::Kind::All: sel.attr("Temporal", "All"); break;
      case mediator::Temporal::Kind::Within:
        sel.attr("Temporal", "Within");
        sel.attr("Days", std::to_string(s.temporal.days));
        break;
    }
    if (s.code_filter) sel.attr("CodeFilter", *s.code_filter);
  }
  for (const auto& p : q.projection) n.add(ext("Project")).attr("ConceptId", p);
  return n;
}

xml::Node render_expr(const dnc::Expr& e) {
  using dnc::Atom;
  using dnc::Expr;
  switch (e.op) {
    case Expr::Op::And:
    case Expr::Op::Or:
    case Expr::Op::Not: {
      xml::Node n(ext(e.op == Expr::Op::And ? "And" : e.op == Expr::Op::Or ? "Or" : "Not"));
      for (const auto& x : e.operands) n.add(render_expr(x));
      return n;
    }
    case Expr::Op::Leaf: break;
  }
  const auto& a = e.atom;
  switch (a.kind) {
    case Atom::Kind::HasDiagnosis: return std::move(xml::Node(ext("HasDiagnosis")).attr("Concept", a.label));
    case Atom::Kind::HasActiveDrug: return std::move(xml::Node(ext("HasActiveDrug")).attr("Concept", a.label));
    case Atom::Kind::AgeAtLeast: return std::move(xml::Node(ext("AgeAtLeast")).attr("Years", std::to_string(a.years)));
    case Atom::Kind::AgeBelow: return std::move(xml::Node(ext("AgeBelow")).attr("Years", std::to_string(a.years)));
  }
  return xml::Node(ext("And"));
}

void add_verbatim(xml::Node& parent, const std::vector<std::string>& raws) {
  for (const auto& r : raws) parent.add(xml::Node::verbatim(r));
}

xml::Node odm_root(const std::vector<xml::NamespaceDecl>& foreign) {
  xml::Node root("ODM");
  root.attr("xmlns", std::string(kOdmNamespace));
  root.attr("xmlns:" + std::string(kExtPrefix), std::string(kExtNamespace));
  auto sorted = foreign;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.prefix < b.prefix; });
  for (const auto& d : sorted) root.attr("xmlns:" + d.prefix, d.uri);
  return root;
}

}  // namespace

std::string serialize_study_bundle(const OdmStudyBundle& b) {
  auto root = odm_root(b.foreign_namespaces);
  root.attr("FileOID", b.file_oid.empty() ? "ODM." + b.study_oid : b.file_oid);
  root.attr("FileType", "Snapshot");
  root.attr("ODMVersion", "1.3.2");
  if (!b.creation_datetime.empty()) root.attr("CreationDateTime", b.creation_datetime);

  auto& study = root.add("Study");
  study.attr("OID", b.study_oid);
  auto& gv = study.add("GlobalVariables");
  gv.add(xml::Node::leaf("StudyName", b.study_name));
  gv.add(xml::Node::leaf("StudyDescription", b.study_description));
  gv.add(xml::Node::leaf("ProtocolName", b.protocol_name));
  add_verbatim(study, b.study_extensions);

  auto& mdv = study.add("MetaDataVersion");
  mdv.attr("OID", b.metadata_version);
  if (!b.metadata_version_name.empty()) mdv.attr("Name", b.metadata_version_name);

  // Events grouped in schedule order; one StudyEventDef per distinct event.
  std::vector<std::string> event_order;
  for (const auto& e : b.event_schedule) {
    if (std::find(event_order.begin(), event_order.end(), e.event_oid) == event_order.end()) {
      event_order.push_back(e.event_oid);
    }
  }
  if (!event_order.empty()) {
    auto& protocol = mdv.add("Protocol");
    for (const auto& oid : event_order) {
      const auto& first = *std::find_if(b.event_schedule.begin(), b.event_schedule.end(),
                                        [&](const auto& e) { return e.event_oid == oid; });
      protocol.add("StudyEventRef")
          .attr("StudyEventOID", oid)
          .attr("OrderNumber", std::to_string(first.sequence_index))
          .attr("Mandatory", "Yes");
    }
    for (const auto& oid : event_order) {
      const auto& first = *std::find_if(b.event_schedule.begin(), b.event_schedule.end(),
                                        [&](const auto& e) { return e.event_oid == oid; });
      auto& def = mdv.add("StudyEventDef");
      def.attr("OID", oid).attr("Name", first.event_name).attr("Repeating", "No").attr("Type", "Scheduled");
      if (first.stage) def.attr(ext("Stage"), std::string(to_string(*first.stage)));
      for (const auto& e : b.event_schedule) {
        if (e.event_oid == oid) def.add("FormRef").attr("FormOID", e.form_oid).attr("Mandatory", "Yes");
      }
    }
  }

  std::vector<const ItemGroupDef*> groups;
  std::vector<const ItemDef*> items;
  for (const auto& f : b.forms) {
    auto& form = mdv.add("FormDef");
    form.attr("OID", f.oid).attr("Name", f.name).attr("Repeating", "No");
    for (const auto& g : f.item_groups) {
      form.add("ItemGroupRef").attr("ItemGroupOID", g.oid).attr("Mandatory", "Yes");
      if (std::none_of(groups.begin(), groups.end(), [&](const auto* x) { return x->oid == g.oid; })) {
        groups.push_back(&g);
      }
    }
    add_verbatim(form, f.extensions);
  }
  for (const auto* g : groups) {
    auto& group = mdv.add("ItemGroupDef");
    group.attr("OID", g->oid).attr("Name", g->name).attr("Repeating", "No");
    if (g->query_id) group.add(xml::Node::leaf(ext("QueryId"), *g->query_id));
    for (const auto& i : g->items) {
      group.add("ItemRef").attr("ItemOID", i.oid).attr("Mandatory", i.mandatory ? "Yes" : "No");
      if (std::none_of(items.begin(), items.end(), [&](const auto* x) { return x->oid == i.oid; })) {
        items.push_back(&i);
      }
    }
    add_verbatim(group, g->extensions);
  }
  for (const auto* i : items) {
    auto& item = mdv.add("ItemDef");
    item.attr("OID", i->oid).attr("Name", i->name).attr("DataType", std::string(to_string(i->data_type)));
    if (i->unit_item_ref) item.attr(ext("UnitItemOID"), *i->unit_item_ref);
    if (!i->question.empty()) {
      item.add("Question").add(xml::Node::leaf("TranslatedText", i->question)).attr("xml:lang", "en");
    }
    if (i->cdim_alias) item.add("Alias").attr("Context", i->cdim_alias->context).attr("Name", i->cdim_alias->name);
    for (const auto& a : i->other_aliases) item.add("Alias").attr("Context", a.context).attr("Name", a.name);
    add_verbatim(item, i->extensions);
  }
  for (const auto& [id, q] : b.queries) mdv.add(render_query(q));
  if (b.eligibility) {
    auto& crit = mdv.add(ext("EligibilityCriterion"));
    crit.attr("CriterionId", b.eligibility->criterion_id);
    crit.add(render_expr(b.eligibility->expression));
  }
  add_verbatim(mdv, b.metadata_extensions);
  add_verbatim(root, b.root_extensions);
  return xml::serialize(root);
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_extensions(const OdmStudyBundle& b) {
  ValidationReport r;
  auto add = [&](Severity s, FindingCode c, std::string subject, std::string message) {
    r.findings.push_back({s, c, std::move(subject), std::move(message)});
  };
  static const std::regex kContext(R"(^CDIM_\d+\.\d+$)");

  std::set<std::string> form_oids;
  std::map<std::string, const ItemGroupDef*> distinct_groups;
  for (const auto& f : b.forms) {
    if (!form_oids.insert(f.oid).second) add(Severity::Error, FindingCode::DuplicateOid, f.oid, "duplicate form oid");
    std::set<std::string> in_form;
    for (const auto& g : f.item_groups) {
      if (!in_form.insert(g.oid).second) {
        add(Severity::Error, FindingCode::DuplicateOid, g.oid, "item group repeated within form " + f.oid);
      }
      distinct_groups.emplace(g.oid, &g);
    }
  }

  std::map<std::string, std::string> query_owner;
  std::set<std::string> referenced;
  for (const auto& [oid, g] : distinct_groups) {
    if (g->query_id) {
      if (g->query_id->empty()) {
        add(Severity::Error, FindingCode::EmptyQueryId, oid, "QueryId is empty");
        continue;
      }
      referenced.insert(*g->query_id);
      auto [it, fresh] = query_owner.emplace(*g->query_id, oid);
      if (!fresh) {
        add(Severity::Error, FindingCode::DuplicateQueryId, *g->query_id,
            "QueryId shared by " + it->second + " and " + oid);
      }
      if (!b.queries.count(*g->query_id)) {
        add(Severity::Error, FindingCode::DanglingQueryRef, oid, "query " + *g->query_id + " is not defined");
      }
    }
    for (const auto& item : g->items) {
      if (item.cdim_alias) {
        if (!std::regex_match(item.cdim_alias->context, kContext)) {
          add(Severity::Error, FindingCode::BadAliasContext, item.oid,
              "alias context '" + item.cdim_alias->context + "' is not CDIM_<major>.<minor>");
        }
        if (item.cdim_alias->concept_id.empty()) {
          add(Severity::Error, FindingCode::BadAliasFormat, item.oid,
              "alias name '" + item.cdim_alias->name + "' is not a concept reference");
        }
      }
      if (item.unit_item_ref) {
        const auto* unit = g->find_item(*item.unit_item_ref);
        if (!unit || unit->oid == item.oid) {
          add(Severity::Error, FindingCode::BadUnitItemRef, item.oid,
              "unit item " + *item.unit_item_ref + " is not a sibling in " + oid);
        }
      }
    }
  }
  for (const auto& [id, q] : b.queries) {
    if (!referenced.count(id)) add(Severity::Warning, FindingCode::OrphanQuery, id, "query is not referenced");
  }

  std::set<Stage> stages;
  std::map<Stage, int> stage_order;
  int previous = 0;
  std::string previous_event;
  for (const auto& e : b.event_schedule) {
    if (!b.find_form(e.form_oid)) {
      add(Severity::Error, FindingCode::UnknownScheduledForm, e.event_oid, "schedules unknown form " + e.form_oid);
    }
    bool same_event = e.event_oid == previous_event;
    if (e.sequence_index < 1 || e.sequence_index < previous || (!same_event && e.sequence_index == previous)) {
      add(Severity::Error, FindingCode::ScheduleOrder, e.event_oid, "sequence index out of order");
    }
    previous = e.sequence_index;
    previous_event = e.event_oid;
    if (e.stage) {
      if (!stages.insert(*e.stage).second) {
        add(Severity::Error, FindingCode::DuplicateStage, e.event_oid,
            "stage " + std::string(to_string(*e.stage)) + " scheduled twice");
      }
      stage_order[*e.stage] = e.sequence_index;
    }
  }
  auto before = [&](Stage a, Stage z) {
    if (stage_order.count(a) && stage_order.count(z) && stage_order[a] >= stage_order[z]) {
      add(Severity::Error, FindingCode::ScheduleOrder, std::string(to_string(z)),
          std::string(to_string(z)) + " is not after " + std::string(to_string(a)));
    }
  };
  before(Stage::Crom1, Stage::Crom2);
  before(Stage::Prom1, Stage::Prom2);
  return r;
}

// ---------------------------------------------------------------------------
// ClinicalData

std::string attach_clinical_data(const OdmStudyBundle& b, const ClinicalDataSubmission& s) {
  const auto* form = b.find_form(s.form_oid);
  if (!form) throw Error(Errc::UnknownForm, "form " + s.form_oid + " is not in study " + b.study_oid);
  std::string event_oid = s.event_oid;
  if (const auto* sched = b.schedule_for_form(s.form_oid)) {
    if (event_oid.empty()) event_oid = sched->event_oid;
  }
  if (event_oid.empty()) throw Error(Errc::UnknownForm, "form " + s.form_oid + " is not scheduled");

  std::map<std::string, const FieldValue*> by_item;
  for (const auto& fv : s.field_values) {
    const auto* item = form->find_item(fv.item_oid);
    if (!item) throw Error(Errc::UnknownItem, "item " + fv.item_oid + " is not in form " + s.form_oid);
    if (!value_matches(item->data_type, fv.value)) {
      throw Error(Errc::TypeMismatch, "item " + fv.item_oid + ": '" + fv.value + "' is not a valid " +
                                          std::string(to_string(item->data_type)));
    }
    if (fv.origin == Origin::Edited && (!fv.prepopulated_value || *fv.prepopulated_value == fv.value)) {
      throw Error(Errc::InvariantViolation, "item " + fv.item_oid + " marked edited without a differing prior value");
    }
    if (!by_item.emplace(fv.item_oid, &fv).second) {
      throw Error(Errc::InvariantViolation, "item " + fv.item_oid + " given twice");
    }
  }

  auto root = odm_root({});
  root.attr("FileOID", "CD." + b.study_oid + "." + s.subject_key + "." + s.form_oid);
  root.attr("FileType", "Transactional");
  root.attr("ODMVersion", "1.3.2");
  if (!s.submitted_at.empty()) root.attr("CreationDateTime", s.submitted_at);
  auto& cd = root.add("ClinicalData");
  cd.attr("StudyOID", b.study_oid).attr("MetaDataVersionOID", b.metadata_version);
  auto& subject = cd.add("SubjectData");
  subject.attr("SubjectKey", s.subject_key);
  subject.attr(ext("ProvenanceRef"), s.provenance_ref);
  subject.attr(ext("SubmittedAt"), s.submitted_at);
  auto& event = subject.add("StudyEventData");
  event.attr("StudyEventOID", event_oid);
  auto& formdata = event.add("FormData");
  formdata.attr("FormOID", s.form_oid);
  for (const auto& g : form->item_groups) {
    auto& gd = formdata.add("ItemGroupData");
    gd.attr("ItemGroupOID", g.oid);
    for (const auto& item : g.items) {
      auto it = by_item.find(item.oid);
      if (it == by_item.end()) continue;
      const auto& fv = *it->second;
      auto& id = gd.add("ItemData");
      id.attr("ItemOID", item.oid).attr("Value", fv.value).attr(ext("Origin"), std::string(to_string(fv.origin)));
      if (fv.unit) id.attr(ext("Unit"), *fv.unit);
      if (fv.prepopulated_value) id.attr(ext("PrepopulatedValue"), *fv.prepopulated_value);
    }
  }
  return xml::serialize(root);
}

ClinicalDataSubmission parse_clinical_data(std::string_view xml_text) {
  auto doc = xml::parse(std::string(xml_text));
  const auto& root = doc.root();
  if (!is_odm(root, "ODM")) schema_violation("document element is not ODM");
  const auto* cd = root.child(kOdmNamespace, "ClinicalData");
  if (!cd) schema_violation("missing ClinicalData");
  ClinicalDataSubmission s;
  s.study_oid = required_attr(*cd, "StudyOID");
  s.metadata_version = required_attr(*cd, "MetaDataVersionOID");
  const auto* subject = cd->child(kOdmNamespace, "SubjectData");
  if (!subject) schema_violation("missing SubjectData");
  s.subject_key = required_attr(*subject, "SubjectKey");
  s.provenance_ref = optional_attr(*subject, "ProvenanceRef", kExtNamespace);
  s.submitted_at = optional_attr(*subject, "SubmittedAt", kExtNamespace);
  const auto* event = subject->child(kOdmNamespace, "StudyEventData");
  if (!event) schema_violation("missing StudyEventData");
  s.event_oid = required_attr(*event, "StudyEventOID");
  const auto* form = event->child(kOdmNamespace, "FormData");
  if (!form) schema_violation("missing FormData");
  s.form_oid = required_attr(*form, "FormOID");
  for (const auto* gd : form->children_named(kOdmNamespace, "ItemGroupData")) {
    for (const auto* id : gd->children_named(kOdmNamespace, "ItemData")) {
      FieldValue fv;
      fv.item_oid = required_attr(*id, "ItemOID");
      auto value = id->attr("Value");
      if (!value) schema_violation("ItemData " + fv.item_oid + " has no Value");
      fv.value = std::string(*value);
      auto origin = origin_from_string(optional_attr(*id, "Origin", kExtNamespace));
      fv.origin = origin.value_or(Origin::Manual);
      if (auto u = id->attr("Unit", kExtNamespace)) fv.unit = std::string(*u);
      if (auto p = id->attr("PrepopulatedValue", kExtNamespace)) fv.prepopulated_value = std::string(*p);
      s.field_values.push_back(std::move(fv));
    }
  }
  return s;
}

}  // namespace esource::odm
