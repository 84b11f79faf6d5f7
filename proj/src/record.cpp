#include "esource/ehr/record.hpp"

#include <algorithm>
#include <functional>
#include <regex>

#include <json.hpp>

#include "esource/cdim/catalog.hpp"
#include "esource/error.hpp"
#include "esource/mediator/mediator.hpp"
#include "esource/util/file.hpp"
#include "esource/util/strings.hpp"
#include "esource/util/xml.hpp"

namespace esource::ehr {

namespace {

class Coder {
 public:
  Coder(const cdim::SourceModel& sm, const cdim::TerminologyMap& terms) : sm_(sm), terms_(terms) {}

  /// Native code for a labelled fact in a domain, or empty if the source
  /// cannot express it.
  std::string code(std::string_view domain, const std::string& label, int variant) const {
    auto term = sm_.terminology_for(domain);
    if (term == "none" || !terms_.knows(term)) return {};
    auto codes = terms_.codes_for(label, term);
    if (codes.empty()) return {};
    auto it = codes.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(static_cast<std::size_t>(variant) % codes.size()));
    return *it;
  }
  std::string date(Date d) const { return mediator::format_native_date(d, sm_.date_format()); }
  std::string sex(const std::string& canonical) const { return sm_.native_value("OMRSE/7", canonical); }

 private:
  const cdim::SourceModel& sm_;
  const cdim::TerminologyMap& terms_;
};

std::string render_asseco(const Patient& p, const cdim::SourceModel& sm, const Coder& c) {
  xml::Node root("pacjent");
  root.attr("id", native_id(sm.source_id(), p.index));
  root.add("dane_osobowe").attr("plec", c.sex(p.sex)).attr("data_urodzenia", c.date(p.birth));
  auto& dx = root.add("rozpoznania");
  for (const auto& d : p.diagnoses) {
    auto code = c.code("diagnosis", d.label, d.variant);
    if (!code.empty()) dx.add("rozpoznanie").attr("icd10", code).attr("data", c.date(d.date));
  }
  auto& rx = root.add("recepty");
  for (const auto& r : p.prescriptions) {
    auto code = c.code("drug", r.label, r.variant);
    if (!code.empty()) rx.add("recepta").attr("atc", code).attr("data", c.date(r.date));
  }
  auto& obs = root.add("pomiary");
  for (const auto& m : p.measurements) {
    static const char* kinds[] = {"masa", "wzrost", "cisnienie_skurczowe", "cisnienie_rozkurczowe"};
    obs.add("pomiar")
        .attr("rodzaj", kinds[static_cast<int>(m.kind)])
        .attr("wartosc", m.value)
        .attr("data", c.date(m.date));
  }
  return xml::serialize(root);
}

std::string render_vision(const Patient& p, const cdim::SourceModel& sm, const Coder& c) {
  xml::Node root("VisionExtract");
  root.add("Patient").attr("PatientId", native_id(sm.source_id(), p.index)).attr("Sex", c.sex(p.sex)).attr(
      "DOB", c.date(p.birth));
  auto& enc = root.add("Consultations");
  for (auto d : p.encounters) enc.add("Consultation").attr("Date", c.date(d));
  auto& dx = root.add("Problems");
  for (const auto& d : p.diagnoses) {
    auto code = c.code("diagnosis", d.label, d.variant);
    if (!code.empty()) dx.add("Problem").attr("ReadCode", code).attr("Date", c.date(d.date));
  }
  auto& sx = root.add("Symptoms");
  for (const auto& s : p.symptoms) {
    auto code = c.code("symptom", s.label, s.variant);
    if (!code.empty()) sx.add("Symptom").attr("ReadCode", code).attr("Date", c.date(s.date));
  }
  auto& rx = root.add("Medications");
  for (const auto& r : p.prescriptions) {
    auto code = c.code("drug", r.label, r.variant);
    if (!code.empty()) rx.add("Medication").attr("MultilexCode", code).attr("IssueDate", c.date(r.date));
  }
  auto& obs = root.add("Observations");
  for (const auto& m : p.measurements) {
    static const char* kinds[] = {"Weight", "Height", "SystolicBP", "DiastolicBP"};
    obs.add("Observation").attr("Type", kinds[static_cast<int>(m.kind)]).attr("Value", m.value).attr("Date", c.date(m.date));
  }
  auto& tests = root.add("Tests");
  for (const auto& l : p.labs) {
    auto code = c.code("lab", l.label, l.variant);
    if (!code.empty()) tests.add("Test").attr("ReadCode", code).attr("Result", l.value).attr("Date", c.date(l.date));
  }
  return xml::serialize(root);
}

std::string render_transhis(const Patient& p, const cdim::SourceModel& sm, const Coder& c) {
  xml::Node root("transhis-dossier");
  root.add("patient").attr("pid", native_id(sm.source_id(), p.index)).attr("geslacht", c.sex(p.sex)).attr(
      "geboortedag", c.date(p.birth));
  root.add("praktijk").attr("code", p.practice_id);
  auto& enc = root.add("contacten");
  for (auto d : p.encounters) enc.add("contact").attr("dag", c.date(d));
  auto& dx = root.add("episodes");
  for (const auto& d : p.diagnoses) {
    auto code = c.code("diagnosis", d.label, d.variant);
    if (!code.empty()) dx.add("episode").attr("icpc", code).attr("begindag", c.date(d.date));
  }
  auto& rx = root.add("medicatie");
  for (const auto& r : p.prescriptions) {
    auto code = c.code("drug", r.label, r.variant);
    if (!code.empty()) rx.add("voorschrift").attr("atc", code).attr("dag", c.date(r.date));
  }
  auto& obs = root.add("metingen");
  for (const auto& m : p.measurements) {
    static const char* kinds[] = {"gewicht", "lengte", "systolisch", "diastolisch"};
    static const char* units[] = {"kg", "cm", "mmHg", "mmHg"};
    obs.add("meting")
        .attr("soort", kinds[static_cast<int>(m.kind)])
        .attr("waarde", m.value)
        .attr("eenheid", units[static_cast<int>(m.kind)])
        .attr("dag", c.date(m.date));
  }
  auto& lab = root.add("laboratorium");
  for (const auto& l : p.labs) {
    auto code = c.code("lab", l.label, l.variant);
    if (!code.empty()) {
      lab.add("uitslag").attr("loinc", code).attr("waarde", l.value).attr("eenheid", l.unit).attr("dag", c.date(l.date));
    }
  }
  return xml::serialize(root);
}

}  // namespace

std::string render_record(const Patient& p, const cdim::SourceModel& sm, const cdim::TerminologyMap& terms) {
  Coder coder(sm, terms);
  if (sm.source_id() == "asseco") return render_asseco(p, sm, coder);
  if (sm.source_id() == "vision") return render_vision(p, sm, coder);
  if (sm.source_id() == "transhis") return render_transhis(p, sm, coder);
  throw Error(Errc::UnknownSource, "no record renderer for " + sm.source_id());
}

RecordSchema RecordSchema::from_json_text(std::string_view text) {
  RecordSchema s;
  try {
    auto doc = nlohmann::json::parse(text);
    s.root_ = doc.at("root").get<std::string>();
    auto fmt = doc.at("date_format").get<std::string>();
    s.date_format_ = fmt == "dmy" ? cdim::DateFormat::Dmy
                     : fmt == "epoch_days" ? cdim::DateFormat::EpochDays
                                           : cdim::DateFormat::Iso;
    for (const auto& [name, rule] : doc.at("elements").items()) {
      ElementRule r;
      for (const auto& [attr, type] : rule.at("attributes").items()) r.attributes[attr] = type.get<std::string>();
      for (const auto& child : rule.at("children")) r.children.push_back(child.get<std::string>());
      s.rules_[name] = std::move(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("record schema: ") + e.what());
  }
  return s;
}

RecordSchema RecordSchema::load(const std::filesystem::path& json_file) { return from_json_text(read_file(json_file)); }

RecordSchema RecordSchema::for_source(const std::string& source_id) {
  return load(cdim::resource_dir() / "sources" / (source_id + ".schema.json"));
}

std::vector<std::string> RecordSchema::validate(std::string_view xml_text) const {
  std::vector<std::string> problems;
  xml::Document doc;
  try {
    doc = xml::parse(std::string(xml_text));
  } catch (const Error& e) {
    return {e.what()};
  }
  static const std::regex kDecimal(R"(^-?\d+(\.\d+)?$)");
  static const std::regex kCode(R"(^[A-Za-z0-9][A-Za-z0-9.\-]*$)");
  auto type_ok = [&](const std::string& type, const std::string& v) {
    if (type == "date") return mediator::parse_native_instant(v, date_format_).has_value();
    if (type == "decimal") return std::regex_match(v, kDecimal);
    if (type == "code" || type == "id") return std::regex_match(v, kCode);
    if (type == "text") return true;
    if (type.rfind("enum:", 0) == 0) {
      for (const auto& option : split(type.substr(5), '|')) {
        if (option == v) return true;
      }
      return false;
    }
    return false;
  };
  std::function<void(const xml::Element&, const std::string&)> walk = [&](const xml::Element& e,
                                                                          const std::string& where) {
    auto rule = rules_.find(e.name);
    if (rule == rules_.end()) {
      problems.push_back(where + ": undeclared element");
      return;
    }
    for (const auto& [name, type] : rule->second.attributes) {
      auto v = e.attr(name);
      if (!v) {
        problems.push_back(where + ": missing @" + name);
      } else if (!type_ok(type, std::string(*v))) {
        problems.push_back(where + ": @" + name + "='" + std::string(*v) + "' is not " + type);
      }
    }
    for (const auto& a : e.attributes) {
      if (!rule->second.attributes.count(a.name)) problems.push_back(where + ": undeclared @" + a.name);
    }
    for (const auto& child : e.children) {
      const auto& allowed = rule->second.children;
      if (std::find(allowed.begin(), allowed.end(), child.name) == allowed.end()) {
        problems.push_back(where + "/" + child.name + ": not allowed here");
        continue;
      }
      walk(child, where + "/" + child.name);
    }
  };
  if (doc.root().name != root_) {
    problems.push_back("root <" + doc.root().name + "> is not <" + root_ + ">");
  } else {
    walk(doc.root(), "/" + root_);
  }
  return problems;
}

}  // namespace esource::ehr
