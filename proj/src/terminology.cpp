#include "esource/cdim/terminology.hpp"

#include <json.hpp>

#include "esource/cdim/catalog.hpp"
#include "esource/error.hpp"
#include "esource/util/file.hpp"

namespace esource::cdim {

TerminologyMap TerminologyMap::from_json_text(std::string_view text) {
  TerminologyMap t;
  try {
    auto doc = nlohmann::json::parse(text);
    for (const auto& name : doc.at("terminologies")) t.terminologies_.insert(name.get<std::string>());
    for (const auto& row : doc.at("concepts")) {
      Entry e;
      e.label = row.at("label").get<std::string>();
      e.domain = row.value("domain", "");
      for (const auto& [term, codes] : row.at("codes").items()) {
        if (!t.terminologies_.count(term)) {
          throw Error(Errc::InvalidConfig, "terminology map: " + e.label + " uses undeclared terminology " + term);
        }
        for (const auto& c : codes) e.codes[term].insert(c.get<std::string>());
      }
      t.entries_.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("terminology map: ") + e.what());
  }
  return t;
}

TerminologyMap TerminologyMap::load(const std::filesystem::path& json_file) {
  return from_json_text(read_file(json_file));
}

const TerminologyMap& TerminologyMap::builtin() {
  static const TerminologyMap map = load(resource_dir() / "terminology_map.json");
  return map;
}

bool TerminologyMap::knows(std::string_view terminology) const {
  return terminologies_.count(std::string(terminology)) > 0;
}

std::set<std::string> TerminologyMap::translate_code(std::string_view code, std::string_view from,
                                                     std::string_view to) const {
  if (!knows(from)) throw Error(Errc::UnknownTerminology, std::string(from));
  if (!knows(to)) throw Error(Errc::UnknownTerminology, std::string(to));
  if (from == to) return {std::string(code)};
  std::set<std::string> out;
  for (const auto& e : entries_) {
    auto src = e.codes.find(std::string(from));
    if (src == e.codes.end() || !src->second.count(std::string(code))) continue;
    auto dst = e.codes.find(std::string(to));
    if (dst != e.codes.end()) out.insert(dst->second.begin(), dst->second.end());
  }
  return out;
}

std::set<std::string> TerminologyMap::codes_for(std::string_view label, std::string_view terminology) const {
  if (!knows(terminology)) throw Error(Errc::UnknownTerminology, std::string(terminology));
  for (const auto& e : entries_) {
    if (e.label != label) continue;
    auto it = e.codes.find(std::string(terminology));
    return it == e.codes.end() ? std::set<std::string>{} : it->second;
  }
  throw Error(Errc::UnknownConcept, "no terminology entry labelled " + std::string(label));
}

std::vector<std::string> TerminologyMap::labels_for(std::string_view code, std::string_view terminology) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    auto it = e.codes.find(std::string(terminology));
    if (it != e.codes.end() && it->second.count(std::string(code))) out.push_back(e.label);
  }
  return out;
}

}  // namespace esource::cdim
