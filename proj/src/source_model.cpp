#include "esource/cdim/source_model.hpp"

#include <json.hpp>

#include "esource/cdim/concept_id.hpp"
#include "esource/error.hpp"
#include "esource/util/file.hpp"

namespace esource::cdim {

std::string describe(const MappingOutcome& m) {
  if (const auto* p = std::get_if<PathMapping>(&m)) return "Path(" + p->path.to_string() + ")";
  if (const auto* i = std::get_if<ImplicitValue>(&m)) return "Implicit(" + i->literal + ")";
  return "Unsupported";
}

namespace {

std::string canonical_id(const std::string& raw, const Catalog& catalog) {
  auto id = normalize_concept_id(raw);
  if (!id || !catalog.contains(*id)) throw Error(Errc::InvalidConfig, "source model names unknown concept " + raw);
  return *id;
}

}  // namespace

SourceModel SourceModel::from_json_text(std::string_view text, const Catalog& catalog) {
  SourceModel m;
  m.catalog_ = &catalog;
  try {
    auto doc = nlohmann::json::parse(text);
    m.source_id_ = doc.at("source_id").get<std::string>();
    m.display_name_ = doc.value("display_name", m.source_id_);
    m.record_root_ = doc.at("record_root").get<std::string>();
    auto fmt = doc.at("date_format").get<std::string>();
    if (fmt == "iso") {
      m.date_format_ = DateFormat::Iso;
    } else if (fmt == "dmy") {
      m.date_format_ = DateFormat::Dmy;
    } else if (fmt == "epoch_days") {
      m.date_format_ = DateFormat::EpochDays;
    } else {
      throw Error(Errc::InvalidConfig, m.source_id_ + ": unknown date_format " + fmt);
    }
    for (const auto& [domain, term] : doc.at("native_terminologies").items()) {
      m.terminologies_[domain] = term.get<std::string>();
    }
    std::set<std::string> seen;
    auto claim = [&](const std::string& id) {
      if (!seen.insert(id).second) throw Error(Errc::InvalidConfig, m.source_id_ + ": " + id + " classified twice");
    };
    for (const auto& [raw, path] : doc.at("mappings").items()) {
      auto id = canonical_id(raw, catalog);
      claim(id);
      auto parsed = RecordPath::parse(path.get<std::string>());
      if (parsed.selector == RecordPath::Selector::None) {
        throw Error(Errc::InvalidConfig, m.source_id_ + ": path for " + id + " lacks a value selector");
      }
      if (parsed.steps.front().name != m.record_root_) {
        throw Error(Errc::InvalidConfig, m.source_id_ + ": path for " + id + " does not start at the record root");
      }
      m.mappings_.emplace(id, std::move(parsed));
    }
    for (const auto& [raw, literal] : doc.at("implicit_values").items()) {
      auto id = canonical_id(raw, catalog);
      claim(id);
      m.implicit_[id] = literal.get<std::string>();
    }
    for (const auto& raw : doc.at("unsupported")) {
      auto id = canonical_id(raw.get<std::string>(), catalog);
      claim(id);
      m.unsupported_.insert(id);
    }
    for (const auto& c : catalog.concepts()) {
      if (!seen.count(c.concept_id)) {
        throw Error(Errc::InvalidConfig, m.source_id_ + ": concept " + c.concept_id + " is not classified");
      }
    }
    if (doc.contains("value_maps")) {
      for (const auto& [raw, table] : doc["value_maps"].items()) {
        auto id = canonical_id(raw, catalog);
        for (const auto& [native, canonical] : table.items()) m.value_maps_[id][native] = canonical.get<std::string>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("source model: ") + e.what());
  }

  // Members of a family are located through one entry element per record
  // entry, so their paths must agree on everything but the value selector.
  for (const auto& c : catalog.concepts()) {
    auto it = m.mappings_.find(c.concept_id);
    if (it == m.mappings_.end()) continue;
    for (const auto* member : catalog.family_of(c.concept_id)) {
      auto other = m.mappings_.find(member->concept_id);
      if (other != m.mappings_.end() && !(other->second.entry() == it->second.entry())) {
        throw Error(Errc::InvalidConfig, m.source_id_ + ": " + c.concept_id + " and " + member->concept_id +
                                             " belong to one family but use different entry paths");
      }
    }
  }
  return m;
}

SourceModel SourceModel::load(const std::filesystem::path& json_file, const Catalog& catalog) {
  return from_json_text(read_file(json_file), catalog);
}

std::string SourceModel::terminology_for(std::string_view domain) const {
  auto it = terminologies_.find(std::string(domain));
  return it == terminologies_.end() ? "none" : it->second;
}

MappingOutcome SourceModel::outcome_for(std::string_view concept_id) const {
  const auto& id = catalog_->resolve(concept_id).concept_id;
  if (auto it = mappings_.find(id); it != mappings_.end()) return PathMapping{it->second};
  if (auto it = implicit_.find(id); it != implicit_.end()) return ImplicitValue{it->second};
  return Unsupported{};
}

std::string SourceModel::map_value(std::string_view concept_id, std::string_view native) const {
  auto it = value_maps_.find(std::string(concept_id));
  if (it == value_maps_.end()) return std::string(native);
  auto v = it->second.find(std::string(native));
  return v == it->second.end() ? std::string(native) : v->second;
}

std::string SourceModel::native_value(std::string_view concept_id, std::string_view canonical) const {
  auto it = value_maps_.find(std::string(concept_id));
  if (it != value_maps_.end()) {
    for (const auto& [native, value] : it->second) {
      if (value == canonical) return native;
    }
  }
  return std::string(canonical);
}

SourceRegistry SourceRegistry::load_dir(const std::filesystem::path& dir, const Catalog& catalog) {
  SourceRegistry r;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto name = entry.path().filename().string();
    if (name.size() > 9 && name.ends_with(".dsm.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) r.add(SourceModel::load(f, catalog));
  return r;
}

const SourceRegistry& SourceRegistry::builtin() {
  static const SourceRegistry registry = load_dir(resource_dir() / "sources", Catalog::builtin());
  return registry;
}

void SourceRegistry::add(SourceModel model) {
  auto id = model.source_id();
  models_.insert_or_assign(id, std::move(model));
}

const SourceModel& SourceRegistry::get(std::string_view source_id) const {
  auto it = models_.find(source_id);
  if (it == models_.end()) throw Error(Errc::UnknownSource, std::string(source_id));
  return it->second;
}

std::vector<std::string> SourceRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, m] : models_) out.push_back(id);
  return out;
}

MappingOutcome map_to_source(std::string_view concept_id, std::string_view source_id, const SourceRegistry& registry) {
  Catalog::builtin().resolve(concept_id);
  return registry.get(source_id).outcome_for(concept_id);
}

}  // namespace esource::cdim
