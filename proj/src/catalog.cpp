#include "esource/cdim/catalog.hpp"

#include <algorithm>
#include <cstdlib>

#include <json.hpp>

#include "esource/cdim/concept_id.hpp"
#include "esource/error.hpp"
#include "esource/util/file.hpp"

namespace esource::cdim {

std::string_view to_string(ValueKind k) noexcept {
  switch (k) {
    case ValueKind::Identifier: return "identifier";
    case ValueKind::Coded: return "coded";
    case ValueKind::Datum: return "datum";
    case ValueKind::Instant: return "instant";
    case ValueKind::UnitLabel: return "unit-label";
    case ValueKind::Scalar: return "scalar";
  }
  return "scalar";
}

std::optional<ValueKind> value_kind_from_string(std::string_view s) noexcept {
  for (auto k : {ValueKind::Identifier, ValueKind::Coded, ValueKind::Datum, ValueKind::Instant,
                 ValueKind::UnitLabel, ValueKind::Scalar}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

namespace {

Role role_from_string(const std::string& s) {
  if (s == "anchor") return Role::Anchor;
  if (s == "instant") return Role::Instant;
  if (s == "unit") return Role::Unit;
  if (s == "value") return Role::Value;
  throw Error(Errc::InvalidConfig, "unknown concept role '" + s + "'");
}

}  // namespace

Catalog Catalog::from_json_text(std::string_view text) {
  Catalog c;
  try {
    auto doc = nlohmann::json::parse(text);
    c.version_ = doc.value("version", "");
    for (const auto& row : doc.at("concepts")) {
      CdimConcept concept_entry;
      auto id = normalize_concept_id(row.at("id").get<std::string>());
      if (!id) throw Error(Errc::InvalidConfig, "bad concept id " + row.at("id").dump());
      concept_entry.concept_id = *id;
      concept_entry.label = row.at("label").get<std::string>();
      auto kind = value_kind_from_string(row.at("kind").get<std::string>());
      if (!kind) throw Error(Errc::InvalidConfig, "bad value kind for " + *id);
      concept_entry.value_kind = *kind;
      concept_entry.family = row.at("family").get<std::string>();
      concept_entry.role = role_from_string(row.at("role").get<std::string>());
      if (row.contains("domain")) concept_entry.domain = row["domain"].get<std::string>();
      if (!c.index_.emplace(concept_entry.concept_id, c.concepts_.size()).second) {
        throw Error(Errc::InvalidConfig, "duplicate concept " + concept_entry.concept_id);
      }
      c.concepts_.push_back(std::move(concept_entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("catalog: ") + e.what());
  }
  return c;
}

Catalog Catalog::load(const std::filesystem::path& json_file) { return from_json_text(read_file(json_file)); }

const Catalog& Catalog::builtin() {
  static const Catalog catalog = load(resource_dir() / "cdim_catalog.json");
  return catalog;
}

const CdimConcept& Catalog::resolve(std::string_view concept_id) const {
  auto id = normalize_concept_id(concept_id);
  auto it = id ? index_.find(*id) : index_.end();
  if (it == index_.end()) throw Error(Errc::UnknownConcept, std::string(concept_id));
  return concepts_[it->second];
}

bool Catalog::contains(std::string_view concept_id) const {
  auto id = normalize_concept_id(concept_id);
  return id && index_.count(*id);
}

std::vector<const CdimConcept*> Catalog::family_of(std::string_view concept_id) const {
  const auto& c = resolve(concept_id);
  std::vector<const CdimConcept*> out;
  for (const auto& x : concepts_) {
    if (x.family == c.family) out.push_back(&x);
  }
  std::stable_partition(out.begin(), out.end(), [](const auto* x) { return x->role == Role::Anchor; });
  return out;
}

std::filesystem::path resource_dir() {
  if (const char* env = std::getenv("ESOURCE_RESOURCE_DIR"); env && *env) return env;
  return ESOURCE_RESOURCE_DIR;
}

}  // namespace esource::cdim
