#include <gtest/gtest.h>

#include <json.hpp>

#include "esource/cdim/catalog.hpp"
#include "esource/cdim/path.hpp"
#include "esource/cdim/source_model.hpp"
#include "esource/cdim/terminology.hpp"
#include "esource/error.hpp"
#include "esource/util/strings.hpp"
#include "esource/util/xml.hpp"
#include "testing.hpp"

namespace esource::cdim {
namespace {

const std::vector<std::string> kSources = {"asseco", "vision", "transhis"};

TEST(CatalogTest, ResolvesAnySpelling) {
  const auto& c = Catalog::builtin();
  EXPECT_EQ(c.resolve("CDIM_000068").label, c.resolve("CDIM/68").label);
  EXPECT_EQ(c.resolve("CDIM/68").value_kind, ValueKind::Datum);
  EXPECT_EQ(c.resolve("CDIM/32").value_kind, ValueKind::Scalar);
  EXPECT_EQ(c.resolve("CDIM/67").role, Role::Instant);
  EXPECT_EQ(c.resolve("OGMS/73").domain, "diagnosis");
  EXPECT_THROW(c.resolve("CDIM/9999"), Error);
  EXPECT_FALSE(c.contains("nope"));
  auto fam = c.family_of("CDIM/100");
  ASSERT_EQ(fam.size(), 3u);
  EXPECT_EQ(fam.front()->concept_id, "CDIM/68");
}

TEST(CatalogTest, CoversEveryTable3Row) {
  for (const auto& [id, cells] : testing::table3()) EXPECT_TRUE(Catalog::builtin().contains(id)) << id;
}

// The data source models and the Table 3 TSV are independent encodings of
// the same table; every cell must agree.
TEST(SourceModels, AgreeWithTable3CellByCell) {
  const auto& reg = SourceRegistry::builtin();
  const auto& catalog = Catalog::builtin();
  auto table = testing::table3();
  ASSERT_EQ(table.size(), 26u);
  for (const auto& [id, cells] : table) {
    for (const auto& src : kSources) {
      SCOPED_TRACE(id + " @ " + src);
      const auto& cell = cells.at(src);
      auto outcome = map_to_source(id, src);
      if (cell == "N") {
        EXPECT_TRUE(std::holds_alternative<Unsupported>(outcome));
      } else if (cell.front() == '[') {
        const auto* lit = std::get_if<ImplicitValue>(&outcome);
        ASSERT_NE(lit, nullptr);
        auto inner = cell.substr(1, cell.size() - 2);
        EXPECT_EQ(lit->literal, inner == "1" ? "current-physician" : inner);
      } else {
        ASSERT_TRUE(starts_with(cell, "Y"));
        EXPECT_TRUE(std::holds_alternative<PathMapping>(outcome));
        if (auto slash = cell.find('/'); slash != std::string::npos) {
          EXPECT_EQ(reg.get(src).terminology_for(*catalog.resolve(id).domain), cell.substr(slash + 1));
        }
      }
    }
  }
}

TEST(SourceModels, ErrorsAndValueMaps) {
  EXPECT_THROW(map_to_source("CDIM/68", "nosuch"), Error);
  EXPECT_THROW(map_to_source("CDIM/9999", "asseco"), Error);
  const auto& asseco = SourceRegistry::builtin().get("asseco");
  auto native = asseco.native_value("OMRSE/7", "female");
  EXPECT_NE(native, "female");
  EXPECT_EQ(asseco.map_value("OMRSE/7", native), "female");
  EXPECT_EQ(SourceRegistry::builtin().ids(), (std::vector<std::string>{"asseco", "transhis", "vision"}));
}

TEST(SourceModels, RejectsOverlappingOrIncompleteModels) {
  auto text = testing::fixture_text("sources/asseco.dsm.json");
  auto j = nlohmann::json::parse(text);
  auto broken = j;
  broken["unsupported"].push_back("CDIM/68");
  EXPECT_THROW(SourceModel::from_json_text(broken.dump(), Catalog::builtin()), Error);
  broken = j;
  broken["mappings"].erase("CDIM/7");
  EXPECT_THROW(SourceModel::from_json_text(broken.dump(), Catalog::builtin()), Error);
  EXPECT_NO_THROW(SourceModel::from_json_text(text, Catalog::builtin()));
}

TEST(Terminology, TranslationIsConceptLevelAndSymmetric) {
  const auto& t = TerminologyMap::builtin();
  EXPECT_EQ(t.translate_code("K21.0", "ICD10", "ICPC"), (std::set<std::string>{"D84"}));
  EXPECT_EQ(t.translate_code("D84", "ICPC", "ICD10"), (std::set<std::string>{"K21", "K21.0", "K21.9"}));
  EXPECT_EQ(t.translate_code("K21", "ICD10", "ICD10"), (std::set<std::string>{"K21"}));
  EXPECT_TRUE(t.translate_code("Z99", "ICD10", "ICPC").empty());
  EXPECT_THROW(t.translate_code("K21", "ICD10", "SNOMED"), Error);
  EXPECT_THROW(t.codes_for("NoSuchLabel", "ICD10"), Error);
  EXPECT_TRUE(t.codes_for("Heartburn", "ICD10").empty());
  for (const auto& e : t.entries()) {
    for (const auto& [from, codes] : e.codes) {
      for (const auto& [to, _] : e.codes) {
        for (const auto& code : codes) {
          for (const auto& back : t.translate_code(code, from, to)) {
            EXPECT_TRUE(t.translate_code(back, to, from).count(code)) << code << " " << from << "->" << to;
          }
        }
      }
    }
  }
}

TEST(Paths, GrammarRoundTrip) {
  for (const char* text : {"/pacjent/pomiary/pomiar[@typ='waga']/@wartosc", "/a/b[2]/text()", "/a/b"}) {
    auto p = RecordPath::parse(text);
    EXPECT_EQ(p.to_string(), text);
    EXPECT_EQ(RecordPath::parse(p.to_string()), p);
  }
  for (const char* bad : {"", "a/b", "/a//b", "/a/b[@x=1]", "/a/@", "/a/b[0]"}) {
    EXPECT_THROW(RecordPath::parse(bad), Error) << bad;
  }
  auto p = RecordPath::parse("/r/m[@k='w']/@v");
  EXPECT_EQ(p.entry().to_string(), "/r/m[@k='w']");
}

TEST(Paths, MatchingAndIndexedTraces) {
  auto doc = xml::parse(R"(<r><m k="w" v="1"/><m k="h" v="2"/><m k="w" v="3"/></r>)");
  auto p = RecordPath::parse("/r/m[@k='w']/@v");
  auto matches = match_elements(p.entry(), doc.root());
  ASSERT_EQ(matches.size(), 2u);
  EXPECT_EQ(matches[1].indexed_path, "/r[1]/m[3]");
  EXPECT_EQ(select_value(p, *matches[1].element), "3");
  auto positional = match_elements(RecordPath::parse("/r/m[2]"), doc.root());
  ASSERT_EQ(positional.size(), 1u);
  EXPECT_EQ(positional[0].element->attr("k"), "h");
  EXPECT_THROW(match_elements(RecordPath::parse("/x/m"), doc.root()), Error);
  EXPECT_FALSE(select_value(RecordPath::parse("/r/m/@missing"), *matches[0].element));
}

}  // namespace
}  // namespace esource::cdim
