#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "esource/error.hpp"
#include "esource/util/append_log.hpp"
#include "esource/util/digest.hpp"
#include "esource/util/rng.hpp"
#include "esource/util/strings.hpp"
#include "esource/util/time.hpp"
#include "testing.hpp"

namespace esource {
namespace {

TEST(Dates, IsoDmyAndEpochFormatsRoundTrip) {
  auto d = make_date(2016, 3, 1);
  EXPECT_EQ(format_iso_date(d), "2016-03-01");
  EXPECT_EQ(format_dmy_date(d), "01/03/2016");
  EXPECT_EQ(format_epoch_days(d), "16861");
  EXPECT_EQ(parse_iso_date("2016-03-01"), d);
  EXPECT_EQ(parse_dmy_date("01/03/2016"), d);
  EXPECT_EQ(parse_epoch_days("16861"), d);
  EXPECT_FALSE(parse_iso_date("2016-02-30"));
  EXPECT_FALSE(parse_iso_date("2016-3-1"));
  EXPECT_FALSE(parse_dmy_date("2016-03-01"));
  EXPECT_FALSE(parse_epoch_days("12a"));
}

TEST(Dates, AgeIsWholeYearsElapsed) {
  auto birth = make_date(1998, 3, 2);
  EXPECT_EQ(age_in_years(birth, make_date(2016, 3, 1)), 17);
  EXPECT_EQ(age_in_years(birth, make_date(2016, 3, 2)), 18);
  EXPECT_EQ(age_in_years(make_date(2000, 2, 29), make_date(2001, 2, 28)), 0);
  EXPECT_EQ(age_in_years(make_date(2000, 2, 29), make_date(2001, 3, 1)), 1);
}

TEST(Dates, Weekends) {
  EXPECT_TRUE(is_weekend(make_date(2016, 3, 5)));
  EXPECT_TRUE(is_weekend(make_date(2016, 3, 6)));
  EXPECT_FALSE(is_weekend(make_date(2016, 3, 7)));
}

TEST(Instants, ParseAndOrder) {
  auto day = Instant::parse("2016-03-01");
  auto early = Instant::parse("2016-03-01T00:00");
  auto late = Instant::parse("2016-03-01T17:45:59");
  ASSERT_TRUE(day && early && late);
  EXPECT_LT(*day, *early);
  EXPECT_LT(*early, *late);
  EXPECT_EQ(late->to_string(), "2016-03-01T17:45");
  EXPECT_EQ(day->to_string(), "2016-03-01");
  EXPECT_LT(*late, *Instant::parse("2016-03-02"));
  EXPECT_FALSE(Instant::parse("2016-03-01T25:00"));
  EXPECT_FALSE(Instant::parse("yesterday"));
}

TEST(Digests, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // RFC 4231 test case 2.
  EXPECT_EQ(hmac_sha256_hex("Jefe", "what do ya want for nothing?"),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zm9vYg=="), "foob");
  EXPECT_THROW(base64_decode("Zm9v!"), Error);
}

TEST(Digests, StableUuidIsDeterministicAndDistinct) {
  auto a = stable_uuid("submission|P1|x|F.CROM1");
  EXPECT_EQ(a, stable_uuid("submission|P1|x|F.CROM1"));
  EXPECT_NE(a, stable_uuid("submission|P1|x|F.CROM2"));
  ASSERT_EQ(a.size(), 36u);
  EXPECT_EQ(a[8], '-');
  EXPECT_EQ(a[14], '5');
}

TEST(Random, SameSeedSameStream) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(Rng(7).next(), Rng(8).next());
  EXPECT_NE(derive_seed(1, "P1"), derive_seed(1, "P2"));
  EXPECT_NE(derive_seed(1, "P1", 1), derive_seed(1, "P1", 2));
}

TEST(Random, RangeAndUniformStayInBounds) {
  Rng r(3);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    auto v = r.range(-2, 2);
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 2);
    seen.insert(v);
    auto u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Strings, TrimAndSplit) {
  EXPECT_EQ(trim("  a b \n"), "a b");
  EXPECT_EQ(split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_TRUE(starts_with("CDIM/3", "CDIM"));
}

TEST(AppendLogs, ReplayReturnsRecordsInOrder) {
  testing::TempDir dir;
  {
    AppendLog log(dir / "j.jsonl");
    log.append({{"n", 1}});
    log.append({{"n", 2}});
  }
  AppendLog again(dir / "j.jsonl");
  std::vector<int> seen;
  again.replay([&](const nlohmann::json& j) { seen.push_back(j["n"]); });
  EXPECT_EQ(seen, (std::vector<int>{1, 2}));
}

TEST(AppendLogs, TornTailIsSkippedButMidFileCorruptionIsNot) {
  testing::TempDir dir;
  {
    std::ofstream f(dir / "torn.jsonl");
    f << "{\"n\":1}\n{\"n\":";
  }
  AppendLog torn(dir / "torn.jsonl");
  int count = 0;
  torn.replay([&](const nlohmann::json&) { ++count; });
  EXPECT_EQ(count, 1);

  {
    std::ofstream f(dir / "bad.jsonl");
    f << "{\"n\":1}\n{oops\n{\"n\":3}\n";
  }
  AppendLog bad(dir / "bad.jsonl");
  EXPECT_THROW(bad.replay([](const nlohmann::json&) {}), Error);
}

TEST(AppendLogs, WithoutPathIsANoOp) {
  AppendLog log;
  log.append({{"n", 1}});
  int count = 0;
  log.replay([&](const nlohmann::json&) { ++count; });
  EXPECT_EQ(count, 0);
  EXPECT_FALSE(log.persistent());
}

TEST(Errors, NamesRoundTrip) {
  EXPECT_EQ(to_string(Errc::WrongWorkflowState), "WrongWorkflowState");
  EXPECT_EQ(errc_from_string("AlreadyAssigned"), Errc::AlreadyAssigned);
  EXPECT_EQ(errc_from_string("nonsense"), Errc::InvalidArgument);
  Error e(Errc::UnknownStudy, "X");
  EXPECT_EQ(e.code(), Errc::UnknownStudy);
  EXPECT_EQ(e.detail(), "X");
}

}  // namespace
}  // namespace esource
