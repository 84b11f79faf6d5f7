#include <gtest/gtest.h>

#include "esource/error.hpp"
#include "esource/util/xml.hpp"

namespace esource::xml {
namespace {

TEST(XmlParse, ResolvesNamespacesAndKeepsRawBytes) {
  std::string text =
      R"(<?xml version="1.0"?><a xmlns="urn:a" xmlns:b="urn:b"><b:c b:k="1" k="2">hi</b:c><d/></a>)";
  auto doc = parse(text);
  const auto& root = doc.root();
  EXPECT_TRUE(root.is("urn:a", "a"));
  ASSERT_EQ(root.children.size(), 2u);
  const auto& c = root.children[0];
  EXPECT_TRUE(c.is("urn:b", "c"));
  EXPECT_EQ(c.attr("k", "urn:b"), "1");
  EXPECT_EQ(c.attr("k"), "2");
  EXPECT_EQ(c.text, "hi");
  EXPECT_EQ(doc.raw(c), R"(<b:c b:k="1" k="2">hi</b:c>)");
  EXPECT_EQ(doc.raw(root.children[1]), "<d/>");
  EXPECT_NE(root.child("urn:a", "d"), nullptr);
  EXPECT_EQ(root.children_named("urn:b", "c").size(), 1u);
  ASSERT_EQ(doc.declarations().size(), 2u);
  EXPECT_EQ(doc.declarations()[1].prefix, "b");
}

TEST(XmlParse, MalformedInputReportsPosition) {
  try {
    parse("<a><b></a>");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedXml);
    EXPECT_NE(e.detail().find("line"), std::string::npos);
  }
  EXPECT_THROW(parse(""), Error);
}

TEST(XmlWrite, EscapesAndIndents) {
  EXPECT_EQ(escape("a<b&\"c\"", true), "a&lt;b&amp;&quot;c&quot;");
  EXPECT_EQ(escape("a<b&\"c\"", false), "a&lt;b&amp;\"c\"");
  Node root("r");
  root.attr("x", "1 & 2");
  root.add(Node::leaf("t", "<v>"));
  root.add(Node::verbatim("<raw keep=\"yes\"/>"));
  auto out = serialize(root);
  EXPECT_NE(out.find("<r x=\"1 &amp; 2\">"), std::string::npos);
  EXPECT_NE(out.find("  <t>&lt;v&gt;</t>"), std::string::npos);
  EXPECT_NE(out.find("<raw keep=\"yes\"/>"), std::string::npos);
  auto back = parse(out);
  EXPECT_EQ(back.root().children.size(), 2u);
}

}  // namespace
}  // namespace esource::xml
