#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace esource::xml {

struct Attribute {
  std::string ns;  // empty for unqualified attributes
  std::string name;
  std::string value;
};

struct NamespaceDecl {
  std::string prefix;  // empty for the default namespace
  std::string uri;
  friend bool operator==(const NamespaceDecl&, const NamespaceDecl&) = default;
};

/// Parsed element. `begin`/`end` delimit the element's bytes in the owning
/// document's source text, start tag through end tag.
struct Element {
  std::string ns;
  std::string name;
  std::vector<Attribute> attributes;
  std::vector<Element> children;
  std::string text;  // direct character data, concatenated
  std::vector<NamespaceDecl> declarations;  // xmlns attributes on this element
  std::size_t begin = 0;
  std::size_t end = 0;

  bool is(std::string_view ns_uri, std::string_view local) const { return ns == ns_uri && name == local; }
  /// Attribute lookup; ns empty means unqualified.
  std::optional<std::string_view> attr(std::string_view local, std::string_view ns_uri = {}) const;
  const Element* child(std::string_view ns_uri, std::string_view local) const;
  std::vector<const Element*> children_named(std::string_view ns_uri, std::string_view local) const;
};

class Document {
 public:
  const Element& root() const { return root_; }
  const std::string& source() const { return *source_; }
  /// Namespace declarations in document order, wherever they occur.
  const std::vector<NamespaceDecl>& declarations() const { return decls_; }
  std::string_view raw(const Element& e) const { return std::string_view(*source_).substr(e.begin, e.end - e.begin); }

 private:
  friend Document parse(std::string text);
  Element root_;
  std::shared_ptr<const std::string> source_;
  std::vector<NamespaceDecl> decls_;
};

/// Namespace-aware parse. Throws Error(MalformedXml) with line/column.
Document parse(std::string text);

// ---------------------------------------------------------------------------
// Output

std::string escape(std::string_view text, bool attribute);

/// Output tree. Names carry their prefix ("tfm:QueryId"); namespace
/// declarations are ordinary attributes ("xmlns:tfm").
struct Node {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Node> children;
  std::string text;
  bool raw = false;  // `text` is emitted verbatim in place of an element

  Node() = default;
  explicit Node(std::string n) : name(std::move(n)) {}

  Node& attr(std::string key, std::string value) {
    attributes.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  Node& add(Node child) {
    children.push_back(std::move(child));
    return children.back();
  }
  Node& add(std::string child_name) { return add(Node(std::move(child_name))); }
  static Node verbatim(std::string bytes) {
    Node n;
    n.raw = true;
    n.text = std::move(bytes);
    return n;
  }
  static Node leaf(std::string n, std::string text) {
    Node node(std::move(n));
    node.text = std::move(text);
    return node;
  }
};

/// Two-space indented serialisation with an XML declaration.
std::string serialize(const Node& root);

}  // namespace esource::xml
