#include "esource/util/xml.hpp"

#include <expat.h>

#include "esource/error.hpp"

namespace esource::xml {

std::optional<std::string_view> Element::attr(std::string_view local, std::string_view ns_uri) const {
  for (const auto& a : attributes) {
    if (a.name == local && a.ns == ns_uri) return a.value;
  }
  return std::nullopt;
}

const Element* Element::child(std::string_view ns_uri, std::string_view local) const {
  for (const auto& c : children) {
    if (c.is(ns_uri, local)) return &c;
  }
  return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view ns_uri, std::string_view local) const {
  std::vector<const Element*> out;
  for (const auto& c : children) {
    if (c.is(ns_uri, local)) out.push_back(&c);
  }
  return out;
}

namespace {

constexpr char kSep = '\x1F';

std::pair<std::string, std::string> split_name(const XML_Char* qualified) {
  std::string_view q(qualified);
  auto pos = q.find(kSep);
  if (pos == std::string_view::npos) return {std::string(), std::string(q)};
  return {std::string(q.substr(0, pos)), std::string(q.substr(pos + 1))};
}

struct Builder {
  XML_Parser parser = nullptr;
  std::vector<Element*> stack;
  std::vector<std::size_t> start_len;
  Element root;
  bool have_root = false;
  std::vector<NamespaceDecl> decls;
  std::vector<NamespaceDecl> pending;
};

void on_start(void* user, const XML_Char* name, const XML_Char** atts) {
  auto* b = static_cast<Builder*>(user);
  Element* e = nullptr;
  if (b->stack.empty()) {
    e = &b->root;
    b->have_root = true;
  } else {
    b->stack.back()->children.emplace_back();
    e = &b->stack.back()->children.back();
  }
  auto [ns, local] = split_name(name);
  e->ns = std::move(ns);
  e->name = std::move(local);
  for (int i = 0; atts[i] != nullptr; i += 2) {
    auto [ans, alocal] = split_name(atts[i]);
    e->attributes.push_back({std::move(ans), std::move(alocal), atts[i + 1]});
  }
  e->declarations = std::move(b->pending);
  b->pending.clear();
  e->begin = static_cast<std::size_t>(XML_GetCurrentByteIndex(b->parser));
  b->start_len.push_back(static_cast<std::size_t>(XML_GetCurrentByteCount(b->parser)));
  b->stack.push_back(e);
}

void on_end(void* user, const XML_Char*) {
  auto* b = static_cast<Builder*>(user);
  Element* e = b->stack.back();
  auto count = static_cast<std::size_t>(XML_GetCurrentByteCount(b->parser));
  if (count == 0) {
    // empty-element tag: the end event carries no bytes of its own
    e->end = e->begin + b->start_len.back();
  } else {
    e->end = static_cast<std::size_t>(XML_GetCurrentByteIndex(b->parser)) + count;
  }
  b->start_len.pop_back();
  b->stack.pop_back();
}

void on_text(void* user, const XML_Char* s, int len) {
  auto* b = static_cast<Builder*>(user);
  if (!b->stack.empty()) b->stack.back()->text.append(s, static_cast<std::size_t>(len));
}

void on_ns(void* user, const XML_Char* prefix, const XML_Char* uri) {
  auto* b = static_cast<Builder*>(user);
  b->decls.push_back({prefix ? prefix : "", uri ? uri : ""});
  b->pending.push_back(b->decls.back());
}

}  // namespace

Document parse(std::string text) {
  Document doc;
  doc.source_ = std::make_shared<const std::string>(std::move(text));
  Builder b;
  b.parser = XML_ParserCreateNS("UTF-8", kSep);
  if (b.parser == nullptr) throw Error(Errc::StorageError, "cannot allocate XML parser");
  XML_SetUserData(b.parser, &b);
  XML_SetElementHandler(b.parser, on_start, on_end);
  XML_SetCharacterDataHandler(b.parser, on_text);
  XML_SetStartNamespaceDeclHandler(b.parser, on_ns);
  const auto& src = *doc.source_;
  auto status = XML_Parse(b.parser, src.data(), static_cast<int>(src.size()), XML_TRUE);
  if (status != XML_STATUS_OK || !b.have_root) {
    std::string msg = b.have_root ? XML_ErrorString(XML_GetErrorCode(b.parser)) : "no root element";
    msg += " at line " + std::to_string(XML_GetCurrentLineNumber(b.parser)) + ", column " +
           std::to_string(XML_GetCurrentColumnNumber(b.parser));
    XML_ParserFree(b.parser);
    throw Error(Errc::MalformedXml, msg);
  }
  XML_ParserFree(b.parser);
  doc.root_ = std::move(b.root);
  doc.decls_ = std::move(b.decls);
  return doc;
}

std::string escape(std::string_view text, bool attribute) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"':
        if (attribute) { out += "&quot;"; } else { out += c; }
        break;
      case '\n':
        if (attribute) { out += "&#10;"; } else { out += c; }
        break;
      case '\r': out += "&#13;"; break;
      case '\t':
        if (attribute) { out += "&#9;"; } else { out += c; }
        break;
      default: out += c;
    }
  }
  return out;
}

namespace {

void write(const Node& n, std::string& out, int depth) {
  std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  out += indent;
  if (n.raw) {
    out += n.text;
    out += '\n';
    return;
  }
  out += '<';
  out += n.name;
  for (const auto& [k, v] : n.attributes) {
    out += ' ';
    out += k;
    out += "=\"";
    out += escape(v, true);
    out += '"';
  }
  if (n.children.empty() && n.text.empty()) {
    out += "/>\n";
    return;
  }
  out += '>';
  if (n.children.empty()) {
    out += escape(n.text, false);
  } else {
    out += '\n';
    if (!n.text.empty()) {
      out += indent + "  " + escape(n.text, false) + "\n";
    }
    for (const auto& c : n.children) write(c, out, depth + 1);
    out += indent;
  }
  out += "</";
  out += n.name;
  out += ">\n";
}

}  // namespace

std::string serialize(const Node& root) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  write(root, out, 0);
  return out;
}

}  // namespace esource::xml
