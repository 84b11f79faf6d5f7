#include "esource/cdim/path.hpp"

#include <cctype>
#include <map>

#include "esource/error.hpp"

namespace esource::cdim {

namespace {

bool name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

[[noreturn]] void bad(std::string_view text, const std::string& why) {
  throw Error(Errc::InvalidConfig, "record path '" + std::string(text) + "': " + why);
}

}  // namespace

RecordPath RecordPath::parse(std::string_view text) {
  RecordPath p;
  std::size_t i = 0;
  auto read_name = [&] {
    auto start = i;
    while (i < text.size() && name_char(text[i])) ++i;
    if (i == start) bad(text, "expected a name at offset " + std::to_string(start));
    return std::string(text.substr(start, i - start));
  };
  if (text.empty() || text[0] != '/') bad(text, "must be absolute");
  while (i < text.size()) {
    if (text[i] != '/') bad(text, "expected '/' at offset " + std::to_string(i));
    ++i;
    if (i < text.size() && text[i] == '@') {
      ++i;
      p.selector = Selector::Attribute;
      p.attribute = read_name();
      if (i != text.size()) bad(text, "value selector must be last");
      break;
    }
    if (text.substr(i) == "text()") {
      p.selector = Selector::Text;
      i = text.size();
      break;
    }
    Step step;
    step.name = read_name();
    while (i < text.size() && text[i] == '[') {
      ++i;
      if (i < text.size() && text[i] == '@') {
        ++i;
        auto attr = read_name();
        if (text.substr(i, 2) != "='") bad(text, "predicate needs ='value'");
        i += 2;
        auto close = text.find('\'', i);
        if (close == std::string_view::npos) bad(text, "unterminated predicate value");
        step.predicate = std::make_pair(attr, std::string(text.substr(i, close - i)));
        i = close + 1;
      } else {
        int n = 0;
        auto start = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) n = n * 10 + (text[i++] - '0');
        if (i == start || n < 1) bad(text, "position predicate must be a positive integer");
        step.position = n;
      }
      if (i >= text.size() || text[i] != ']') bad(text, "expected ']'");
      ++i;
    }
    p.steps.push_back(std::move(step));
  }
  if (p.steps.empty()) bad(text, "needs at least one element step");
  return p;
}

std::string RecordPath::to_string() const {
  std::string out;
  for (const auto& s : steps) {
    out += "/" + s.name;
    if (s.predicate) out += "[@" + s.predicate->first + "='" + s.predicate->second + "']";
    if (s.position) out += "[" + std::to_string(*s.position) + "]";
  }
  if (selector == Selector::Attribute) out += "/@" + attribute;
  if (selector == Selector::Text) out += "/text()";
  return out;
}

RecordPath RecordPath::entry() const {
  RecordPath p = *this;
  p.selector = Selector::None;
  p.attribute.clear();
  return p;
}

std::vector<PathMatch> match_elements(const RecordPath& path, const xml::Element& root) {
  const auto& first = path.steps.front();
  if (root.name != first.name) {
    throw Error(Errc::PathEvaluationError,
                "path " + path.to_string() + " expects root <" + first.name + ">, record has <" + root.name + ">");
  }
  auto step_accepts = [](const RecordPath::Step& s, const xml::Element& e, int position) {
    if (e.name != s.name) return false;
    if (s.predicate) {
      auto v = e.attr(s.predicate->first);
      if (!v || *v != s.predicate->second) return false;
    }
    return !s.position || *s.position == position;
  };
  std::vector<PathMatch> current;
  if (step_accepts(first, root, 1)) current.push_back({&root, "/" + root.name + "[1]"});
  for (std::size_t k = 1; k < path.steps.size(); ++k) {
    std::vector<PathMatch> next;
    for (const auto& m : current) {
      std::map<std::string, int> seen;
      for (const auto& child : m.element->children) {
        int position = ++seen[child.name];
        if (step_accepts(path.steps[k], child, position)) {
          next.push_back({&child, m.indexed_path + "/" + child.name + "[" + std::to_string(position) + "]"});
        }
      }
    }
    current = std::move(next);
  }
  return current;
}

std::optional<std::string> select_value(const RecordPath& path, const xml::Element& entry) {
  switch (path.selector) {
    case RecordPath::Selector::Attribute: {
      auto v = entry.attr(path.attribute);
      if (!v) return std::nullopt;
      return std::string(*v);
    }
    case RecordPath::Selector::Text: return entry.text;
    case RecordPath::Selector::None: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace esource::cdim
