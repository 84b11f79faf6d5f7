#include "esource/cdim/concept_id.hpp"

#include <cctype>

#include "esource/util/strings.hpp"

namespace esource::cdim {

std::optional<std::string> normalize_concept_id(std::string_view raw) {
  auto s = trim(raw);
  std::size_t i = 0;
  while (i < s.size() && std::isupper(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0) return std::nullopt;
  std::string prefix(s.substr(0, i));
  while (i < s.size() && s[i] == ' ') ++i;
  if (i >= s.size() || (s[i] != '_' && s[i] != '/')) return std::nullopt;
  ++i;
  while (i < s.size() && s[i] == ' ') ++i;
  auto digits = s.substr(i);
  if (digits.empty()) return std::nullopt;
  for (char c : digits) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
  }
  auto nz = digits.find_first_not_of('0');
  std::string number = nz == std::string_view::npos ? "0" : std::string(digits.substr(nz));
  return prefix + "/" + number;
}

}  // namespace esource::cdim
