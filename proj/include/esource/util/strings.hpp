#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace esource {

std::string_view trim(std::string_view s) noexcept;
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with(std::string_view s, std::string_view prefix) noexcept;

}  // namespace esource
