#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace esource::cdim {

/// Canonicalises an ontology concept reference to `PREFIX/n`.
///
/// Accepts the zero-padded alias spelling (`CDIM_000073`), the catalog
/// spelling (`CDIM/73`) and the spaced variant (`CDIM /73`). Returns nullopt
/// for anything else, e.g. `CDIM-73`. Idempotent on its own output.
std::optional<std::string> normalize_concept_id(std::string_view raw);

}  // namespace esource::cdim
