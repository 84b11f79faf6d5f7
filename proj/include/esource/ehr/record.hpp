#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "esource/cdim/source_model.hpp"
#include "esource/cdim/terminology.hpp"
#include "esource/ehr/population.hpp"

namespace esource::ehr {

/// Renders the patient in the source's native schema. Codes are taken from
/// the terminology map for the source's native terminology; facts with no code
/// there are omitted. Errors: UnknownSource.
std::string render_record(const Patient& p, const cdim::SourceModel& sm,
                          const cdim::TerminologyMap& terms = cdim::TerminologyMap::builtin());

/// Structural schema of a native record format: allowed children and required,
/// typed attributes per element.
class RecordSchema {
 public:
  static RecordSchema load(const std::filesystem::path& json_file);
  static RecordSchema from_json_text(std::string_view text);
  /// `<resource dir>/sources/<id>.schema.json`.
  static RecordSchema for_source(const std::string& source_id);

  /// Empty when the document conforms; otherwise one message per violation.
  std::vector<std::string> validate(std::string_view xml_text) const;

 private:
  struct ElementRule {
    std::map<std::string, std::string> attributes;  // name -> type
    std::vector<std::string> children;
  };
  std::string root_;
  cdim::DateFormat date_format_ = cdim::DateFormat::Iso;
  std::map<std::string, ElementRule> rules_;
};

}  // namespace esource::ehr
