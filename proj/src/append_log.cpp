#include "esource/util/append_log.hpp"

#include "esource/error.hpp"

namespace esource {

AppendLog::AppendLog(std::optional<std::filesystem::path> path) {
  if (path) open(*path);
}

void AppendLog::open(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream touch(path, std::ios::app);
  if (!touch) throw Error(Errc::StorageError, "cannot open " + path.string());
  std::lock_guard lock(mutex_);
  path_ = path;
}

void AppendLog::append(const nlohmann::json& record) {
  if (!path_) return;
  std::lock_guard lock(mutex_);
  std::ofstream out(*path_, std::ios::app | std::ios::binary);
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::StorageError, "append failed: " + path_->string());
}

void AppendLog::replay(const std::function<void(const nlohmann::json&)>& visit) const {
  if (!path_) return;
  std::ifstream in(*path_, std::ios::binary);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto record = nlohmann::json::parse(line, nullptr, false);
    // A torn final line from a crash mid-append is skipped; anything else is corruption.
    if (record.is_discarded()) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw Error(Errc::StorageError, path_->string() + ":" + std::to_string(lineno) + ": corrupt record");
    }
    visit(record);
  }
}

}  // namespace esource
