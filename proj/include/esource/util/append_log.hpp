#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

namespace esource {

/// Append-only JSON-lines file. Without a path it is a no-op sink, which is
/// how in-memory components run.
class AppendLog {
 public:
  AppendLog() = default;
  explicit AppendLog(std::optional<std::filesystem::path> path);

  /// Attaches a file; used when the path is only known after construction.
  void open(const std::filesystem::path& path);
  void append(const nlohmann::json& record);
  /// Calls visit for every record already on disk, in order.
  void replay(const std::function<void(const nlohmann::json&)>& visit) const;
  bool persistent() const noexcept { return path_.has_value(); }
  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

 private:
  std::optional<std::filesystem::path> path_;
  std::mutex mutex_;
};

}  // namespace esource
