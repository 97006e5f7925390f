#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace freegauss::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Hex SHA-256 of a file's bytes. Io error if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Writes `text` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

/// Record of one command invocation: version, resolved config, hashed inputs,
/// outputs (relative to out_dir) and timing. Written atomically to
/// <out_dir>/manifest.json at the end of a successful command.
class Manifest {
 public:
  Manifest(std::string command, std::filesystem::path out_dir, nlohmann::json config);

  void add_input(const std::filesystem::path& path);
  /// Path of a file the command wrote (a bare file name is taken relative to out_dir).
  void add_output(const std::filesystem::path& path);
  /// Free-form extra field (e.g. per-run wall-clock seconds).
  void set(const std::string& key, nlohmann::json value);

  const std::filesystem::path& out_dir() const noexcept { return out_dir_; }

  /// Io error if a listed output does not exist.
  void write();

 private:
  std::string command_;
  std::filesystem::path out_dir_;
  nlohmann::json config_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::chrono::system_clock::time_point start_;
};

}  // namespace freegauss::cli
