#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "freegauss/cli/config.hpp"
#include "freegauss/experiments.hpp"

namespace freegauss::cli {

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "FREEGAUSS_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "freegauss-out";

/// Full command line (argv[0] included). Returns the process exit code:
/// 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reference records, as written by the reference command.
void save_references(const std::filesystem::path& dir, const experiments::References& refs);
experiments::References load_references(const std::filesystem::path& dir);

}  // namespace freegauss::cli
