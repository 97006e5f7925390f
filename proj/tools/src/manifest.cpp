#include "freegauss/cli/manifest.hpp"

#include <algorithm>
#include <array>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "freegauss/error.hpp"

namespace freegauss::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorKind::Io, "sha256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<size_t>(is.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    os << text;
    os.flush();
    if (!os) throw Error(ErrorKind::Io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

namespace {

std::string utc_iso(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

Manifest::Manifest(std::string command, fs::path out_dir, json config)
    : command_(std::move(command)),
      out_dir_(std::move(out_dir)),
      config_(std::move(config)),
      start_(std::chrono::system_clock::now()) {}

void Manifest::add_input(const fs::path& path) {
  inputs_.push_back(json{{"path", fs::absolute(path).lexically_normal().string()},
                         {"sha256", sha256_file(path)}});
}

void Manifest::add_output(const fs::path& path) {
  const fs::path abs = fs::absolute(path.is_absolute() || path.has_parent_path() ? path : out_dir_ / path)
                           .lexically_normal();
  auto s = abs.lexically_relative(fs::absolute(out_dir_).lexically_normal()).generic_string();
  if (s.empty() || s.rfind("..", 0) == 0) s = abs.generic_string();
  if (std::find(outputs_.begin(), outputs_.end(), s) == outputs_.end()) outputs_.push_back(s);
}

void Manifest::set(const std::string& key, json value) { extra_[key] = std::move(value); }

void Manifest::write() {
  for (const auto& o : outputs_) {
    const fs::path p = fs::path(o).is_absolute() ? fs::path(o) : out_dir_ / o;
    if (!fs::exists(p)) throw Error(ErrorKind::Io, "listed output missing: " + p.string());
  }
  const auto end = std::chrono::system_clock::now();
  json m{{"tool", "freegauss"},
         {"version", kToolVersion},
         {"command", command_},
         {"config", config_},
         {"inputs", inputs_},
         {"outputs", outputs_},
         {"started", utc_iso(start_)},
         {"finished", utc_iso(end)},
         {"wall_seconds", std::chrono::duration<double>(end - start_).count()}};
  for (const auto& [k, v] : extra_.items()) m[k] = v;
  fs::create_directories(out_dir_);
  write_file_atomic(out_dir_ / "manifest.json", m.dump(2) + '\n');
}

}  // namespace freegauss::cli
