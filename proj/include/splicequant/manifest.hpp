#pragma once

// Run manifests: everything needed to rerun a command and get the same bytes.

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "splicequant/error.hpp"

namespace splicequant {

inline constexpr const char* kVersion = "0.1.0";

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

class RunManifest {
 public:
  explicit RunManifest(std::string subcommand)
      : subcommand_(std::move(subcommand)), t0_(std::chrono::steady_clock::now()) {}

  void flag(const std::string& name, const std::string& value) { flags_[name] = value; }
  void input(const std::string& role, const std::string& path) { inputs_[role] = {path, sha256_file(path)}; }
  void output(const std::string& role, const std::string& path) { outputs_[role] = path; }
  void seed(std::uint64_t s) { seed_ = s; }
  void note(const std::string& key, nlohmann::json v) { notes_[key] = std::move(v); }
  void exit_code(int c) { exit_code_ = c; }

  /// Volatile fields (timestamp, wall time) live under "run" so tools can
  /// drop them before comparing manifests.
  nlohmann::json to_json() const {
    using nlohmann::json;
    json j;
    j["tool"] = "splicequant";
    j["version"] = kVersion;
    j["subcommand"] = subcommand_;
    j["flags"] = flags_;
    json in = json::object();
    for (const auto& [role, p] : inputs_) in[role] = {{"path", p.first}, {"sha256", p.second}};
    j["inputs"] = in;
    j["outputs"] = outputs_;
    j["seed"] = seed_ ? json(*seed_) : json(nullptr);
    if (!notes_.empty()) j["notes"] = notes_;
    j["exit_code"] = exit_code_;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", &tm);
    j["run"] = {{"timestamp_utc", ts}, {"wall_time_s", wall}};
    return j;
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << to_json().dump(2) << '\n';
  }

 private:
  std::string subcommand_;
  std::chrono::steady_clock::time_point t0_;
  std::map<std::string, std::string> flags_;
  std::map<std::string, std::pair<std::string, std::string>> inputs_;
  std::map<std::string, std::string> outputs_;
  std::optional<std::uint64_t> seed_;
  nlohmann::json notes_ = nlohmann::json::object();
  int exit_code_ = 0;
};

}  // namespace splicequant
