#pragma once

// Run manifests: a JSON record written next to every command's outputs.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace taurnn {

inline constexpr const char* kToolkitVersion = "1.0.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::vector<std::string> command_line;
  std::string config_hash;  // FNV-1a of the canonical config text, hex
  std::uint64_t seed = 0;
  std::string version = kToolkitVersion;
  std::string started, finished;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const {
    return {{"command_line", command_line}, {"config_hash", config_hash},
            {"seed", seed},                 {"version", version},
            {"started", started},           {"finished", finished},
            {"outputs", outputs}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.command_line = j.at("command_line").get<std::vector<std::string>>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  }
};

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_file_atomic(path, m.to_json().dump(2) + "\n");
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest '" + path.string() + "'");
  return RunManifest::from_json(nlohmann::json::parse(in));
}

}  // namespace taurnn
