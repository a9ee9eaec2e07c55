// artifacts.hpp - atomic artifact writes, content hashing, run manifests
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mpo/errors.hpp"
#include "mpo/rng.hpp"

namespace mpo {

// Write-temp-then-rename so readers never observe a partial file.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw ConfigError("cannot open for write: " + tmp.string());
    os << content;
    if (!os) throw ConfigError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string content_hash_hex(const std::string& bytes) {
  std::uint64_t h = fnv1a64(bytes);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string file_hash_hex(const std::filesystem::path& path) {
  return content_hash_hex(read_file(path));
}

// Resolved run description: command, resolved config, flag parameters that
// live outside the config, seeds, and content hashes of inputs and outputs.
// Rerunning the command with these inputs reproduces every artifact
// bit-for-bit. Contains no timestamps or environment-dependent fields.
class Manifest {
 public:
  Manifest(std::string command, std::string resolved_config)
      : command_(std::move(command)), config_(std::move(resolved_config)) {}

  void add_seed(const std::string& name, std::uint64_t seed) {
    seeds_[name] = seed;
  }

  void add_param(const std::string& name, const std::string& value) {
    params_[name] = value;
  }

  void add_input(const std::filesystem::path& path) {
    inputs_[path.filename().string()] = file_hash_hex(path);
  }

  void add_artifact(const std::filesystem::path& path) {
    artifacts_[path.filename().string()] = file_hash_hex(path);
  }

  std::string render() const {
    nlohmann::json j;
    j["command"] = command_;
    j["config"] = config_;
    j["params"] = params_;
    j["seeds"] = seeds_;
    j["inputs"] = inputs_;
    j["artifacts"] = artifacts_;
    return j.dump(2) + "\n";
  }

  void write(const std::filesystem::path& path) const {
    atomic_write_file(path, render());
  }

 private:
  std::string command_;
  std::string config_;
  std::map<std::string, std::string> params_;
  std::map<std::string, std::uint64_t> seeds_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> artifacts_;
};

}  // namespace mpo
