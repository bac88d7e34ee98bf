#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "crowdmap/errors.hpp"
#include "crowdmap/version.hpp"

namespace crowdmap {

/// FNV-1a over the file bytes; a provenance fingerprint, not a security hash.
inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for digest");
  std::uint64_t hash = 1469598103934665603ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ull;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return hash;
}

inline std::string file_digest(const std::string& path) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv64:%016llx",
                static_cast<unsigned long long>(fnv1a64_file(path)));
  return buf;
}

/// Writes bytes to a temp file in the same directory, then renames over the
/// target.
inline void atomic_write_file(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path +
                        "': " + ec.message());
}

/// Every CLI command records what it ran: the resolved configuration with
/// per-field provenance, input digests, and the produced files. A manifest
/// plus the same build reproduces the outputs byte for byte.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)) {}

  /// provenance: "user" (given on the command line), "paper" (default taken
  /// from the publication), or "artifact-default" (a choice of this library).
  void set_config(const std::string& field, nlohmann::json value,
                  const std::string& provenance) {
    config_[field] = {{"value", std::move(value)}, {"provenance", provenance}};
  }

  void set_seed(std::uint64_t seed) { seed_ = static_cast<std::int64_t>(seed); }

  void add_input(const std::string& path) {
    inputs_[path] = file_digest(path);
  }

  void add_output(const std::string& path) {
    outputs_.push_back({{"path", path}, {"digest", file_digest(path)}});
  }

  void add_record(nlohmann::json record) {
    records_.push_back(std::move(record));
  }

  void add_warning(const std::string& text) { warnings_.push_back(text); }

  const nlohmann::json& config() const { return config_; }

  nlohmann::json to_json() const {
    nlohmann::json j{{"artifact", kArtifactName},
                     {"artifact_version", kArtifactVersion},
                     {"command", command_},
                     {"config", config_},
                     {"inputs", inputs_},
                     {"outputs", outputs_}};
    if (seed_ >= 0) j["seed"] = seed_;
    if (!records_.empty()) j["records"] = records_;
    if (!warnings_.empty()) j["warnings"] = warnings_;
    return j;
  }

  void write(const std::string& path) const {
    atomic_write_file(path, to_json().dump(2) + "\n");
  }

 private:
  std::string command_;
  std::int64_t seed_ = -1;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::object();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json records_ = nlohmann::json::array();
  std::vector<std::string> warnings_;
};

inline nlohmann::json load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Resolved value of one field in a config object ({field: {value, ...}}).
inline const nlohmann::json& config_value(const nlohmann::json& config,
                                          const std::string& field) {
  if (!config.contains(field)) {
    throw ParseError("manifest is missing config field '" + field + "'");
  }
  return config.at(field).at("value");
}

/// Resolved value of one config field in a loaded manifest.
inline const nlohmann::json& manifest_config_value(const nlohmann::json& manifest,
                                                   const std::string& field) {
  return config_value(manifest.at("config"), field);
}

}  // namespace crowdmap
