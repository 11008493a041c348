#pragma once

// Provenance record written next to every run's outputs as _RUNINFO.json.

#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "sentfeed/error.hpp"

#ifndef SENTFEED_VERSION
#define SENTFEED_VERSION "0.0.0"
#endif

namespace sentfeed::pipeline {

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, ErrorKind::InvalidArgument, "cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  require(ok, ErrorKind::InvalidArgument, "SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::SchemaViolation, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RunManifest {
  std::string toolkit_version = SENTFEED_VERSION;
  std::string config_hash;
  std::uint64_t seed = 0;
  bool seeded = false;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path or label, sha256)
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::map<std::string, std::string> outputs;  // file -> sha256

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["toolkit_version"] = toolkit_version;
    j["config_sha256"] = config_hash;
    if (seeded) j["seed"] = seed;
    else j["seed"] = nullptr;
    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& [path, hash] : inputs) j["inputs"].push_back({{"path", path}, {"sha256", hash}});
    j["stages"] = nlohmann::ordered_json::array();
    for (const auto& [name, secs] : stage_seconds) j["stages"].push_back({{"name", name}, {"wall_seconds", secs}});
    j["outputs"] = nlohmann::ordered_json::array();
    for (const auto& [file, hash] : outputs) j["outputs"].push_back({{"file", file}, {"sha256", hash}});
    return j;
  }

  std::string dump() const { return to_json().dump(2) + "\n"; }
};

}  // namespace sentfeed::pipeline
