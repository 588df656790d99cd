#include "run_context.h"

#include <chrono>
#include <cstdio>
#include <ctime>

#include <openssl/evp.h>

#include "json.hpp"

#include "finegrain/error.h"
#include "finegrain/io.h"

#ifndef FINEGRAIN_VERSION
#define FINEGRAIN_VERSION "unknown"
#endif

namespace finegrain::cli {

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kIo, "SHA-256 computation failed");
  }
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(byte, sizeof(byte), "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunContext::RunContext(std::string command, std::vector<std::string> argv, Config config)
    : command_(std::move(command)), argv_(std::move(argv)), config_(std::move(config)), started_(utc_now()) {}

std::filesystem::path RunContext::input(const std::string& key) {
  auto path = config_.get(key);
  if (!path || path->empty()) throw Error(ErrorKind::kMissing, "missing required input '" + key + "'");
  return input_path(*path);
}

std::filesystem::path RunContext::input_path(const std::filesystem::path& path) {
  input_digests_[path.string()] = sha256_hex(read_file(path));
  return path;
}

std::filesystem::path RunContext::output_path(const std::string& key) const {
  auto path = config_.get(key);
  if (!path || path->empty()) throw Error(ErrorKind::kMissing, "missing required output '" + key + "'");
  return *path;
}

void RunContext::stage(const std::filesystem::path& path, std::string contents) {
  staged_[path] = std::move(contents);
}

std::string RunContext::manifest_json(const std::filesystem::path& output) const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["argv"] = argv_;
  j["tool_version"] = std::string("finegrain ") + FINEGRAIN_VERSION;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [key, value] : config_.values()) config[key] = value;
  j["config"] = std::move(config);
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  for (const auto& [name, seed] : seeds_) seeds[name] = seed;
  j["seeds"] = std::move(seeds);
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  for (const auto& [path, digest] : input_digests_) inputs[path] = "sha256:" + digest;
  j["inputs"] = std::move(inputs);
  j["output"] = output.string();
  j["output_digest"] = "sha256:" + sha256_hex(staged_.at(output));
  j["started"] = started_;
  j["finished"] = utc_now();
  return j.dump(2) + "\n";
}

void RunContext::commit() {
  for (const auto& [path, contents] : staged_) {
    std::filesystem::path manifest = path;
    manifest += ".manifest.json";
    std::string manifest_text = manifest_json(path);
    write_file_atomic(path, contents);
    write_file_atomic(manifest, manifest_text);
  }
}

}  // namespace finegrain::cli
