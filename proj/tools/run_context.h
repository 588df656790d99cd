#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "finegrain/config.h"

namespace finegrain::cli {

// Per-invocation state: the effective configuration, the inputs read and the
// outputs staged. Outputs are only written by commit(), after the command has
// succeeded, each through an atomic rename and each with a manifest beside it.
class RunContext {
 public:
  RunContext(std::string command, std::vector<std::string> argv, Config config);

  const Config& config() const { return config_; }

  // Records the content digest of an input file and returns its path.
  std::filesystem::path input(const std::string& key);
  std::filesystem::path input_path(const std::filesystem::path& path);

  // Path of a required output named by `key`.
  std::filesystem::path output_path(const std::string& key) const;

  void stage(const std::filesystem::path& path, std::string contents);
  void note_seed(const std::string& consumer, std::uint64_t seed) { seeds_[consumer] = seed; }

  void commit();

  const std::map<std::filesystem::path, std::string>& staged() const { return staged_; }

 private:
  std::string manifest_json(const std::filesystem::path& output) const;

  std::string command_;
  std::vector<std::string> argv_;
  Config config_;
  std::string started_;
  std::map<std::string, std::string> input_digests_;
  std::map<std::string, std::uint64_t> seeds_;
  std::map<std::filesystem::path, std::string> staged_;
};

std::string sha256_hex(const std::string& data);
std::string utc_now();

}  // namespace finegrain::cli
