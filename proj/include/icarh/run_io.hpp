#pragma once

#include <string>

#include "nlohmann/json.hpp"

namespace icarh {

std::string sha256_file(const std::string& path);
std::string sha256_string(const std::string& data);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);

// Run manifest: command, resolved config, seed, input/output digests, timing.
class ManifestBuilder {
public:
  ManifestBuilder(const std::string& command, uint64_t seed);
  void set_config(const nlohmann::json& resolved_config);
  void add_input(const std::string& label, const std::string& path);
  void add_output(const std::string& label, const std::string& path);
  void write(const std::string& path);  // records elapsed time at write

private:
  nlohmann::json j_;
  double start_;
};

}  // namespace icarh
