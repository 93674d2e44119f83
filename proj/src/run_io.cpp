#include "icarh/run_io.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "icarh/errors.hpp"

namespace icarh {

namespace {

std::string sha256_bytes(const void* data, size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data, len);
  EVP_DigestFinal_ex(ctx, digest, &digest_len);
  EVP_MD_CTX_free(ctx);
  static const char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < digest_len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string sha256_string(const std::string& data) { return sha256_bytes(data.data(), data.size()); }

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  return sha256_bytes(content.data(), content.size());
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open JSON file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write JSON file: " + path);
  out << j.dump(2) << '\n';
}

ManifestBuilder::ManifestBuilder(const std::string& command, uint64_t seed)
    : start_(now_seconds()) {
  j_["command"] = command;
  j_["seed"] = seed;
  j_["library_version"] = "icarh 0.1.0";
  j_["inputs"] = nlohmann::json::object();
  j_["outputs"] = nlohmann::json::object();
}

void ManifestBuilder::set_config(const nlohmann::json& resolved_config) {
  j_["config"] = resolved_config;
}

void ManifestBuilder::add_input(const std::string& label, const std::string& path) {
  j_["inputs"][label] = {{"path", path}, {"sha256", sha256_file(path)}};
}

void ManifestBuilder::add_output(const std::string& label, const std::string& path) {
  j_["outputs"][label] = {{"path", path}, {"sha256", sha256_file(path)}};
}

void ManifestBuilder::write(const std::string& path) {
  j_["elapsed_seconds"] = now_seconds() - start_;
  write_json_file(j_, path);
}

}  // namespace icarh
