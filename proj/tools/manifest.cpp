#include "manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

namespace qtree::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &n);
  std::string hex;
  char two[3];
  for (unsigned int i = 0; i < n; ++i) {
    std::snprintf(two, sizeof two, "%02x", md[i]);
    hex += two;
  }
  return hex;
}

FileDigest digest(const std::string& path) {
  return {path, sha256_file(path), std::filesystem::file_size(path)};
}

namespace {

json files_json(const std::vector<FileDigest>& fs) {
  json a = json::array();
  for (const auto& f : fs) a.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return a;
}

std::vector<FileDigest> files_from(const json& a) {
  std::vector<FileDigest> out;
  for (const auto& f : a)
    out.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                   f.value("bytes", std::uintmax_t{0})});
  return out;
}

}  // namespace

json RunManifest::to_json() const {
  json j;
  j["tool"] = "qtree";
  j["version"] = version;
  j["command"] = command;
  j["argv"] = argv;
  j["flags"] = flags;
  j["inputs"] = files_json(inputs);
  j["outputs"] = files_json(outputs);
  j["seed"] = seed ? json(*seed) : json();
  j["workers"] = workers;
  j["started_utc"] = started_utc;
  j["wall_clock_s"] = wall_clock_s;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.flags = j.value("flags", json::object());
    m.inputs = files_from(j.at("inputs"));
    m.outputs = files_from(j.at("outputs"));
    if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    m.workers = j.value("workers", 1);
    m.version = j.value("version", std::string());
    m.started_utc = j.value("started_utc", std::string());
    m.wall_clock_s = j.value("wall_clock_s", 0.0);
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << to_json().dump(2) << '\n';
}

RunManifest RunManifest::read(const std::string& path) { return from_json(read_json_file(path)); }

}  // namespace qtree::cli
