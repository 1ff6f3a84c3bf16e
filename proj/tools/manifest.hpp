#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qtree/io.hpp"

namespace qtree::cli {

std::string sha256_file(const std::string& path);  // hex; IoError if unreadable

struct FileDigest {
  std::string path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

FileDigest digest(const std::string& path);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // after the program name; re-run verbatim
  json flags = json::object();    // every option of the subcommand, defaults included
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string version;
  std::string started_utc;
  double wall_clock_s = 0.0;

  json to_json() const;
  static RunManifest from_json(const json& j);
  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

}  // namespace qtree::cli
