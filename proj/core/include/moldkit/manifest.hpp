#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace moldkit {

enum class Split { train, val, test };

Split parse_split(const std::string& name);
std::string split_name(Split split);

struct ManifestEntry {
  std::string path;
  int label = 0;  // 0 = real, 1 = fake
  std::string subset;
  Split split = Split::train;
};

struct Manifest {
  std::filesystem::path base_dir;  // directory relative paths resolve against
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  Manifest filter(Split split) const;
};

// One JSON object per line with keys path, label ("real" | "fake"), subset,
// split ("train" | "val" | "test"). Blank lines are skipped. Throws DataError
// naming the line number on malformed input, unknown labels or splits, and
// duplicate paths within a split.
Manifest parse_manifest(const std::filesystem::path& path);
Manifest parse_manifest_text(const std::string& text, std::filesystem::path base_dir = {});

std::string manifest_to_text(const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace moldkit
