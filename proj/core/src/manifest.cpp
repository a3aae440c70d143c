#include "moldkit/manifest.hpp"

#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "moldkit/container.hpp"
#include "moldkit/error.hpp"

namespace moldkit {

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::string split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const {
  std::filesystem::path p(e.path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

Manifest Manifest::filter(Split split) const {
  Manifest out;
  out.base_dir = base_dir;
  for (const auto& e : entries) {
    if (e.split == split) out.entries.push_back(e);
  }
  return out;
}

Manifest parse_manifest_text(const std::string& text, std::filesystem::path base_dir) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::map<Split, std::set<std::string>> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw DataError(where + "expected a JSON object");
    ManifestEntry entry;
    try {
      entry.path = obj.at("path").get<std::string>();
      const auto label = obj.at("label").get<std::string>();
      if (label == "real") {
        entry.label = 0;
      } else if (label == "fake") {
        entry.label = 1;
      } else {
        throw DataError(where + "unknown label '" + label + "' (expected real or fake)");
      }
      entry.subset = obj.at("subset").get<std::string>();
      const auto split = obj.at("split").get<std::string>();
      if (split != "train" && split != "val" && split != "test") {
        throw DataError(where + "unknown split '" + split + "'");
      }
      entry.split = parse_split(split);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "missing or mistyped field (" + e.what() + ")");
    }
    if (entry.path.empty()) throw DataError(where + "empty path");
    if (!seen[entry.split].insert(entry.path).second) {
      throw DataError(where + "duplicate path '" + entry.path + "' in split " + split_name(entry.split));
    }
    m.entries.push_back(std::move(entry));
  }
  if (m.entries.empty()) m.warnings.push_back("manifest contains no entries");
  return m;
}

Manifest parse_manifest(const std::filesystem::path& path) {
  return parse_manifest_text(read_file_bytes(path), path.parent_path());
}

std::string manifest_to_text(const Manifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json obj;
    obj["path"] = e.path;
    obj["label"] = e.label == 1 ? "fake" : "real";
    obj["subset"] = e.subset;
    obj["split"] = split_name(e.split);
    out += obj.dump() + "\n";
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  write_file_bytes(path, manifest_to_text(manifest));
}

}  // namespace moldkit
