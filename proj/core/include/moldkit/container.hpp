#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>

#include "moldkit/tensor.hpp"

namespace moldkit {

// In-memory view of a tensor container file:
//
//   bytes [0, 8)      little-endian u64 header length n
//   bytes [8, 8 + n)  UTF-8 JSON: name -> {"dtype", "shape", "data_offsets"}
//   remainder         raw little-endian payloads at the stated offsets
//
// Supported dtypes are "F32" and "F64". An optional "__metadata__" object of
// string values is preserved.
class TensorContainer {
 public:
  using Entry = std::variant<TensorF, TensorD>;

  void put(const std::string& name, TensorF tensor);
  void put(const std::string& name, TensorD tensor);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Fetch with dtype conversion. Throws DataError "missing tensor <name>" or a
  // shape-mismatch error naming the tensor, expected and actual shape.
  TensorF get_f32(const std::string& name, const Shape& expected) const;
  TensorD get_f64(const std::string& name, const Shape& expected) const;

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  // Serialization is deterministic: tensors are laid out in name order and the
  // header JSON has sorted keys, padded with spaces to an 8-byte boundary.
  std::string serialize() const;
  static TensorContainer parse(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

 private:
  const Entry& find(const std::string& name) const;

  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> metadata_;
};

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace moldkit
