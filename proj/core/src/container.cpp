#include "moldkit/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace moldkit {

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

using json = nlohmann::json;

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("failed to open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("failed to read: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("failed to open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed to write: " + path.string());
}

void TensorContainer::put(const std::string& name, TensorF tensor) {
  entries_.insert_or_assign(name, std::move(tensor));
}

void TensorContainer::put(const std::string& name, TensorD tensor) {
  entries_.insert_or_assign(name, std::move(tensor));
}

const TensorContainer::Entry& TensorContainer::find(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("missing tensor " + name);
  return it->second;
}

namespace {

template <typename Out>
Tensor<Out> convert(const TensorContainer::Entry& entry, const std::string& name,
                    const Shape& expected) {
  return std::visit(
      [&](const auto& t) -> Tensor<Out> {
        if (t.shape() != expected) {
          throw DataError("shape mismatch for tensor " + name + ": expected " +
                          shape_string(expected) + ", got " + shape_string(t.shape()));
        }
        return t.template cast<Out>();
      },
      entry);
}

template <typename T>
std::string_view raw_bytes(const Tensor<T>& t) {
  return {reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T)};
}

}  // namespace

TensorF TensorContainer::get_f32(const std::string& name, const Shape& expected) const {
  return convert<float>(find(name), name, expected);
}

TensorD TensorContainer::get_f64(const std::string& name, const Shape& expected) const {
  return convert<double>(find(name), name, expected);
}

std::string TensorContainer::serialize() const {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, entry] : entries_) {
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          const std::uint64_t bytes = t.size() * sizeof(T);
          header[name] = {{"dtype", std::is_same_v<T, float> ? "F32" : "F64"},
                          {"shape", t.shape()},
                          {"data_offsets", {offset, offset + bytes}}};
          offset += bytes;
        },
        entry);
  }
  if (!metadata_.empty()) header["__metadata__"] = metadata_;

  std::string text = header.dump();
  while (text.size() % 8 != 0) text.push_back(' ');

  std::string out;
  out.reserve(8 + text.size() + offset);
  const std::uint64_t n = text.size();
  out.append(reinterpret_cast<const char*>(&n), sizeof n);
  out += text;
  for (const auto& [name, entry] : entries_) {
    std::visit([&](const auto& t) { out += raw_bytes(t); }, entry);
  }
  return out;
}

TensorContainer TensorContainer::parse(std::string_view bytes) {
  if (bytes.size() < 8) throw DataError("tensor container truncated: missing header length");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), sizeof n);
  if (n > bytes.size() - 8) throw DataError("tensor container truncated: header exceeds file size");

  json header;
  try {
    header = json::parse(bytes.substr(8, n));
  } catch (const json::exception& e) {
    throw DataError(std::string("tensor container header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw DataError("tensor container header must be a JSON object");

  const std::string_view payload = bytes.substr(8 + n);
  TensorContainer out;
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") {
      for (const auto& [key, value] : info.items()) {
        out.metadata_[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
      continue;
    }
    try {
      const auto dtype = info.at("dtype").get<std::string>();
      const auto shape = info.at("shape").get<Shape>();
      const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1]) {
        throw DataError("bad data_offsets for tensor " + name);
      }
      if (offsets[1] > payload.size()) {
        throw DataError("tensor container truncated: payload of " + name + " ends at byte " +
                        std::to_string(offsets[1]) + " but only " +
                        std::to_string(payload.size()) + " payload bytes exist");
      }
      const std::size_t elem = dtype == "F32" ? 4 : dtype == "F64" ? 8 : 0;
      if (elem == 0) throw DataError("unsupported dtype " + dtype + " for tensor " + name);
      const std::uint64_t len = offsets[1] - offsets[0];
      if (len != shape_numel(shape) * elem) {
        throw DataError("payload size of tensor " + name + " does not match shape " +
                        shape_string(shape));
      }
      const char* src = payload.data() + offsets[0];
      if (elem == 4) {
        std::vector<float> data(shape_numel(shape));
        std::memcpy(data.data(), src, len);
        out.entries_.emplace(name, TensorF(shape, std::move(data)));
      } else {
        std::vector<double> data(shape_numel(shape));
        std::memcpy(data.data(), src, len);
        out.entries_.emplace(name, TensorD(shape, std::move(data)));
      }
    } catch (const json::exception& e) {
      throw DataError("malformed header entry for tensor " + name + ": " + e.what());
    } catch (const DimensionError& e) {
      throw DataError("invalid shape for tensor " + name + ": " + e.what());
    }
  }
  return out;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  write_file_bytes(path, serialize());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
  return parse(read_file_bytes(path));
}

}  // namespace moldkit
