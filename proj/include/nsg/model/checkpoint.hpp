#ifndef NSG_MODEL_CHECKPOINT_HPP
#define NSG_MODEL_CHECKPOINT_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsg/core/tensor.hpp"

namespace nsg {

/// Single-file archive of named tensors plus a JSON metadata header.
/// Layout: 8-byte magic, little-endian u64 header length, the UTF-8 JSON
/// header, then the raw little-endian scalar blobs back to back in header
/// index order. The header records name, shape, element count and blob
/// offset per tensor, so the file is self-describing.
inline constexpr char kArchiveMagic[8] = {'N', 'S', 'G', 'A', 'R', 'C', 'H', '1'};

template <typename S>
const char* scalar_tag() {
  if constexpr (sizeof(S) == 4)
    return "f32";
  else
    return "f64";
}

template <typename S>
struct Archive {
  nlohmann::json meta;
  std::map<std::string, Tensor<S>> tensors;
};

template <typename S>
void save_archive(const std::filesystem::path& path,
                  std::vector<std::pair<std::string, const Tensor<S>*>> tensors,
                  const nlohmann::json& meta) {
  std::sort(tensors.begin(), tensors.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (size_t i = 1; i < tensors.size(); ++i)
    if (tensors[i].first == tensors[i - 1].first)
      throw DataError("archive " + path.string() + ": duplicate tensor name " + tensors[i].first);

  nlohmann::json header;
  header["version"] = 1;
  header["scalar"] = scalar_tag<S>();
  header["meta"] = meta;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t->shape;
    e["count"] = t->numel();
    e["offset"] = offset;
    index.push_back(std::move(e));
    offset += static_cast<std::uint64_t>(t->numel()) * sizeof(S);
  }
  header["tensors"] = std::move(index);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kArchiveMagic, sizeof(kArchiveMagic));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t->data.data()),
              static_cast<std::streamsize>(static_cast<std::uint64_t>(t->numel()) * sizeof(S)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

template <typename S>
Archive<S> load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kArchiveMagic))
    throw DataError(path.string() + " is not a parameter archive");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len == 0 || header_len > (1u << 30))
    throw DataError(path.string() + ": corrupt header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad header JSON: " + e.what());
  }
  if (header.value("version", 0) != 1)
    throw DataError(path.string() + ": unsupported archive version");
  const std::string tag = header.value("scalar", "");
  if (tag != scalar_tag<S>())
    throw DataError(path.string() + ": archive holds " + tag + " tensors, expected " +
                    scalar_tag<S>());

  Archive<S> a;
  a.meta = header.value("meta", nlohmann::json::object());
  const std::streampos blob_start = in.tellg();
  for (const auto& e : header.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    const std::uint64_t count = e.at("count").get<std::uint64_t>();
    const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
    Tensor<S> t(shape);
    if (static_cast<std::uint64_t>(t.numel()) != count)
      throw DataError(path.string() + ": count/shape mismatch for " + name);
    in.seekg(blob_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(count * sizeof(S)));
    if (!in) throw DataError(path.string() + ": truncated blob for " + name);
    a.tensors.emplace(name, std::move(t));
  }
  return a;
}

}  // namespace nsg

#endif
