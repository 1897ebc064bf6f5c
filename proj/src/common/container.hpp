#pragma once

// Binary container shared by duet motion files and model checkpoints:
//
//   offset 0   4 bytes   magic (ASCII, e.g. "DUET" or "DCKP")
//   offset 4   u32 LE    container version (1)
//   offset 8   u64 LE    header length H in bytes
//   offset 16  H bytes   UTF-8 JSON header
//   offset 16+H          blob data, little-endian float32, row-major
//
// The header carries a "blobs" array of {"name", "shape", "offset"} entries;
// offsets are relative to the start of the blob data. Everything else in the
// header is owned by the file kind.

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace duet {

struct Blob {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

struct Container {
  std::string magic;
  nlohmann::json header = nlohmann::json::object();
  std::vector<Blob> blobs;

  [[nodiscard]] const Blob* find(const std::string& name) const;
  [[nodiscard]] const Blob& at(const std::string& name) const;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path, const std::string& expected_magic);

/// Stable 64-bit FNV-1a hash, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace duet
