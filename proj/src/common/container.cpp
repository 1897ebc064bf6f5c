#include "common/container.hpp"

#include "common/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace duet {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

const Blob* Container::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const Blob& Container::at(const std::string& name) const {
  const Blob* b = find(name);
  if (b == nullptr) fail(ErrorCode::kFormat, "container: missing blob '" + name + "'");
  return *b;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  if (c.magic.size() != 4) fail(ErrorCode::kInvalidArgument, "container magic must be 4 bytes");
  nlohmann::json header = c.header;
  nlohmann::json blobs = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& b : c.blobs) {
    const auto expect = std::accumulate(b.shape.begin(), b.shape.end(), std::int64_t{1}, std::multiplies<>());
    if (expect != static_cast<std::int64_t>(b.data.size())) {
      fail(ErrorCode::kInvalidArgument, "container: blob '" + b.name + "' shape does not match data size");
    }
    blobs.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}});
    offset += b.data.size() * sizeof(float);
  }
  header["blobs"] = blobs;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(c.magic.data(), 4);
  const std::uint32_t version = kContainerVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t hlen = text.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : c.blobs) {
    out.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(float)));
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path, const std::string& expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open: " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in) fail(ErrorCode::kFormat, "truncated container preamble: " + path.string());
  Container c;
  c.magic.assign(magic.begin(), magic.end());
  if (c.magic != expected_magic) {
    fail(ErrorCode::kFormat, "bad magic in " + path.string() + ": expected " + expected_magic + ", got " + c.magic);
  }
  if (version != kContainerVersion) fail(ErrorCode::kFormat, "unsupported container version " + std::to_string(version));
  if (hlen > (1ull << 30)) fail(ErrorCode::kFormat, "implausible header length");
  std::string text(hlen, '\0');
  in.read(text.data(), static_cast<std::streamsize>(hlen));
  if (!in) fail(ErrorCode::kFormat, "truncated header: " + path.string());
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("container header is not valid JSON: ") + e.what());
  }
  const auto data_start = static_cast<std::streamoff>(16 + hlen);
  for (const auto& entry : c.header.at("blobs")) {
    Blob b;
    b.name = entry.at("name").get<std::string>();
    b.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto count = std::accumulate(b.shape.begin(), b.shape.end(), std::int64_t{1}, std::multiplies<>());
    if (count < 0) fail(ErrorCode::kFormat, "negative blob shape");
    b.data.resize(static_cast<std::size_t>(count));
    in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) fail(ErrorCode::kFormat, "truncated blob '" + b.name + "' in " + path.string());
    c.blobs.push_back(std::move(b));
  }
  c.header.erase("blobs");
  return c;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace duet
