#pragma once

// Container format shared by the dataset cache and model checkpoints:
// a UTF-8 JSON header, a "\n\0" separator, then a raw little-endian payload.
// The header declares the payload layout so short reads are detectable.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "relex/errors.hpp"

namespace relex {
namespace binio {

static_assert(std::endian::native == std::endian::little,
              "payloads are little-endian; add byte swapping before porting");

inline void append_f32(std::string& buf, const double* v, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    float f = static_cast<float>(v[i]);
    char bytes[4];
    std::memcpy(bytes, &f, 4);
    buf.append(bytes, 4);
  }
}

inline void append_i32(std::string& buf, const std::int32_t* v, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    char bytes[4];
    std::memcpy(bytes, &v[i], 4);
    buf.append(bytes, 4);
  }
}

inline void read_f32(const std::string& buf, size_t offset, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, buf.data() + offset + i * 4, 4);
    out[i] = static_cast<double>(f);
  }
}

inline void read_i32(const std::string& buf, size_t offset, std::int32_t* out, size_t n) {
  std::memcpy(out, buf.data() + offset, n * 4);
}

inline void write_file(const std::string& path, const nlohmann::json& header,
                       const std::string& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  std::string head = header.dump();
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.put('\n');
  out.put('\0');
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("write failed: " + path);
}

struct FileContent {
  nlohmann::json header;
  std::string payload;
};

inline FileContent read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  size_t sep = raw.find('\0');
  if (sep == std::string::npos || sep == 0 || raw[sep - 1] != '\n') {
    throw DataError("missing header separator: " + path);
  }
  FileContent fc;
  try {
    fc.header = nlohmann::json::parse(raw.substr(0, sep - 1));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad header in " + path + ": " + e.what());
  }
  fc.payload = raw.substr(sep + 1);
  return fc;
}

}  // namespace binio

// FNV-1a 64-bit, used to fingerprint vocabularies and relation schemas.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace relex
