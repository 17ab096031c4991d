// SPDX-License-Identifier: Apache-2.0

#include "sam_align/zip_archive.hpp"

#include <zlib.h>

#include <cstdint>

#include <fmt/format.h>

namespace sam_align {
namespace {

constexpr std::uint32_t kEndOfCentralDir = 0x06054b50;
constexpr std::uint32_t kCentralHeader = 0x02014b50;
constexpr std::uint32_t kLocalHeader = 0x04034b50;
constexpr std::size_t kEocdSize = 22;
constexpr std::size_t kCentralSize = 46;
constexpr std::size_t kLocalSize = 30;

class Reader {
 public:
  explicit Reader(std::span<const std::byte> data) : data_(data) {}

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return static_cast<std::uint16_t>(byte(at) | (byte(at + 1) << 8));
  }

  std::uint32_t u32(std::size_t at) const {
    need(at, 4);
    return byte(at) | (byte(at + 1) << 8) | (byte(at + 2) << 16) | (static_cast<std::uint32_t>(byte(at + 3)) << 24);
  }

  std::span<const std::byte> slice(std::size_t at, std::size_t n) const {
    need(at, n);
    return data_.subspan(at, n);
  }

  std::size_t size() const { return data_.size(); }

 private:
  std::uint32_t byte(std::size_t at) const { return static_cast<std::uint32_t>(data_[at]); }

  void need(std::size_t at, std::size_t n) const {
    if (at > data_.size() || n > data_.size() - at) {
      throw NotAZip(fmt::format("truncated archive: need {} bytes at offset {}", n, at));
    }
  }

  std::span<const std::byte> data_;
};

std::vector<std::byte> inflate_raw(std::span<const std::byte> in, std::size_t expected, const std::string& name) {
  std::vector<std::byte> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw NotAZip("inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) {
    throw NotAZip(fmt::format("entry {}: corrupt deflate stream (zlib rc {})", name, rc));
  }
  return out;
}

}  // namespace

std::vector<ZipEntry> read_zip(std::span<const std::byte> archive) {
  const Reader r(archive);
  if (r.size() < kEocdSize) throw NotAZip("input shorter than an end-of-central-directory record");

  // The EOCD record sits at the end, possibly followed by a comment of up to 64 KiB.
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = r.size() > kEocdSize + 0xFFFF ? r.size() - kEocdSize - 0xFFFF : 0;
  for (std::size_t at = r.size() - kEocdSize + 1; at-- > lowest;) {
    if (r.u32(at) == kEndOfCentralDir) {
      eocd = at;
      break;
    }
  }
  if (eocd == std::string::npos) throw NotAZip("no end-of-central-directory signature");

  const std::size_t count = r.u16(eocd + 10);
  std::size_t at = r.u32(eocd + 16);
  std::vector<ZipEntry> entries;
  entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (r.u32(at) != kCentralHeader) throw NotAZip(fmt::format("bad central directory header at offset {}", at));
    const std::uint16_t flags = r.u16(at + 8);
    const std::uint16_t method = r.u16(at + 10);
    const std::uint32_t crc = r.u32(at + 16);
    const std::uint32_t csize = r.u32(at + 20);
    const std::uint32_t usize = r.u32(at + 24);
    const std::size_t name_len = r.u16(at + 28);
    const std::size_t extra_len = r.u16(at + 30);
    const std::size_t comment_len = r.u16(at + 32);
    const std::size_t local = r.u32(at + 42);
    const auto name_bytes = r.slice(at + kCentralSize, name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
    at += kCentralSize + name_len + extra_len + comment_len;

    if (flags & 0x1) throw NotAZip("entry " + name + " is encrypted");
    if (!name.empty() && name.back() == '/') continue;

    if (r.u32(local) != kLocalHeader) throw NotAZip(fmt::format("bad local header for {}", name));
    const std::size_t data_at = local + kLocalSize + r.u16(local + 26) + r.u16(local + 28);
    const auto payload = r.slice(data_at, csize);

    ZipEntry entry{std::move(name), {}};
    if (method == 0) {
      if (csize != usize) throw NotAZip("stored entry " + entry.name + " has mismatched sizes");
      entry.data.assign(payload.begin(), payload.end());
    } else if (method == 8) {
      entry.data = inflate_raw(payload, usize, entry.name);
    } else {
      throw NotAZip(fmt::format("entry {} uses unsupported compression method {}", entry.name, method));
    }
    const auto actual = crc32(0L, reinterpret_cast<const Bytef*>(entry.data.data()), static_cast<uInt>(entry.data.size()));
    if (actual != crc) throw NotAZip("CRC mismatch in entry " + entry.name);
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace sam_align
