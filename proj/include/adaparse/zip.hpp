#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Minimal ZIP archive reader/writer, enough for corpus staging: stored and
// deflate members, CRC verification, no zip64, no encryption. Backed by
// zlib for the deflate stream and CRC32.

namespace adaparse::ziparc {

class ZipError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ZipEntry {
  std::string name;
  std::uint32_t crc = 0;
  std::uint32_t comp_size = 0;
  std::uint32_t uncomp_size = 0;
  std::uint16_t method = 0;  // 0 = stored, 8 = deflate
  std::uint32_t local_offset = 0;
};

namespace detail {

inline std::uint16_t rd16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t rd32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void wr16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void wr32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::string deflate_raw(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -15, 8,
                   Z_DEFAULT_STRATEGY) != Z_OK)
    throw ZipError("deflateInit2 failed");
  std::string out;
  out.resize(deflateBound(&zs, static_cast<uLong>(data.size())));
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw ZipError("deflate failed");
  out.resize(zs.total_out);
  return out;
}

inline std::string inflate_raw(std::string_view data, std::size_t expected) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw ZipError("inflateInit2 failed");
  std::string out;
  out.resize(expected);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected)
    throw ZipError("member deflate stream is corrupt");
  return out;
}

inline std::uint32_t crc_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
              static_cast<uInt>(data.size())));
}

}  // namespace detail

class ZipReader {
 public:
  explicit ZipReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ZipError("cannot open archive: " + path);
    buf_.assign(std::istreambuf_iterator<char>(in),
                std::istreambuf_iterator<char>());
    parse_central_directory(path);
  }

  const std::vector<ZipEntry>& entries() const { return entries_; }

  // Decompresses and CRC-checks one member. Throws ZipError on any
  // inconsistency; the archive as a whole stays readable.
  std::string extract(const ZipEntry& e) const {
    const auto* p = bytes();
    if (e.local_offset + 30 > buf_.size())
      throw ZipError("local header out of range: " + e.name);
    const unsigned char* lh = p + e.local_offset;
    if (detail::rd32(lh) != 0x04034b50)
      throw ZipError("bad local header signature: " + e.name);
    const std::uint16_t flags = detail::rd16(lh + 6);
    if (flags & 0x1) throw ZipError("encrypted member unsupported: " + e.name);
    const std::uint16_t name_len = detail::rd16(lh + 26);
    const std::uint16_t extra_len = detail::rd16(lh + 28);
    const std::size_t data_off = e.local_offset + 30 + name_len + extra_len;
    if (data_off + e.comp_size > buf_.size())
      throw ZipError("member data out of range: " + e.name);
    std::string_view comp(buf_.data() + data_off, e.comp_size);
    std::string out;
    if (e.method == 0) {
      if (e.comp_size != e.uncomp_size)
        throw ZipError("stored member size mismatch: " + e.name);
      out.assign(comp);
    } else if (e.method == 8) {
      out = detail::inflate_raw(comp, e.uncomp_size);
    } else {
      throw ZipError("unsupported compression method: " + e.name);
    }
    if (detail::crc_of(out) != e.crc)
      throw ZipError("CRC mismatch: " + e.name);
    return out;
  }

 private:
  const unsigned char* bytes() const {
    return reinterpret_cast<const unsigned char*>(buf_.data());
  }

  void parse_central_directory(const std::string& path) {
    if (buf_.size() < 22) throw ZipError("not a zip archive: " + path);
    // EOCD: scan backwards over at most 64 KiB of trailing comment.
    const auto* p = bytes();
    std::size_t eocd = std::string::npos;
    const std::size_t scan_end =
        buf_.size() >= 22 + 65535 ? buf_.size() - 22 - 65535 : 0;
    for (std::size_t i = buf_.size() - 22; ; --i) {
      if (detail::rd32(p + i) == 0x06054b50) {
        eocd = i;
        break;
      }
      if (i == scan_end) break;
    }
    if (eocd == std::string::npos)
      throw ZipError("end-of-central-directory not found: " + path);
    const std::uint16_t count = detail::rd16(p + eocd + 10);
    const std::uint32_t cd_off = detail::rd32(p + eocd + 16);
    std::size_t pos = cd_off;
    entries_.reserve(count);
    for (std::uint16_t k = 0; k < count; ++k) {
      if (pos + 46 > buf_.size() || detail::rd32(p + pos) != 0x02014b50)
        throw ZipError("central directory truncated: " + path);
      ZipEntry e;
      e.method = detail::rd16(p + pos + 10);
      e.crc = detail::rd32(p + pos + 16);
      e.comp_size = detail::rd32(p + pos + 20);
      e.uncomp_size = detail::rd32(p + pos + 24);
      const std::uint16_t name_len = detail::rd16(p + pos + 28);
      const std::uint16_t extra_len = detail::rd16(p + pos + 30);
      const std::uint16_t comment_len = detail::rd16(p + pos + 32);
      e.local_offset = detail::rd32(p + pos + 42);
      if (pos + 46 + name_len > buf_.size())
        throw ZipError("central directory truncated: " + path);
      e.name.assign(buf_.data() + pos + 46, name_len);
      entries_.push_back(std::move(e));
      pos += 46 + name_len + extra_len + comment_len;
    }
  }

  std::string buf_;
  std::vector<ZipEntry> entries_;
};

class ZipWriter {
 public:
  explicit ZipWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw ZipError("cannot create archive: " + path);
  }

  ZipWriter(const ZipWriter&) = delete;
  ZipWriter& operator=(const ZipWriter&) = delete;

  void add(const std::string& name, std::string_view data,
           bool compress = true) {
    ZipEntry e;
    e.name = name;
    e.crc = detail::crc_of(data);
    e.uncomp_size = static_cast<std::uint32_t>(data.size());
    e.local_offset = static_cast<std::uint32_t>(offset_);
    std::string payload;
    if (compress) {
      payload = detail::deflate_raw(data);
      e.method = 8;
    }
    // Fall back to stored when deflate does not help (tiny/random members).
    if (!compress || payload.size() >= data.size()) {
      payload.assign(data);
      e.method = 0;
    }
    e.comp_size = static_cast<std::uint32_t>(payload.size());

    std::string hdr;
    detail::wr32(hdr, 0x04034b50);
    detail::wr16(hdr, 20);  // version needed
    detail::wr16(hdr, 0);   // flags
    detail::wr16(hdr, e.method);
    detail::wr16(hdr, 0);  // mod time
    detail::wr16(hdr, 0);  // mod date
    detail::wr32(hdr, e.crc);
    detail::wr32(hdr, e.comp_size);
    detail::wr32(hdr, e.uncomp_size);
    detail::wr16(hdr, static_cast<std::uint16_t>(name.size()));
    detail::wr16(hdr, 0);  // extra
    hdr += name;
    write(hdr);
    write(payload);
    entries_.push_back(std::move(e));
  }

  // Writes the central directory. Implicit in the destructor.
  void finish() {
    if (finished_) return;
    finished_ = true;
    const std::size_t cd_start = offset_;
    for (const auto& e : entries_) {
      std::string hdr;
      detail::wr32(hdr, 0x02014b50);
      detail::wr16(hdr, 20);  // version made by
      detail::wr16(hdr, 20);  // version needed
      detail::wr16(hdr, 0);   // flags
      detail::wr16(hdr, e.method);
      detail::wr16(hdr, 0);  // time
      detail::wr16(hdr, 0);  // date
      detail::wr32(hdr, e.crc);
      detail::wr32(hdr, e.comp_size);
      detail::wr32(hdr, e.uncomp_size);
      detail::wr16(hdr, static_cast<std::uint16_t>(e.name.size()));
      detail::wr16(hdr, 0);  // extra
      detail::wr16(hdr, 0);  // comment
      detail::wr16(hdr, 0);  // disk
      detail::wr16(hdr, 0);  // internal attrs
      detail::wr32(hdr, 0);  // external attrs
      detail::wr32(hdr, e.local_offset);
      hdr += e.name;
      write(hdr);
    }
    std::string eocd;
    detail::wr32(eocd, 0x06054b50);
    detail::wr16(eocd, 0);
    detail::wr16(eocd, 0);
    detail::wr16(eocd, static_cast<std::uint16_t>(entries_.size()));
    detail::wr16(eocd, static_cast<std::uint16_t>(entries_.size()));
    detail::wr32(eocd, static_cast<std::uint32_t>(offset_ - cd_start));
    detail::wr32(eocd, static_cast<std::uint32_t>(cd_start));
    detail::wr16(eocd, 0);
    write(eocd);
    out_.flush();
  }

  ~ZipWriter() { finish(); }

 private:
  void write(std::string_view s) {
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    offset_ += s.size();
  }

  std::ofstream out_;
  std::vector<ZipEntry> entries_;
  std::size_t offset_ = 0;
  bool finished_ = false;
};

}  // namespace adaparse::ziparc
