#pragma once

// IDX (MNIST-family) unsigned-byte tensors: big-endian magic 00 00 08 <ndims>,
// ndims big-endian uint32 sizes, then the row-major payload.

#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfcl::io {

enum class IdxErrc { bad_magic, truncated, dimension_overflow, trailing_data, io_failure };

inline const char* to_string(IdxErrc e) {
  switch (e) {
    case IdxErrc::bad_magic: return "bad_magic";
    case IdxErrc::truncated: return "truncated";
    case IdxErrc::dimension_overflow: return "dimension_overflow";
    case IdxErrc::trailing_data: return "trailing_data";
    case IdxErrc::io_failure: return "io_failure";
  }
  return "unknown";
}

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrc code, const std::string& what) : std::runtime_error(std::string("idx ") + to_string(code) + ": " + what), code_(code) {}
  IdxErrc code() const noexcept { return code_; }

 private:
  IdxErrc code_;
};

inline constexpr std::uint8_t kIdxUnsignedByte = 0x08;

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  /// Elements per leading-dimension item (e.g. pixels per image).
  std::size_t item_size() const {
    std::size_t n = 1;
    for (std::size_t k = 1; k < dims.size(); ++k) n *= dims[k];
    return n;
  }

  friend bool operator==(const IdxTensor&, const IdxTensor&) = default;
};

namespace detail {
inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}
inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
}  // namespace detail

inline IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw IdxError(IdxErrc::truncated, "missing magic number");
  if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != kIdxUnsignedByte || bytes[3] == 0)
    throw IdxError(IdxErrc::bad_magic, "expected 00 00 08 <ndims>");
  const std::size_t ndims = bytes[3];
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) throw IdxError(IdxErrc::truncated, "header shorter than its dimension list");
  IdxTensor t;
  std::size_t count = 1;
  for (std::size_t k = 0; k < ndims; ++k) {
    const std::uint32_t d = detail::read_be32(bytes.data() + 4 + 4 * k);
    if (d != 0 && count > std::numeric_limits<std::size_t>::max() / d)
      throw IdxError(IdxErrc::dimension_overflow, "element count overflows");
    count *= d;
    t.dims.push_back(d);
  }
  const std::size_t payload = bytes.size() - header;
  if (payload < count)
    throw IdxError(IdxErrc::truncated,
                   "payload has " + std::to_string(payload) + " bytes, dimensions need " + std::to_string(count));
  if (payload > count) throw IdxError(IdxErrc::trailing_data, "bytes after the payload");
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

inline std::vector<std::uint8_t> serialize_idx(const IdxTensor& t) {
  if (t.dims.empty() || t.dims.size() > 255) throw IdxError(IdxErrc::bad_magic, "need 1..255 dimensions");
  if (t.element_count() != t.data.size()) throw IdxError(IdxErrc::truncated, "data size disagrees with dims");
  std::vector<std::uint8_t> out{0, 0, kIdxUnsignedByte, static_cast<std::uint8_t>(t.dims.size())};
  for (auto d : t.dims) detail::write_be32(out, d);
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

inline IdxTensor read_idx_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxErrc::io_failure, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

inline void write_idx_file(const std::string& path, const IdxTensor& t) {
  const auto bytes = serialize_idx(t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError(IdxErrc::io_failure, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace cfcl::io
