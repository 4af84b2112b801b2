#include "fwi/ad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fwi/error.hpp"
#include "fwi/grid_io.hpp"

namespace fwi::ad {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

struct Cursor {
  const std::string& bytes;
  std::size_t pos = 0;

  std::uint64_t take(int n, const char* field) {
    if (bytes.size() - pos < static_cast<std::size_t>(n)) fail(ErrorKind::io, std::string("params: truncated ") + field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += static_cast<std::size_t>(n);
    return v;
  }
};

}  // namespace

std::string encode_params(const std::vector<Array4>& arrays) {
  std::string out = "FWIP";
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const Array4& a : arrays) {
    put_u32(out, 4);
    for (std::size_t d : a.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : a.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }
  }
  return out;
}

std::vector<Array4> decode_params(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FWIP", 4) != 0) fail(ErrorKind::io, "params: bad magic");
  Cursor cur{bytes, 4};
  const auto count = cur.take(4, "count");
  std::vector<Array4> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto rank = cur.take(4, "rank");
    if (rank != 4) fail(ErrorKind::io, "params: array " + std::to_string(k) + " has rank " + std::to_string(rank));
    Array4::Dims dims{};
    std::size_t total = 1;
    for (auto& d : dims) {
      d = static_cast<std::size_t>(cur.take(4, "dims"));
      if (d == 0) fail(ErrorKind::io, "params: zero dimension in array " + std::to_string(k));
      total *= d;
    }
    if ((bytes.size() - cur.pos) / 8 < total) fail(ErrorKind::io, "params: truncated payload");
    std::vector<double> values(total);
    for (double& v : values) v = std::bit_cast<double>(cur.take(8, "payload"));
    out.emplace_back(dims, std::move(values));
  }
  if (cur.pos != bytes.size()) fail(ErrorKind::io, "params: trailing bytes");
  return out;
}

void save_params(const std::filesystem::path& path, const std::vector<Array4>& arrays) {
  write_file_atomic(path, encode_params(arrays));
}

std::vector<Array4> load_params(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::missing_input, path.string() + ": no such file");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, path.string() + ": cannot open");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_params(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace fwi::ad
