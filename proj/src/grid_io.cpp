#include "fwi/grid_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fwi/error.hpp"

namespace fwi {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  void expect_magic(const char* magic) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), magic, 4) != 0)
      fail(ErrorKind::io, path_ + ": bad magic (expected " + magic + ")");
    pos_ = 4;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& path() const { return path_; }

 private:
  void need(std::size_t n, const char* field) {
    if (remaining() < n) fail(ErrorKind::io, path_ + ": truncated header (" + field + ")");
  }
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

Reader open_reader(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::missing_input, path.string() + ": no such file");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, path.string() + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(bytes), path.string());
}

void read_payload(Reader& rd, Grid2& grid) {
  const std::size_t need = grid.size() * 4;
  if (rd.remaining() < need)
    fail(ErrorKind::io, rd.path() + ": truncated payload (" + std::to_string(rd.remaining() / 4) + " of " +
                            std::to_string(grid.size()) + " values)");
  if (rd.remaining() > need) fail(ErrorKind::io, rd.path() + ": trailing bytes after payload");
  for (double& v : grid.values()) {
    v = static_cast<double>(rd.f32("payload"));
    if (!std::isfinite(v)) fail(ErrorKind::io, rd.path() + ": non-finite payload value");
  }
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, path.string() + ": rename failed: " + ec.message());
}

void save_grid(const std::filesystem::path& path, const Grid2& grid, double dx) {
  require(grid.all_finite(), ErrorKind::io, path.string() + ": grid has non-finite values");
  std::string out = "FWIG";
  out.reserve(24 + grid.size() * 4);
  put_u32(out, static_cast<std::uint32_t>(grid.rows()));
  put_u32(out, static_cast<std::uint32_t>(grid.cols()));
  put_u32(out, 0);
  put_f64(out, dx);
  for (double v : grid.values()) put_f32(out, static_cast<float>(v));
  write_file_atomic(path, out);
}

GridFile load_grid(const std::filesystem::path& path) {
  Reader rd = open_reader(path);
  rd.expect_magic("FWIG");
  const std::uint32_t nz = rd.u32("nz");
  const std::uint32_t nx = rd.u32("nx");
  const std::uint32_t reserved = rd.u32("reserved");
  if (reserved != 0) fail(ErrorKind::io, path.string() + ": bad reserved field (must be 0)");
  if (nz == 0 || nx == 0) fail(ErrorKind::io, path.string() + ": bad dims (zero nz or nx)");
  const double dx = rd.f64("dx");
  if (!(dx > 0.0) || !std::isfinite(dx)) fail(ErrorKind::io, path.string() + ": bad dx");
  GridFile g{Grid2(nz, nx), dx};
  read_payload(rd, g.values);
  return g;
}

void save_shot(const std::filesystem::path& path, const ShotRecord& shot) {
  require(shot.traces.all_finite(), ErrorKind::io, path.string() + ": shot has non-finite values");
  std::string out = "FWIS";
  out.reserve(20 + shot.traces.size() * 4);
  put_u32(out, static_cast<std::uint32_t>(shot.num_receivers()));
  put_u32(out, static_cast<std::uint32_t>(shot.num_samples()));
  put_f64(out, shot.dt);
  for (double v : shot.traces.values()) put_f32(out, static_cast<float>(v));
  write_file_atomic(path, out);
}

ShotRecord load_shot(const std::filesystem::path& path, int source_index) {
  Reader rd = open_reader(path);
  rd.expect_magic("FWIS");
  const std::uint32_t nr = rd.u32("n_r");
  const std::uint32_t nt = rd.u32("n_T");
  if (nr == 0 || nt == 0) fail(ErrorKind::io, path.string() + ": bad dims (zero n_r or n_T)");
  const double dt = rd.f64("dt");
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::io, path.string() + ": bad dt");
  ShotRecord s{source_index, Grid2(nr, nt), dt};
  read_payload(rd, s.traces);
  return s;
}

}  // namespace fwi
