#pragma once

#include <filesystem>

#include "fwi/grid.hpp"
#include "fwi/model.hpp"

namespace fwi {

/// Grid file ("FWIG"): magic, u32 nz, u32 nx, u32 reserved=0, f64 dx,
/// nz*nx f32 depth-major. All little-endian.
struct GridFile {
  Grid2 values;
  double dx = 1.0;
};

void save_grid(const std::filesystem::path& path, const Grid2& grid, double dx);
GridFile load_grid(const std::filesystem::path& path);

/// Shot file ("FWIS"): magic, u32 n_r, u32 n_T, f64 dt, n_r*n_T f32 trace-major.
void save_shot(const std::filesystem::path& path, const ShotRecord& shot);
ShotRecord load_shot(const std::filesystem::path& path, int source_index = 0);

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace fwi
