#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fwi/ad/array4.hpp"

namespace fwi::ad {

/// "FWIP", u32 count, then per array u32 rank (always 4), rank x u32 dims
/// and the values as f64. Little-endian throughout.
std::string encode_params(const std::vector<Array4>& arrays);
std::vector<Array4> decode_params(const std::string& bytes);

void save_params(const std::filesystem::path& path, const std::vector<Array4>& arrays);
std::vector<Array4> load_params(const std::filesystem::path& path);

}  // namespace fwi::ad
