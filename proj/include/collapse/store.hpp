#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "collapse/gmm.hpp"

namespace collapse {

/// Binary sample store: row-major little-endian float64 payload plus a JSON
/// sidecar (same stem, .json extension) holding the shape and caller
/// metadata. Loads validate shape, dtype, layout, and payload size.
void save_samples(const std::filesystem::path& bin_path, const Mat& x,
                  const nlohmann::json& extra = nlohmann::json::object());

Mat load_samples(const std::filesystem::path& bin_path);

nlohmann::json load_sidecar(const std::filesystem::path& bin_path);

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path);

}  // namespace collapse
