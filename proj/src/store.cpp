#include "collapse/store.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

namespace collapse {

static_assert(std::endian::native == std::endian::little,
              "sample store assumes a little-endian host");

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  auto p = bin_path;
  p.replace_extension(".json");
  return p;
}

void save_samples(const std::filesystem::path& bin_path, const Mat& x,
                  const nlohmann::json& extra) {
  {
    std::ofstream f(bin_path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("sample store: cannot write " + bin_path.string());
    f.write(reinterpret_cast<const char*>(x.data()),
            static_cast<std::streamsize>(sizeof(double) * x.size()));
    if (!f) throw std::runtime_error("sample store: short write to " + bin_path.string());
  }
  nlohmann::json side = extra;
  side["rows"] = x.rows();
  side["cols"] = x.cols();
  side["dtype"] = "float64";
  side["layout"] = "row-major";
  side["byte_order"] = "little-endian";
  std::ofstream f(sidecar_path(bin_path), std::ios::trunc);
  if (!f)
    throw std::runtime_error("sample store: cannot write " + sidecar_path(bin_path).string());
  f << side.dump(2) << "\n";
}

nlohmann::json load_sidecar(const std::filesystem::path& bin_path) {
  std::ifstream f(sidecar_path(bin_path));
  if (!f)
    throw std::runtime_error("sample store: missing sidecar " +
                             sidecar_path(bin_path).string());
  return nlohmann::json::parse(f);
}

Mat load_samples(const std::filesystem::path& bin_path) {
  const auto side = load_sidecar(bin_path);
  if (side.at("dtype") != "float64" || side.at("layout") != "row-major" ||
      side.at("byte_order") != "little-endian")
    throw std::runtime_error("sample store: unsupported format in " +
                             sidecar_path(bin_path).string());
  const int64_t rows = side.at("rows").get<int64_t>();
  const int64_t cols = side.at("cols").get<int64_t>();
  if (rows < 0 || cols <= 0)
    throw std::runtime_error("sample store: bad shape in sidecar");

  std::ifstream f(bin_path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("sample store: cannot read " + bin_path.string());
  const auto bytes = static_cast<int64_t>(f.tellg());
  if (bytes != rows * cols * static_cast<int64_t>(sizeof(double)))
    throw std::runtime_error("sample store: payload size mismatch for " + bin_path.string());
  f.seekg(0);
  Mat x(rows, cols);
  f.read(reinterpret_cast<char*>(x.data()), bytes);
  if (!f) throw std::runtime_error("sample store: short read from " + bin_path.string());
  return x;
}

}  // namespace collapse
