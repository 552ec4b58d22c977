#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfcn/contour.hpp"

namespace vfcn {

/// Binary graymap (P5). Samples wider than a byte are big-endian. Pixel
/// spacing travels in an optional `# PixelSpacing row\col` header comment.
struct PgmImage {
    int rows = 0;
    int cols = 0;
    int maxval = 65535;
    std::vector<std::uint16_t> pixels;  ///< row-major
    std::optional<Spacing> spacing;
};

PgmImage parse_pgm(std::span<const std::uint8_t> bytes);
PgmImage read_pgm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const PgmImage& image);
void write_pgm(const PgmImage& image, const std::filesystem::path& path);

/// True when `bytes` start with the P5 magic.
bool looks_like_pgm(std::span<const std::uint8_t> bytes);

}  // namespace vfcn
