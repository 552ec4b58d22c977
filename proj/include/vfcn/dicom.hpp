#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vfcn/contour.hpp"
#include "vfcn/error.hpp"

namespace vfcn {

/// Raised for transfer syntaxes outside Explicit/Implicit VR Little Endian.
class UnsupportedSyntaxError : public FormatError {
public:
    using FormatError::FormatError;
};

inline constexpr std::string_view kExplicitVrLittleEndian = "1.2.840.10008.1.2.1";
inline constexpr std::string_view kImplicitVrLittleEndian = "1.2.840.10008.1.2";

struct DicomImage {
    int rows = 0;
    int cols = 0;
    Spacing spacing;            ///< from PixelSpacing "row\col"
    int bits_allocated = 16;    ///< 8 or 16
    bool is_signed = false;     ///< PixelRepresentation == 1
    std::vector<std::int32_t> pixels;  ///< row-major, rows*cols samples
    std::string transfer_syntax;
    std::string source;
};

/// Single-frame, single-sample uncompressed images only. Accepts a Part-10
/// file (128-byte preamble + "DICM" + group-2 meta) or a bare dataset, whose
/// VR encoding is detected by probing the first element.
DicomImage parse_dicom(std::span<const std::uint8_t> bytes, std::string source = {});
DicomImage read_dicom(const std::filesystem::path& path);

}  // namespace vfcn
