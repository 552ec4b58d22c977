#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "vfcn/tensor.hpp"

namespace vfcn {

/// Image-coordinate point: x along columns, y along rows, pixel centers at integers.
struct Point {
    double x = 0;
    double y = 0;
    bool operator==(const Point&) const = default;
};

/// Ordered boundary points of one object; implicitly closed.
using Contour = std::vector<Point>;

/// Physical size of a pixel in millimeters.
struct Spacing {
    double row_mm = 1.0;
    double col_mm = 1.0;
    bool operator==(const Spacing&) const = default;
};

/// Offset used to break ties for pixel centers lying exactly on an edge.
inline constexpr double kRasterNudge = 0x1.0p-20;

/// Pixel (r, c) is set iff (c + nudge, r + nudge) lies inside the closed
/// polygon under the even-odd rule. Throws ContractError for < 3 points.
LabelMask rasterize_contour(const Contour& contour, int rows, int cols);

Contour translate(const Contour& contour, double dx, double dy);

/// One `x y` pair per line; blank lines and `#` comments ignored.
Contour parse_contour(std::string_view text);
Contour read_contour(const std::filesystem::path& path);
void write_contour(const Contour& contour, const std::filesystem::path& path);

}  // namespace vfcn
