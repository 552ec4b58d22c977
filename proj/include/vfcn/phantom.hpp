#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vfcn/data.hpp"

namespace vfcn {

enum class PhantomFamily {
    A,  ///< concentric ellipses, LV-like
    B,  ///< crescent blood pool wrapped in an ellipse, RV-like
};

std::string_view to_string(PhantomFamily family);
PhantomFamily parse_phantom_family(std::string_view text);

struct PhantomSpec {
    PhantomFamily family = PhantomFamily::A;
    int size = 64;
    int count = 32;
    std::uint64_t seed = 1;
    double center_jitter = 4.0;      ///< max offset of the center from the image center, px
    double endo_radius_min = 8.0;    ///< endocardial semi-axes drawn from [min, max]
    double endo_radius_max = 14.0;
    double thickness_min = 3.0;      ///< ring thickness drawn from [min, max]
    double thickness_max = 6.0;
    double background = 200.0;
    double myocardium = 600.0;
    double blood_pool = 1200.0;
    double noise_sd = 60.0;
    Spacing spacing{1.25, 1.25};
};

struct PhantomCase {
    RawCase raw;  ///< image with its endo and epi contours
    LabelMask endo_mask;
    LabelMask epi_mask;
};

/// Throws ContractError unless every structure the spec can draw stays
/// strictly inside the image.
void validate(const PhantomSpec& spec);

/// Deterministic for a given spec.
std::vector<PhantomCase> generate(const PhantomSpec& spec);

/// Closed polyline of `points` vertices on an axis-aligned ellipse.
Contour ellipse_contour(double cx, double cy, double rx, double ry, int points = 64);

/// Writes `<id>.pgm`, `<id>_endo.txt`, `<id>_epi.txt` and `manifest.csv`
/// under `dir`; returns the manifest path.
std::filesystem::path write_phantoms(const std::vector<PhantomCase>& cases, const std::filesystem::path& dir);

}  // namespace vfcn
