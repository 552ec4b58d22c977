#include "vfcn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "vfcn/pgm.hpp"
#include "vfcn/rng.hpp"

namespace vfcn {

std::string_view to_string(PhantomFamily family)
{
    return family == PhantomFamily::A ? "A" : "B";
}

PhantomFamily parse_phantom_family(std::string_view text)
{
    if (text == "A" || text == "a")
        return PhantomFamily::A;
    if (text == "B" || text == "b")
        return PhantomFamily::B;
    throw ContractError("unknown phantom family '" + std::string(text) + "' (expected A or B)");
}

void validate(const PhantomSpec& s)
{
    auto require = [](bool ok, const std::string& msg) {
        if (!ok)
            throw ContractError("phantom spec: " + msg);
    };
    require(s.size >= 16, "size must be at least 16");
    require(s.count >= 0, "count must be non-negative");
    require(s.center_jitter >= 0, "center_jitter must be non-negative");
    require(s.endo_radius_min >= 4 && s.endo_radius_min <= s.endo_radius_max,
            "endo radius range must satisfy 4 <= min <= max");
    require(s.thickness_min >= 2 && s.thickness_min <= s.thickness_max,
            "thickness range must satisfy 2 <= min <= max");
    require(s.noise_sd >= 0, "noise_sd must be non-negative");
    require(s.spacing.row_mm > 0 && s.spacing.col_mm > 0, "spacing must be positive");
    for (double level : {s.background, s.myocardium, s.blood_pool})
        require(level >= 0 && level <= 65535, "intensity levels must fit 16 bits");
    // Outermost epicardial extent, one pixel of margin from the border.
    const double reach = s.center_jitter + s.endo_radius_max + s.thickness_max;
    require(reach + 1.0 <= (s.size - 1) / 2.0,
            "center jitter + radius + thickness (" + std::to_string(reach) + ") leaves the " +
                std::to_string(s.size) + "px image");
}

Contour ellipse_contour(double cx, double cy, double rx, double ry, int points)
{
    Contour out;
    out.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double t = 2.0 * std::numbers::pi * i / points;
        out.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
    return out;
}

namespace {

/// Blood pool between the right-hand arc of the (a, b) ellipse and a circular
/// arc through the arc's endpoints and a point at depth d*a from the center.
Contour crescent_contour(double cx, double cy, double a, double b, double depth)
{
    constexpr double kHalfAngle = 2.0;  // radians, about 115 degrees
    constexpr int kArcPoints = 32;
    const double px = a * std::cos(kHalfAngle);
    const double h = b * std::sin(kHalfAngle);
    const double qx = depth * a;
    const double xc = (qx * qx - px * px - h * h) / (2.0 * (qx - px));
    const double radius = qx - xc;
    const double alpha = std::atan2(h, px - xc);

    Contour out;
    out.reserve(2 * kArcPoints);
    for (int i = 0; i < kArcPoints; ++i) {
        const double t = -kHalfAngle + 2.0 * kHalfAngle * i / (kArcPoints - 1);
        out.push_back({cx + a * std::cos(t), cy + b * std::sin(t)});
    }
    for (int i = 0; i < kArcPoints; ++i) {
        const double t = alpha - 2.0 * alpha * (i + 1) / (kArcPoints + 1);
        const Point p{xc + radius * std::cos(t), radius * std::sin(t)};
        if ((p.x / a) * (p.x / a) + (p.y / b) * (p.y / b) >= 1.0)
            throw ContractError("phantom: crescent inner arc leaves the ellipse");
        out.push_back({cx + p.x, cy + p.y});
    }
    return out;
}

}  // namespace

std::vector<PhantomCase> generate(const PhantomSpec& spec)
{
    validate(spec);
    Rng rng(spec.seed);
    std::vector<PhantomCase> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    const double mid = (spec.size - 1) / 2.0;
    for (int i = 0; i < spec.count; ++i) {
        const double cx = mid + rng.uniform(-spec.center_jitter, spec.center_jitter);
        const double cy = mid + rng.uniform(-spec.center_jitter, spec.center_jitter);
        const double a = rng.uniform(spec.endo_radius_min, spec.endo_radius_max);
        const double b = rng.uniform(spec.endo_radius_min, spec.endo_radius_max);
        const double t = rng.uniform(spec.thickness_min, spec.thickness_max);
        const double depth = rng.uniform(0.2, 0.45);

        PhantomCase pc;
        char id[32];
        std::snprintf(id, sizeof id, "phantom_%s_%03d", spec.family == PhantomFamily::A ? "a" : "b", i);
        pc.raw.id = id;
        pc.raw.spacing = spec.spacing;
        pc.raw.epi = ellipse_contour(cx, cy, a + t, b + t);
        pc.raw.endo = spec.family == PhantomFamily::A ? ellipse_contour(cx, cy, a, b)
                                                      : crescent_contour(cx, cy, a, b, depth);
        pc.endo_mask = rasterize_contour(*pc.raw.endo, spec.size, spec.size);
        pc.epi_mask = rasterize_contour(*pc.raw.epi, spec.size, spec.size);

        Image img(spec.size, spec.size);
        for (std::size_t p = 0; p < img.size(); ++p) {
            const double level = pc.endo_mask.data[p]  ? spec.blood_pool
                                 : pc.epi_mask.data[p] ? spec.myocardium
                                                       : spec.background;
            const double v = level + spec.noise_sd * rng.normal();
            img.data[p] = static_cast<float>(std::clamp(std::round(v), 0.0, 65535.0));
        }
        pc.raw.image = std::move(img);
        out.push_back(std::move(pc));
    }
    return out;
}

std::filesystem::path write_phantoms(const std::vector<PhantomCase>& cases, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    std::vector<ManifestRow> rows;
    for (const auto& pc : cases) {
        const Image& img = pc.raw.image;
        PgmImage pgm{img.rows, img.cols, 65535, {}, pc.raw.spacing};
        pgm.pixels.reserve(img.size());
        for (float v : img.data)
            pgm.pixels.push_back(static_cast<std::uint16_t>(v));
        ManifestRow row{pc.raw.id, dir / (pc.raw.id + ".pgm"), std::nullopt, std::nullopt};
        write_pgm(pgm, row.image);
        if (pc.raw.endo) {
            row.contour_endo = dir / (pc.raw.id + "_endo.txt");
            write_contour(*pc.raw.endo, *row.contour_endo);
        }
        if (pc.raw.epi) {
            row.contour_epi = dir / (pc.raw.id + "_epi.txt");
            write_contour(*pc.raw.epi, *row.contour_epi);
        }
        rows.push_back(std::move(row));
    }
    const auto manifest = dir / "manifest.csv";
    write_manifest(rows, manifest);
    return manifest;
}

}  // namespace vfcn
