#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfcn/contour.hpp"
#include "vfcn/tensor.hpp"

// Segmentation accuracy measures. Masks are binary: any nonzero pixel is
// foreground. Contour distances are point-to-point between contour vertices,
// scaled per axis by the pixel spacing, in millimeters.

namespace vfcn::metrics {

/// 2|A∩M| / (|A|+|M|); 1 when both are empty.
double dice(const LabelMask& a, const LabelMask& m);

/// |A∩M| / |A∪M|; 1 when both are empty.
double jaccard(const LabelMask& a, const LabelMask& m);

struct ConfusionCounts {
    std::uint64_t t1 = 0;  ///< object pixels predicted as object
    std::uint64_t t0 = 0;  ///< background pixels predicted as background
    std::uint64_t f1 = 0;  ///< background pixels predicted as object
    std::uint64_t f0 = 0;  ///< object pixels predicted as background
    std::uint64_t n1() const { return t1 + f0; }
    std::uint64_t n0() const { return t0 + f1; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Quotients with a zero denominator are left empty (undefined).
struct Confusion {
    ConfusionCounts counts;
    std::optional<double> p;    ///< sensitivity T1/N1
    std::optional<double> q;    ///< specificity T0/N0
    std::optional<double> ppv;  ///< T1/(T1+F1)
    std::optional<double> npv;  ///< T0/(T0+F0)
};

Confusion confusion(const LabelMask& pred, const LabelMask& truth);

double hausdorff(const Contour& a, const Contour& m, Spacing spacing);

enum class ApdMode {
    Symmetric,  ///< mean of the two directed average distances
    Directed,   ///< average over points of `a` of the distance to `m`
};

double apd(const Contour& a, const Contour& m, Spacing spacing, ApdMode mode = ApdMode::Symmetric);

/// Good-contour threshold in millimeters (strict).
inline constexpr double kGoodContourMm = 5.0;

/// 100 * |{APD < 5}| / total; missing entries count as not good. Empty list
/// gives no value.
std::optional<double> good_contour_pct(std::span<const std::optional<double>> apds);

/// Marching-squares outline (iso-level 0.5, vertices on cell-edge midpoints)
/// of the largest 8-connected foreground component. Holes are ignored.
std::optional<Contour> mask_to_contour(const LabelMask& mask);

/// Largest 8-connected foreground component as a 0/1 mask (empty input -> empty).
LabelMask largest_component(const LabelMask& mask);

/// Pixels equal to `label` (or >= label when `at_least`) as a 0/1 mask.
LabelMask select_label(const LabelMask& labels, std::uint8_t label, bool at_least = false);

struct ImageMetrics {
    std::string id;
    std::string structure;
    double dice = 0;
    double jaccard = 0;
    std::optional<double> apd_mm;
    std::optional<double> hausdorff_mm;
    bool good_contour = false;
    bool predicted = false;  ///< false when no object was detected
    std::optional<double> p, q, ppv, npv;
};

/// All per-image measures. A missing predicted contour means no object was
/// detected: distances are undefined, the contour is not good, and overlap
/// is scored against an empty prediction.
ImageMetrics evaluate_image(std::string id, std::string structure, const LabelMask& pred, const LabelMask& truth,
                            const std::optional<Contour>& pred_contour, const Contour& truth_contour,
                            Spacing spacing, ApdMode mode = ApdMode::Symmetric);

struct Aggregate {
    std::optional<double> mean;
    std::optional<double> sd;  ///< n-1 denominator; empty for fewer than 2 values
    std::size_t count = 0;
};

Aggregate aggregate(std::span<const std::optional<double>> values);

struct StructureSummary {
    std::string structure;
    Aggregate dice, jaccard, apd_mm, hausdorff_mm, p, q, ppv, npv;
    std::optional<double> good_contour_pct;
    std::size_t images = 0;
};

struct MetricsReport {
    std::vector<ImageMetrics> images;
    std::vector<StructureSummary> summaries;  ///< one per structure, first-seen order
};

MetricsReport summarize(std::vector<ImageMetrics> images);

/// Per-image rows followed by one `summary` row per structure whose cells
/// read "mean (sd)"; undefined values are written as NA.
std::string format_report_csv(const MetricsReport& report);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace vfcn::metrics
