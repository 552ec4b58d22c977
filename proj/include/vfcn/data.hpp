#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vfcn/contour.hpp"
#include "vfcn/error.hpp"
#include "vfcn/tensor.hpp"

namespace vfcn {

/// Which ground truth becomes the label mask.
enum class Target {
    Endo,  ///< binary: inside the endocardial contour
    Epi,   ///< binary: inside the epicardial contour
    Both,  ///< K=3: 0 background, 1 myocardium ring, 2 blood pool
};

std::string_view to_string(Target target);
Target parse_target(std::string_view text);
int target_classes(Target target);

struct AugmentationConfig {
    std::vector<int> crop_dims;          ///< assigned round-robin per source image
    std::optional<double> crop_fraction; ///< dim = int(min(h, w) * fraction); used when crop_dims is empty
    std::vector<int> rotations;          ///< quarter turns from {1, 2, 3}
    bool vflip = false;
    bool hflip = false;

    /// (1 + |rotations|) * (1 + vflip + hflip)
    int variant_count() const;

    static AugmentationConfig sunnybrook();  ///< dims {100,110,120}, all rotations, both flips
    static AugmentationConfig lvsc();        ///< dim = int(min * 0.6), no rotations or flips
    static AugmentationConfig rvsc();        ///< dims {200,208,216}, all rotations, both flips
    static AugmentationConfig none();        ///< full square center crop, no variants
    static AugmentationConfig preset(std::string_view name);
};

struct Provenance {
    std::string case_id;
    std::string augmentation = "identity";
    int crop_dim = 0;
    int crop_row = 0;  ///< offset of the crop in the source image
    int crop_col = 0;
    int source_rows = 0;
    int source_cols = 0;
};

struct Sample {
    Tensor image;    ///< 1 x 1 x dim x dim, MVN-normalized
    LabelMask mask;  ///< same h, w; empty grid when unlabeled
    Spacing spacing;
    bool has_label = false;
    Provenance provenance;
};

/// One manifest row after loading: full-size image and its contours.
struct RawCase {
    std::string id;
    Image image;
    Spacing spacing;
    std::optional<Contour> endo;
    std::optional<Contour> epi;
};

/// Offset (row, col) of the dim x dim center crop; throws ContractError when
/// dim exceeds either side.
std::pair<int, int> crop_offset(int rows, int cols, int dim);

template <typename T>
Grid<T> center_crop(const Grid<T>& grid, int dim);

std::pair<Image, LabelMask> center_crop(const Image& image, const LabelMask& mask, int dim);

/// int(min(h, w) * 0.6) in exact integer arithmetic.
int lvsc_crop_dim(int h, int w);

/// Whole-image standardization: (x - mean) / (stddev + 1e-6), population stddev.
Image mvn_normalize(const Image& image);

/// Quarter turn counter-clockwise: out(r, c) = in(c, n - 1 - r). Requires a square grid.
template <typename T>
Grid<T> rot90(const Grid<T>& grid);
template <typename T>
Grid<T> vflip(const Grid<T>& grid);
template <typename T>
Grid<T> hflip(const Grid<T>& grid);

/// Every rotation x flip variant of a labeled sample, identity first.
/// Throws ContractError for non-square samples when rotations are enabled.
std::vector<Sample> augment(const Sample& sample, const AugmentationConfig& cfg);

/// Label mask for `target` at the image's full size, or nothing when a
/// needed contour is missing.
std::optional<LabelMask> label_mask(const RawCase& raw, Target target);

/// Crop (dim) + normalize one case into a sample.
Sample make_sample(const RawCase& raw, Target target, int dim);

/// Crop side for source image `index` under `cfg`; test mode always takes the first.
int choose_crop_dim(const AugmentationConfig& cfg, int rows, int cols, std::size_t index, bool train);

/// Pixel grid and spacing from a DICOM or 16-bit PGM file (detected by content).
std::pair<Image, Spacing> load_image(const std::filesystem::path& path);

struct ManifestRow {
    std::string id;
    std::filesystem::path image;
    std::optional<std::filesystem::path> contour_endo;
    std::optional<std::filesystem::path> contour_epi;
};

inline constexpr std::string_view kManifestHeader = "id,image,contour_endo,contour_epi";

/// Paths are resolved relative to the manifest's directory. Throws
/// FormatError on a bad header or row and on duplicate ids.
std::vector<ManifestRow> parse_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path);

/// Loads image + contours; contour points must lie within the image.
RawCase load_case(const ManifestRow& row);

struct DatasetConfig {
    AugmentationConfig augmentation = AugmentationConfig::none();
    Target target = Target::Endo;
    bool train = false;
    int workers = 1;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> warnings;
};

/// Manifest order is preserved regardless of worker count. In training mode
/// rows without the needed contour are skipped with a warning; in test mode
/// they become unlabeled samples.
Dataset build_dataset(const std::vector<RawCase>& cases, const DatasetConfig& cfg);
Dataset load_dataset(const std::filesystem::path& manifest, const DatasetConfig& cfg);

}  // namespace vfcn
