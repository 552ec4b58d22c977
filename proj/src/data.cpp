#include "vfcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include "vfcn/dicom.hpp"
#include "vfcn/ops.hpp"
#include "vfcn/pgm.hpp"

namespace vfcn {

std::string_view to_string(Target target)
{
    switch (target) {
    case Target::Endo: return "endo";
    case Target::Epi: return "epi";
    case Target::Both: return "both";
    }
    return "?";
}

Target parse_target(std::string_view text)
{
    if (text == "endo")
        return Target::Endo;
    if (text == "epi")
        return Target::Epi;
    if (text == "both")
        return Target::Both;
    throw ContractError("unknown structure '" + std::string(text) + "' (expected endo, epi or both)");
}

int target_classes(Target target)
{
    return target == Target::Both ? 3 : 2;
}

int AugmentationConfig::variant_count() const
{
    return (1 + static_cast<int>(rotations.size())) * (1 + int(vflip) + int(hflip));
}

AugmentationConfig AugmentationConfig::sunnybrook()
{
    return {{100, 110, 120}, std::nullopt, {1, 2, 3}, true, true};
}

AugmentationConfig AugmentationConfig::lvsc()
{
    return {{}, 0.6, {}, false, false};
}

AugmentationConfig AugmentationConfig::rvsc()
{
    return {{200, 208, 216}, std::nullopt, {1, 2, 3}, true, true};
}

AugmentationConfig AugmentationConfig::none()
{
    return {};
}

AugmentationConfig AugmentationConfig::preset(std::string_view name)
{
    if (name == "sunnybrook")
        return sunnybrook();
    if (name == "lvsc")
        return lvsc();
    if (name == "rvsc")
        return rvsc();
    if (name == "none")
        return none();
    throw ContractError("unknown augmentation preset '" + std::string(name) +
                        "' (expected sunnybrook, lvsc, rvsc or none)");
}

std::pair<int, int> crop_offset(int rows, int cols, int dim)
{
    if (dim < 1 || dim > rows || dim > cols)
        throw ContractError("crop dim " + std::to_string(dim) + " does not fit a " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " image");
    return {(rows - dim) / 2, (cols - dim) / 2};
}

template <typename T>
Grid<T> center_crop(const Grid<T>& grid, int dim)
{
    const auto [r0, c0] = crop_offset(grid.rows, grid.cols, dim);
    Grid<T> out(dim, dim);
    for (int r = 0; r < dim; ++r)
        std::copy_n(&grid(r0 + r, c0), dim, &out(r, 0));
    return out;
}

std::pair<Image, LabelMask> center_crop(const Image& image, const LabelMask& mask, int dim)
{
    if (!mask.same_shape(LabelMask(image.rows, image.cols)))
        throw ContractError("center_crop: image and mask sizes differ");
    return {center_crop(image, dim), center_crop(mask, dim)};
}

int lvsc_crop_dim(int h, int w)
{
    if (h < 1 || w < 1)
        throw ContractError("lvsc_crop_dim: sides must be positive");
    return std::min(h, w) * 6 / 10;
}

Image mvn_normalize(const Image& image)
{
    if (image.size() < 2)
        throw ContractError("mvn_normalize: need at least 2 pixels");
    double mean = 0;
    for (float v : image.data)
        mean += v;
    mean /= static_cast<double>(image.size());
    double var = 0;
    for (float v : image.data)
        var += (v - mean) * (v - mean);
    var /= static_cast<double>(image.size());
    const double denom = std::sqrt(var) + ops::kMvnEpsilon;
    Image out(image.rows, image.cols);
    for (std::size_t i = 0; i < image.size(); ++i)
        out.data[i] = static_cast<float>((image.data[i] - mean) / denom);
    return out;
}

template <typename T>
Grid<T> rot90(const Grid<T>& grid)
{
    if (grid.rows != grid.cols)
        throw ContractError("rot90: grid must be square");
    const int n = grid.rows;
    Grid<T> out(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            out(r, c) = grid(c, n - 1 - r);
    return out;
}

template <typename T>
Grid<T> vflip(const Grid<T>& grid)
{
    Grid<T> out(grid.rows, grid.cols);
    for (int r = 0; r < grid.rows; ++r)
        std::copy_n(&grid(grid.rows - 1 - r, 0), grid.cols, &out(r, 0));
    return out;
}

template <typename T>
Grid<T> hflip(const Grid<T>& grid)
{
    Grid<T> out(grid.rows, grid.cols);
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c)
            out(r, c) = grid(r, grid.cols - 1 - c);
    return out;
}

namespace {

Image tensor_to_image(const Tensor& t)
{
    const Shape& s = t.shape();
    Image img(static_cast<int>(s.h), static_cast<int>(s.w));
    std::copy(t.values().begin(), t.values().end(), img.data.begin());
    return img;
}

Tensor image_to_tensor(const Image& img)
{
    return Tensor(Shape{1, 1, static_cast<std::size_t>(img.rows), static_cast<std::size_t>(img.cols)}, img.data);
}

template <typename T>
Grid<T> rotate(Grid<T> g, int quarter_turns)
{
    for (int i = 0; i < quarter_turns; ++i)
        g = rot90(g);
    return g;
}

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

void check_contour_bounds(const Contour& contour, const Image& image, const std::string& what)
{
    if (contour.size() < 3)
        throw FormatError(what + ": contour needs at least 3 points");
    for (const Point& p : contour)
        if (p.x < -0.5 || p.x > image.cols - 0.5 || p.y < -0.5 || p.y > image.rows - 0.5)
            throw FormatError(what + ": contour point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                              ") lies outside the " + std::to_string(image.rows) + "x" +
                              std::to_string(image.cols) + " image");
}

}  // namespace

std::vector<Sample> augment(const Sample& sample, const AugmentationConfig& cfg)
{
    for (int q : cfg.rotations)
        if (q < 1 || q > 3)
            throw ContractError("augment: rotations must be quarter turns in 1..3");
    const Image base = tensor_to_image(sample.image);
    if (!cfg.rotations.empty() && base.rows != base.cols)
        throw ContractError("augment: rotations need a square sample, got " + std::to_string(base.rows) + "x" +
                            std::to_string(base.cols));
    if (sample.has_label && !sample.mask.same_shape(LabelMask(base.rows, base.cols)))
        throw ContractError("augment: image and mask sizes differ");

    std::vector<int> turns{0};
    turns.insert(turns.end(), cfg.rotations.begin(), cfg.rotations.end());
    enum class Flip { None, Vertical, Horizontal };
    std::vector<Flip> flips{Flip::None};
    if (cfg.vflip)
        flips.push_back(Flip::Vertical);
    if (cfg.hflip)
        flips.push_back(Flip::Horizontal);

    std::vector<Sample> out;
    out.reserve(turns.size() * flips.size());
    for (int q : turns) {
        const Image rimg = rotate(base, q);
        const LabelMask rmask = sample.has_label ? rotate(sample.mask, q) : sample.mask;
        for (Flip f : flips) {
            Sample s;
            s.has_label = sample.has_label;
            s.spacing = q % 2 == 1 ? Spacing{sample.spacing.col_mm, sample.spacing.row_mm} : sample.spacing;
            s.provenance = sample.provenance;
            std::string tag = q == 0 ? "identity" : "rot" + std::to_string(90 * q);
            switch (f) {
            case Flip::None:
                s.image = image_to_tensor(rimg);
                s.mask = rmask;
                break;
            case Flip::Vertical:
                s.image = image_to_tensor(vflip(rimg));
                s.mask = s.has_label ? vflip(rmask) : rmask;
                tag += "+vflip";
                break;
            case Flip::Horizontal:
                s.image = image_to_tensor(hflip(rimg));
                s.mask = s.has_label ? hflip(rmask) : rmask;
                tag += "+hflip";
                break;
            }
            s.provenance.augmentation = tag;
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::optional<LabelMask> label_mask(const RawCase& raw, Target target)
{
    const int rows = raw.image.rows;
    const int cols = raw.image.cols;
    switch (target) {
    case Target::Endo:
        if (!raw.endo)
            return std::nullopt;
        return rasterize_contour(*raw.endo, rows, cols);
    case Target::Epi:
        if (!raw.epi)
            return std::nullopt;
        return rasterize_contour(*raw.epi, rows, cols);
    case Target::Both: {
        if (!raw.endo || !raw.epi)
            return std::nullopt;
        const LabelMask endo = rasterize_contour(*raw.endo, rows, cols);
        LabelMask out = rasterize_contour(*raw.epi, rows, cols);
        for (std::size_t i = 0; i < out.size(); ++i)
            if (endo.data[i])
                out.data[i] = 2;
        return out;
    }
    }
    return std::nullopt;
}

Sample make_sample(const RawCase& raw, Target target, int dim)
{
    const auto [r0, c0] = crop_offset(raw.image.rows, raw.image.cols, dim);
    Sample s;
    s.image = image_to_tensor(mvn_normalize(center_crop(raw.image, dim)));
    if (auto mask = label_mask(raw, target)) {
        s.mask = center_crop(*mask, dim);
        s.has_label = true;
    }
    s.spacing = raw.spacing;
    s.provenance = {raw.id, "identity", dim, r0, c0, raw.image.rows, raw.image.cols};
    return s;
}

int choose_crop_dim(const AugmentationConfig& cfg, int rows, int cols, std::size_t index, bool train)
{
    if (!cfg.crop_dims.empty())
        return cfg.crop_dims[train ? index % cfg.crop_dims.size() : 0];
    if (cfg.crop_fraction) {
        // 0.6 is not exact in binary; the slack keeps int(100 * 0.6) at 60.
        return static_cast<int>(std::floor(std::min(rows, cols) * *cfg.crop_fraction + 1e-9));
    }
    return std::min(rows, cols);
}

std::pair<Image, Spacing> load_image(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw FormatError("cannot open image " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (looks_like_pgm(bytes)) {
        const PgmImage pgm = parse_pgm(bytes);
        Image img(pgm.rows, pgm.cols);
        std::copy(pgm.pixels.begin(), pgm.pixels.end(), img.data.begin());
        return {std::move(img), pgm.spacing.value_or(Spacing{})};
    }
    const DicomImage dcm = parse_dicom(bytes, path.string());
    Image img(dcm.rows, dcm.cols);
    std::copy(dcm.pixels.begin(), dcm.pixels.end(), img.data.begin());
    return {std::move(img), dcm.spacing};
}

std::vector<ManifestRow> parse_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open manifest " + path.string());
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    std::string line;
    if (!std::getline(in, line) || trim(line) != kManifestHeader)
        throw FormatError("manifest " + path.string() + ": header must be '" + std::string(kManifestHeader) + "'");
    std::vector<ManifestRow> rows;
    std::set<std::string> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::istringstream fields(line);
        std::string cell;
        while (std::getline(fields, cell, ','))
            cells.push_back(trim(cell));
        if (line.back() == ',')
            cells.emplace_back();
        if (cells.size() != 4)
            throw FormatError("manifest line " + std::to_string(line_no) + ": expected 4 fields, got " +
                              std::to_string(cells.size()));
        if (cells[0].empty() || cells[1].empty())
            throw FormatError("manifest line " + std::to_string(line_no) + ": id and image are required");
        if (!seen.insert(cells[0]).second)
            throw FormatError("manifest line " + std::to_string(line_no) + ": duplicate id '" + cells[0] + "'");
        ManifestRow row{cells[0], resolve(cells[1]), std::nullopt, std::nullopt};
        if (!cells[2].empty())
            row.contour_endo = resolve(cells[2]);
        if (!cells[3].empty())
            row.contour_epi = resolve(cells[3]);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw FormatError("cannot write manifest " + path.string());
    const std::filesystem::path base = path.parent_path();
    auto rel = [&](const std::filesystem::path& p) {
        return p.is_relative() ? p.generic_string() : p.lexically_relative(base).generic_string();
    };
    out << kManifestHeader << '\n';
    for (const auto& r : rows) {
        out << r.id << ',' << rel(r.image) << ',' << (r.contour_endo ? rel(*r.contour_endo) : "") << ','
            << (r.contour_epi ? rel(*r.contour_epi) : "") << '\n';
    }
}

RawCase load_case(const ManifestRow& row)
{
    RawCase raw;
    raw.id = row.id;
    std::tie(raw.image, raw.spacing) = load_image(row.image);
    if (row.contour_endo) {
        raw.endo = read_contour(*row.contour_endo);
        check_contour_bounds(*raw.endo, raw.image, row.id + " endo");
    }
    if (row.contour_epi) {
        raw.epi = read_contour(*row.contour_epi);
        check_contour_bounds(*raw.epi, raw.image, row.id + " epi");
    }
    return raw;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn)
{
    const std::size_t threads = std::clamp<std::size_t>(workers < 1 ? 1 : workers, 1, std::max<std::size_t>(n, 1));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

}  // namespace

Dataset build_dataset(const std::vector<RawCase>& cases, const DatasetConfig& cfg)
{
    Dataset ds;
    if (cases.empty()) {
        ds.warnings.push_back("dataset is empty");
        return ds;
    }
    std::vector<std::vector<Sample>> per_case(cases.size());
    std::vector<std::string> skipped(cases.size());
    parallel_for(cases.size(), cfg.workers, [&](std::size_t i) {
        const RawCase& raw = cases[i];
        const int dim = choose_crop_dim(cfg.augmentation, raw.image.rows, raw.image.cols, i, cfg.train);
        Sample s = make_sample(raw, cfg.target, dim);
        if (!cfg.train) {
            per_case[i].push_back(std::move(s));
            return;
        }
        if (!s.has_label) {
            skipped[i] = raw.id;
            return;
        }
        per_case[i] = augment(s, cfg.augmentation);
    });
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (!skipped[i].empty())
            ds.warnings.push_back("skipping '" + skipped[i] + "': no " + std::string(to_string(cfg.target)) +
                                  " ground truth");
        for (auto& s : per_case[i])
            ds.samples.push_back(std::move(s));
    }
    return ds;
}

Dataset load_dataset(const std::filesystem::path& manifest, const DatasetConfig& cfg)
{
    const auto rows = parse_manifest(manifest);
    std::vector<RawCase> cases(rows.size());
    parallel_for(rows.size(), cfg.workers, [&](std::size_t i) { cases[i] = load_case(rows[i]); });
    return build_dataset(cases, cfg);
}

template Grid<float> center_crop(const Grid<float>&, int);
template Grid<std::uint8_t> center_crop(const Grid<std::uint8_t>&, int);
template Grid<float> rot90(const Grid<float>&);
template Grid<std::uint8_t> rot90(const Grid<std::uint8_t>&);
template Grid<float> vflip(const Grid<float>&);
template Grid<std::uint8_t> vflip(const Grid<std::uint8_t>&);
template Grid<float> hflip(const Grid<float>&);
template Grid<std::uint8_t> hflip(const Grid<std::uint8_t>&);

}  // namespace vfcn
