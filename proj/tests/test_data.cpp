#include <doctest.h>

#include <fstream>
#include <numbers>
#include <set>

#include "support.hpp"
#include "vfcn/data.hpp"
#include "vfcn/dicom.hpp"
#include "vfcn/metrics.hpp"
#include "vfcn/pgm.hpp"

using namespace vfcn;
using testing::DicomFields;
using testing::synthesize_dicom;

namespace {

std::filesystem::path temp_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("vfcn_data_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image ramp(int rows, int cols)
{
    Image img(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            img(r, c) = static_cast<float>(r * cols + c);
    return img;
}

double mean_of(const Image& img)
{
    double s = 0;
    for (float v : img.data)
        s += v;
    return s / static_cast<double>(img.size());
}

double variance_of(const Image& img)
{
    const double m = mean_of(img);
    double s = 0;
    for (float v : img.data)
        s += (v - m) * (v - m);
    return s / static_cast<double>(img.size());
}

Contour square(double x0, double y0, double x1, double y1)
{
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

}  // namespace

TEST_CASE("dicom: explicit VR little endian round trip")
{
    const auto img = parse_dicom(synthesize_dicom({}), "synthetic");
    CHECK(img.rows == 2);
    CHECK(img.cols == 2);
    CHECK(img.spacing == Spacing{1.25, 1.25});
    CHECK(img.pixels == std::vector<std::int32_t>{0, 1, 2, 3});
    CHECK(img.bits_allocated == 16);
    CHECK_FALSE(img.is_signed);
    CHECK(img.transfer_syntax == kExplicitVrLittleEndian);
    CHECK(img.source == "synthetic");

    DicomFields f;
    f.rows = 3;
    f.cols = 5;
    f.spacing = "0.7\\1.4";
    f.pixels.clear();
    for (int i = 0; i < 15; ++i)
        f.pixels.push_back(i * 4001);
    const auto wide = parse_dicom(synthesize_dicom(f));
    CHECK(wide.rows == 3);
    CHECK(wide.cols == 5);
    CHECK(wide.spacing.row_mm == 0.7);
    CHECK(wide.spacing.col_mm == 1.4);
    CHECK(wide.pixels == f.pixels);
}

TEST_CASE("dicom: other encodings")
{
    DicomFields implicit;
    implicit.syntax = std::string(kImplicitVrLittleEndian);
    CHECK(parse_dicom(synthesize_dicom(implicit)).pixels == std::vector<std::int32_t>{0, 1, 2, 3});

    // Bare datasets without preamble, in both VR encodings.
    implicit.part10 = false;
    CHECK(parse_dicom(synthesize_dicom(implicit)).pixels == std::vector<std::int32_t>{0, 1, 2, 3});
    DicomFields bare;
    bare.part10 = false;
    CHECK(parse_dicom(synthesize_dicom(bare)).spacing == Spacing{1.25, 1.25});

    DicomFields seq;
    seq.with_sequence = true;
    CHECK(parse_dicom(synthesize_dicom(seq)).pixels == std::vector<std::int32_t>{0, 1, 2, 3});
    seq.syntax = std::string(kImplicitVrLittleEndian);
    CHECK(parse_dicom(synthesize_dicom(seq)).pixels == std::vector<std::int32_t>{0, 1, 2, 3});

    DicomFields sgn;
    sgn.representation = 1;
    sgn.pixels = {-5, 1, -32768, 32767};
    const auto s = parse_dicom(synthesize_dicom(sgn));
    CHECK(s.is_signed);
    CHECK(s.pixels == sgn.pixels);

    DicomFields byte;
    byte.bits = 8;
    byte.rows = 1;
    byte.cols = 3;  // odd payload, padded to even length
    byte.pixels = {0, 128, 255};
    const auto b = parse_dicom(synthesize_dicom(byte));
    CHECK(b.bits_allocated == 8);
    CHECK(b.pixels == byte.pixels);
}

TEST_CASE("dicom: rejected inputs")
{
    DicomFields jpeg;
    jpeg.syntax = "1.2.840.10008.1.2.4.50";
    CHECK_THROWS_AS(parse_dicom(synthesize_dicom(jpeg)), UnsupportedSyntaxError);
    jpeg.encapsulated = true;
    CHECK_THROWS_AS(parse_dicom(synthesize_dicom(jpeg)), UnsupportedSyntaxError);
    DicomFields encapsulated;
    encapsulated.encapsulated = true;
    CHECK_THROWS_AS(parse_dicom(synthesize_dicom(encapsulated)), UnsupportedSyntaxError);

    DicomFields mismatch;
    mismatch.rows = 3;
    CHECK_THROWS_AS(parse_dicom(synthesize_dicom(mismatch)), FormatError);

    DicomFields bad_spacing;
    bad_spacing.spacing = "1.25";
    CHECK_THROWS_AS(parse_dicom(synthesize_dicom(bad_spacing)), FormatError);
    bad_spacing.spacing = "0\\1";
    CHECK_THROWS_AS(parse_dicom(synthesize_dicom(bad_spacing)), FormatError);

    // Cutting the file before the pixel data removes a required tag.
    auto truncated = synthesize_dicom({});
    truncated.resize(truncated.size() - 8 - 12);
    CHECK_THROWS_AS(parse_dicom(truncated), FormatError);
    CHECK_THROWS_AS(parse_dicom(std::vector<std::uint8_t>{}), FormatError);
    CHECK_THROWS_AS(read_dicom("/nonexistent/file.dcm"), FormatError);
}

TEST_CASE("pgm: round trip, byte order and spacing comment")
{
    PgmImage img;
    img.rows = 2;
    img.cols = 3;
    img.pixels = {0x0102, 1, 2, 3, 40000, 65535};
    img.spacing = Spacing{0.75, 1.5};
    const auto bytes = encode_pgm(img);
    CHECK(looks_like_pgm(bytes));
    const auto back = parse_pgm(bytes);
    CHECK(back.rows == 2);
    CHECK(back.cols == 3);
    CHECK(back.pixels == img.pixels);
    REQUIRE(back.spacing.has_value());
    CHECK(*back.spacing == Spacing{0.75, 1.5});
    // Big-endian samples: the payload ends with the last pixels' high byte first.
    CHECK(bytes[bytes.size() - 12] == 0x01);
    CHECK(bytes[bytes.size() - 11] == 0x02);

    const std::string plain = "P5\n2 1\n255\n\x07\x09";
    const auto small = parse_pgm(std::span(reinterpret_cast<const std::uint8_t*>(plain.data()), plain.size()));
    CHECK(small.pixels == std::vector<std::uint16_t>{7, 9});
    CHECK_FALSE(small.spacing.has_value());

    const std::string truncated = "P5\n2 2\n65535\n\x00\x01";
    CHECK_THROWS_AS(parse_pgm(std::span(reinterpret_cast<const std::uint8_t*>(truncated.data()), truncated.size())),
                    FormatError);
    const std::string p2 = "P2\n1 1\n255\n0\n";
    CHECK_FALSE(looks_like_pgm(std::span(reinterpret_cast<const std::uint8_t*>(p2.data()), p2.size())));
}

TEST_CASE("load_image detects the file type")
{
    const auto dir = temp_dir("load_image");
    write_bytes(dir / "a.dcm", synthesize_dicom({}));
    const auto [dimg, dsp] = load_image(dir / "a.dcm");
    CHECK(dimg.rows == 2);
    CHECK(dimg(1, 0) == 2.0f);
    CHECK(dsp == Spacing{1.25, 1.25});

    PgmImage p;
    p.rows = 1;
    p.cols = 2;
    p.pixels = {5, 6};
    p.spacing = Spacing{2, 3};
    write_pgm(p, dir / "a.pgm");
    const auto [pimg, psp] = load_image(dir / "a.pgm");
    CHECK(pimg(0, 1) == 6.0f);
    CHECK(psp == Spacing{2, 3});
}

TEST_CASE("center crop")
{
    const Image img = ramp(6, 6);
    CHECK(center_crop(img, 6) == img);
    CHECK(crop_offset(6, 6, 4) == std::pair{1, 1});
    const Image c = center_crop(img, 4);
    REQUIRE(c.rows == 4);
    for (int r = 0; r < 4; ++r)
        for (int col = 0; col < 4; ++col)
            CHECK(c(r, col) == img(r + 1, col + 1));
    CHECK(crop_offset(7, 10, 4) == std::pair{1, 3});
    CHECK_THROWS_AS(center_crop(img, 7), ContractError);

    // crop(crop(x)) == crop(x) for the same dim.
    for (int rows : {20, 21, 33})
        for (int cols : {20, 25, 40})
            for (int dim : {5, 11, 20}) {
                const Image x = center_crop(ramp(rows, cols), dim);
                CHECK(center_crop(x, dim) == x);
            }

    LabelMask mask(6, 6);
    mask(2, 3) = 1;
    const auto [ci, cm] = center_crop(img, mask, 4);
    CHECK(cm(1, 2) == 1);
    CHECK(ci(1, 2) == img(2, 3));
    CHECK(metrics::dice(cm, cm) == 1.0);
    CHECK_THROWS_AS(center_crop(img, LabelMask(5, 6), 4), ContractError);
}

TEST_CASE("lvsc crop dim")
{
    CHECK(lvsc_crop_dim(256, 216) == 129);
    CHECK(lvsc_crop_dim(100, 100) == 60);
    CHECK(lvsc_crop_dim(10, 11) == 6);
    CHECK(lvsc_crop_dim(5, 1) == 0);
    CHECK(choose_crop_dim(AugmentationConfig::lvsc(), 256, 216, 0, true) == 129);
    CHECK(choose_crop_dim(AugmentationConfig::lvsc(), 10, 11, 3, false) == 6);
}

TEST_CASE("crop dims cycle per source image")
{
    const auto sb = AugmentationConfig::sunnybrook();
    CHECK(choose_crop_dim(sb, 256, 256, 0, true) == 100);
    CHECK(choose_crop_dim(sb, 256, 256, 1, true) == 110);
    CHECK(choose_crop_dim(sb, 256, 256, 2, true) == 120);
    CHECK(choose_crop_dim(sb, 256, 256, 3, true) == 100);
    CHECK(choose_crop_dim(sb, 256, 256, 2, false) == 100);
    CHECK(choose_crop_dim(AugmentationConfig::none(), 70, 64, 5, true) == 64);
    const auto rv = AugmentationConfig::rvsc();
    CHECK(choose_crop_dim(rv, 256, 256, 1, true) == 208);
}

TEST_CASE("mean-variance normalization")
{
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        Image img(40, 37);
        for (float& v : img.data)
            v = static_cast<float>(rng.below(65536));
        const Image n = mvn_normalize(img);
        CHECK(std::abs(mean_of(n)) < 1e-6);
        CHECK(std::abs(variance_of(n) - 1.0) < 1e-4);

        // Affine rescaling of the raw input changes nothing.
        const double alpha = rng.uniform(0.01, 3.0);
        const double beta = rng.uniform(-500, 500);
        Image scaled = img;
        for (float& v : scaled.data)
            v = static_cast<float>(alpha * v + beta);
        const Image ns = mvn_normalize(scaled);
        for (std::size_t i = 0; i < n.size(); ++i)
            CHECK(std::abs(ns.data[i] - n.data[i]) < 1e-4);
    }
    const Image flat(8, 8, 1234.0f);
    for (float v : mvn_normalize(flat).data)
        CHECK(v == 0.0f);
}

TEST_CASE("rasterize contours")
{
    const LabelMask sq = rasterize_contour(square(0.5, 0.5, 4.5, 4.5), 6, 6);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) {
            const bool inside = r >= 1 && r <= 4 && c >= 1 && c <= 4;
            CHECK((sq(r, c) != 0) == inside);
            CHECK((sq(r, c) != 0) == testing::point_in_polygon(square(0.5, 0.5, 4.5, 4.5), c, r));
        }

    const LabelMask outside = rasterize_contour(square(10, 10, 20, 20), 6, 6);
    CHECK(std::count(outside.data.begin(), outside.data.end(), 1) == 0);

    Contour circle;
    for (int i = 0; i < 360; ++i) {
        const double t = 2 * std::numbers::pi * i / 360;
        circle.push_back({20 + 10 * std::cos(t), 20 + 10 * std::sin(t)});
    }
    const LabelMask disk = rasterize_contour(circle, 40, 40);
    const double area = static_cast<double>(std::count(disk.data.begin(), disk.data.end(), 1));
    CHECK(std::abs(area - std::numbers::pi * 100) <= 0.05 * std::numbers::pi * 100);

    // Shifting contour and grid together shifts the mask.
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const Contour poly = testing::random_contour(7, rng, 20);
        const int dx = static_cast<int>(rng.below(8));
        const int dy = static_cast<int>(rng.below(8));
        const LabelMask a = rasterize_contour(poly, 20, 20);
        const LabelMask b = rasterize_contour(translate(poly, dx, dy), 28, 28);
        CHECK(a == rasterize_contour(poly, 20, 20));
        for (int r = 0; r < 20; ++r)
            for (int c = 0; c < 20; ++c)
                CHECK(a(r, c) == b(r + dy, c + dx));
    }
    CHECK_THROWS_AS(rasterize_contour({{0, 0}, {1, 1}}, 4, 4), ContractError);
}

TEST_CASE("contour text files")
{
    const Contour c = parse_contour("# endo\n1.5 2.25\n\n3 4\n5.125 6\n");
    CHECK(c == Contour{{1.5, 2.25}, {3, 4}, {5.125, 6}});
    CHECK_THROWS_AS(parse_contour("1.5\n"), FormatError);
    const auto dir = temp_dir("contour");
    write_contour(c, dir / "c.txt");
    CHECK(read_contour(dir / "c.txt") == c);
}

TEST_CASE("rotations and flips")
{
    LabelMask g(2, 2);
    g.data = {1, 2, 3, 4};
    // out(r, c) = in(c, n - 1 - r)
    CHECK(rot90(g).data == std::vector<std::uint8_t>{2, 4, 1, 3});
    CHECK(vflip(g).data == std::vector<std::uint8_t>{3, 4, 1, 2});
    CHECK(hflip(g).data == std::vector<std::uint8_t>{2, 1, 4, 3});

    Rng rng(8);
    const LabelMask m = testing::random_mask(9, 9, rng);
    CHECK(rot90(rot90(rot90(rot90(m)))) == m);
    CHECK(vflip(vflip(m)) == m);
    CHECK(hflip(hflip(m)) == m);
    CHECK(rot90(rot90(m)) == vflip(hflip(m)));
    CHECK_THROWS_AS(rot90(LabelMask(2, 3)), ContractError);
}

TEST_CASE("augmentation variants track a marker pixel")
{
    CHECK(AugmentationConfig::sunnybrook().variant_count() == 12);
    CHECK(AugmentationConfig::rvsc().variant_count() == 12);
    CHECK(AugmentationConfig::lvsc().variant_count() == 1);
    CHECK(AugmentationConfig::none().variant_count() == 1);

    const int n = 7;
    Sample s;
    s.image = Tensor({1, 1, n, n}, 0.0f);
    s.mask = LabelMask(n, n);
    s.has_label = true;
    s.image.at(0, 0, 1, 4) = 1.0f;
    s.mask(1, 4) = 1;
    s.spacing = Spacing{1.0, 2.0};

    const auto variants = augment(s, AugmentationConfig::sunnybrook());
    REQUIRE(variants.size() == 12);
    CHECK(variants[0].provenance.augmentation == "identity");
    CHECK(variants[0].image == s.image);
    std::set<std::string> tags;
    std::set<std::pair<int, int>> spots;
    for (const auto& v : variants) {
        tags.insert(v.provenance.augmentation);
        int found = 0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (v.image.at(0, 0, r, c) == 1.0f) {
                    CHECK(v.mask(r, c) == 1);
                    spots.insert({r, c});
                    ++found;
                }
        CHECK(found == 1);
        CHECK(std::count(v.mask.data.begin(), v.mask.data.end(), 1) == 1);
    }
    CHECK(tags.size() == 12);
    CHECK(tags.count("rot90+vflip") == 1);
    // The dihedral group has 8 elements; some of the 12 variants coincide.
    CHECK(spots.size() == 8);

    for (const auto& v : variants) {
        const bool odd = v.provenance.augmentation.starts_with("rot90") ||
                         v.provenance.augmentation.starts_with("rot270");
        CHECK(v.spacing == (odd ? Spacing{2.0, 1.0} : Spacing{1.0, 2.0}));
    }

    Sample wide = s;
    wide.image = Tensor({1, 1, 4, 6});
    wide.mask = LabelMask(4, 6);
    CHECK_THROWS_AS(augment(wide, AugmentationConfig::sunnybrook()), ContractError);
    CHECK(augment(wide, AugmentationConfig::lvsc()).size() == 1);
}

TEST_CASE("label masks per target")
{
    RawCase raw;
    raw.id = "x";
    raw.image = Image(10, 10);
    raw.endo = square(3.5, 3.5, 5.5, 5.5);
    raw.epi = square(1.5, 1.5, 7.5, 7.5);
    const auto endo = label_mask(raw, Target::Endo);
    const auto epi = label_mask(raw, Target::Epi);
    const auto both = label_mask(raw, Target::Both);
    REQUIRE(endo);
    REQUIRE(epi);
    REQUIRE(both);
    CHECK(std::count(endo->data.begin(), endo->data.end(), 1) == 4);
    CHECK(std::count(epi->data.begin(), epi->data.end(), 1) == 36);
    CHECK(both->data[4 * 10 + 4] == 2);
    CHECK(both->data[2 * 10 + 2] == 1);
    CHECK(both->data[0] == 0);
    CHECK(std::count(both->data.begin(), both->data.end(), 1) == 32);
    raw.epi.reset();
    CHECK_FALSE(label_mask(raw, Target::Both).has_value());
    CHECK(target_classes(Target::Both) == 3);
    CHECK(target_classes(Target::Endo) == 2);
    CHECK(parse_target("epi") == Target::Epi);
    CHECK_THROWS(parse_target("lv"));
}

namespace {

std::filesystem::path make_manifest(const std::filesystem::path& dir, int rows, bool labels = true)
{
    std::vector<ManifestRow> manifest;
    for (int i = 0; i < rows; ++i) {
        const std::string id = "case" + std::to_string(i);
        PgmImage img;
        img.rows = 130;
        img.cols = 128 + i;
        img.spacing = Spacing{1.25, 1.25};
        img.pixels.resize(static_cast<std::size_t>(img.rows) * img.cols);
        for (std::size_t k = 0; k < img.pixels.size(); ++k)
            img.pixels[k] = static_cast<std::uint16_t>((k * 37 + i) % 4000);
        write_pgm(img, dir / (id + ".pgm"));
        ManifestRow row{id, id + ".pgm", std::nullopt, std::nullopt};
        if (labels) {
            write_contour(square(50, 50, 70, 72), dir / (id + "_endo.txt"));
            row.contour_endo = id + "_endo.txt";
        }
        manifest.push_back(row);
    }
    write_manifest(manifest, dir / "manifest.csv");
    return dir / "manifest.csv";
}

}  // namespace

TEST_CASE("dataset loading from a manifest")
{
    const auto dir = temp_dir("manifest");
    const auto path = make_manifest(dir, 15);

    DatasetConfig train;
    train.augmentation = AugmentationConfig::sunnybrook();
    train.train = true;
    train.workers = 4;
    const Dataset ds = load_dataset(path, train);
    REQUIRE(ds.samples.size() == 180);
    CHECK(ds.warnings.empty());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        CHECK(s.provenance.case_id == "case" + std::to_string(i / 12));
        CHECK(s.provenance.crop_dim == 100 + 10 * static_cast<int>((i / 12) % 3));
        CHECK(s.image.shape().h == static_cast<std::size_t>(s.mask.rows));
        CHECK(s.has_label);
    }

    train.workers = 1;
    const Dataset serial = load_dataset(path, train);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        CHECK(serial.samples[i].image == ds.samples[i].image);

    DatasetConfig test;
    test.augmentation = AugmentationConfig::sunnybrook();
    const Dataset t = load_dataset(path, test);
    REQUIRE(t.samples.size() == 15);
    for (const auto& s : t.samples) {
        CHECK(s.provenance.augmentation == "identity");
        CHECK(s.provenance.crop_dim == 100);
    }
    CHECK(t.samples[0].provenance.crop_row == 15);
    CHECK(t.samples[0].provenance.crop_col == 14);
}

TEST_CASE("dataset edge cases")
{
    const auto dir = temp_dir("edges");
    {
        std::ofstream out(dir / "empty.csv");
        out << kManifestHeader << '\n';
    }
    const Dataset empty = load_dataset(dir / "empty.csv", {});
    CHECK(empty.samples.empty());
    CHECK(empty.warnings.size() == 1);

    const auto unlabeled = make_manifest(dir, 2, false);
    DatasetConfig train;
    train.train = true;
    const Dataset skipped = load_dataset(unlabeled, train);
    CHECK(skipped.samples.empty());
    CHECK_FALSE(skipped.warnings.empty());
    const Dataset test = load_dataset(unlabeled, {});
    REQUIRE(test.samples.size() == 2);
    CHECK_FALSE(test.samples[0].has_label);

    {
        std::ofstream out(dir / "dup.csv");
        out << kManifestHeader << "\na,case0.pgm,,\na,case1.pgm,,\n";
    }
    CHECK_THROWS_AS(parse_manifest(dir / "dup.csv"), FormatError);
    {
        std::ofstream out(dir / "missing.csv");
        out << kManifestHeader << "\na,nothere.pgm,,\n";
    }
    CHECK_THROWS_AS(load_dataset(dir / "missing.csv", {}), FormatError);
    {
        std::ofstream out(dir / "header.csv");
        out << "id,img\n";
    }
    CHECK_THROWS_AS(parse_manifest(dir / "header.csv"), FormatError);
    CHECK_THROWS_AS(parse_manifest(dir / "absent.csv"), FormatError);

    // Contour points beyond the image are rejected.
    write_contour(square(50, 50, 500, 60), dir / "far.txt");
    {
        std::ofstream out(dir / "far.csv");
        out << kManifestHeader << "\na,case0.pgm,far.txt,\n";
    }
    CHECK_THROWS_AS(load_dataset(dir / "far.csv", {}), FormatError);
}
