#include "vfcn/pgm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vfcn/error.hpp"

namespace vfcn {
namespace {

struct Cursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
    std::optional<Spacing> spacing;

    void skip_space_and_comments()
    {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                const std::size_t start = pos + 1;
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
                comment(std::string(reinterpret_cast<const char*>(bytes.data() + start), pos - start));
            } else {
                break;
            }
        }
    }

    void comment(const std::string& text)
    {
        std::istringstream in(text);
        std::string key, value;
        if (!(in >> key >> value) || key != "PixelSpacing")
            return;
        const auto sep = value.find('\\');
        if (sep == std::string::npos)
            throw FormatError("PGM: PixelSpacing comment must read 'row\\col'");
        try {
            spacing = Spacing{std::stod(value.substr(0, sep)), std::stod(value.substr(sep + 1))};
        } catch (const std::exception&) {
            throw FormatError("PGM: bad PixelSpacing comment '" + value + "'");
        }
        if (!(spacing->row_mm > 0) || !(spacing->col_mm > 0))
            throw FormatError("PGM: PixelSpacing components must be positive");
    }

    int integer(const char* what)
    {
        skip_space_and_comments();
        long v = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1 << 24)
                throw FormatError(std::string("PGM: ") + what + " too large");
            ++pos;
        }
        if (pos == start)
            throw FormatError(std::string("PGM: expected ") + what);
        return static_cast<int>(v);
    }
};

}  // namespace

bool looks_like_pgm(std::span<const std::uint8_t> bytes)
{
    return bytes.size() >= 3 && bytes[0] == 'P' && bytes[1] == '5' && std::isspace(bytes[2]);
}

PgmImage parse_pgm(std::span<const std::uint8_t> bytes)
{
    if (!looks_like_pgm(bytes))
        throw FormatError("PGM: missing P5 magic");
    Cursor cur{bytes, 2, std::nullopt};
    PgmImage img;
    img.cols = cur.integer("width");
    img.rows = cur.integer("height");
    img.maxval = cur.integer("maxval");
    if (img.rows < 1 || img.cols < 1)
        throw FormatError("PGM: empty image");
    if (img.maxval < 1 || img.maxval > 65535)
        throw FormatError("PGM: maxval must be in 1..65535");
    if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos]))
        throw FormatError("PGM: expected whitespace before raster");
    ++cur.pos;
    img.spacing = cur.spacing;

    const std::size_t count = static_cast<std::size_t>(img.rows) * img.cols;
    const std::size_t width = img.maxval > 255 ? 2 : 1;
    if (bytes.size() - cur.pos != count * width)
        throw FormatError("PGM: raster is " + std::to_string(bytes.size() - cur.pos) + " bytes, expected " +
                          std::to_string(count * width));
    img.pixels.resize(count);
    const std::uint8_t* src = bytes.data() + cur.pos;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint16_t v =
            width == 1 ? src[i] : static_cast<std::uint16_t>(src[2 * i] << 8 | src[2 * i + 1]);
        if (v > img.maxval)
            throw FormatError("PGM: sample exceeds maxval");
        img.pixels[i] = v;
    }
    return img;
}

PgmImage read_pgm(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw FormatError("cannot open PGM file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_pgm(bytes);
}

std::vector<std::uint8_t> encode_pgm(const PgmImage& image)
{
    if (image.pixels.size() != static_cast<std::size_t>(image.rows) * image.cols)
        throw ContractError("encode_pgm: pixel count does not match dimensions");
    if (image.maxval < 1 || image.maxval > 65535)
        throw ContractError("encode_pgm: maxval must be in 1..65535");
    std::ostringstream header;
    header << "P5\n";
    if (image.spacing) {
        header.precision(17);
        header << "# PixelSpacing " << image.spacing->row_mm << '\\' << image.spacing->col_mm << '\n';
    }
    header << image.cols << ' ' << image.rows << '\n' << image.maxval << '\n';
    const std::string h = header.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    const bool wide = image.maxval > 255;
    for (std::uint16_t v : image.pixels) {
        if (v > image.maxval)
            throw ContractError("encode_pgm: sample exceeds maxval");
        if (wide)
            out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    }
    return out;
}

void write_pgm(const PgmImage& image, const std::filesystem::path& path)
{
    const auto bytes = encode_pgm(image);
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw FormatError("cannot write PGM file " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace vfcn
