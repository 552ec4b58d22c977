#include "vfcn/dicom.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

namespace vfcn {
namespace {

constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFF;

constexpr std::uint32_t tag(std::uint16_t group, std::uint16_t element)
{
    return static_cast<std::uint32_t>(group) << 16 | element;
}

constexpr std::uint32_t kTransferSyntaxTag = tag(0x0002, 0x0010);
constexpr std::uint32_t kSamplesPerPixel = tag(0x0028, 0x0002);
constexpr std::uint32_t kNumberOfFrames = tag(0x0028, 0x0008);
constexpr std::uint32_t kRows = tag(0x0028, 0x0010);
constexpr std::uint32_t kColumns = tag(0x0028, 0x0011);
constexpr std::uint32_t kPixelSpacing = tag(0x0028, 0x0030);
constexpr std::uint32_t kBitsAllocated = tag(0x0028, 0x0100);
constexpr std::uint32_t kPixelRepresentation = tag(0x0028, 0x0103);
constexpr std::uint32_t kPixelData = tag(0x7FE0, 0x0010);
constexpr std::uint32_t kItem = tag(0xFFFE, 0xE000);
constexpr std::uint32_t kItemDelimiter = tag(0xFFFE, 0xE00D);
constexpr std::uint32_t kSequenceDelimiter = tag(0xFFFE, 0xE0DD);

bool long_form_vr(std::string_view vr)
{
    static constexpr std::array<std::string_view, 13> kLong = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ",
                                                               "SV", "UC", "UN", "UR", "UT", "UV"};
    return std::find(kLong.begin(), kLong.end(), vr) != kLong.end();
}

bool plausible_vr(std::uint8_t a, std::uint8_t b)
{
    return a >= 'A' && a <= 'Z' && b >= 'A' && b <= 'Z';
}

struct Element {
    std::uint32_t tag = 0;
    std::uint32_t length = 0;
    std::size_t offset = 0;  ///< value start
};

class Parser {
public:
    Parser(std::span<const std::uint8_t> bytes, bool explicit_vr) : bytes_(bytes), explicit_(explicit_vr) {}

    std::uint16_t u16(std::size_t at) const
    {
        need(at, 2);
        return static_cast<std::uint16_t>(bytes_[at] | bytes_[at + 1] << 8);
    }
    std::uint32_t u32(std::size_t at) const
    {
        need(at, 4);
        return static_cast<std::uint32_t>(bytes_[at]) | static_cast<std::uint32_t>(bytes_[at + 1]) << 8 |
               static_cast<std::uint32_t>(bytes_[at + 2]) << 16 | static_cast<std::uint32_t>(bytes_[at + 3]) << 24;
    }

    /// Reads the element header at `pos`, advancing past it.
    Element header(std::size_t& pos, bool force_explicit = false) const
    {
        Element e;
        e.tag = static_cast<std::uint32_t>(u16(pos)) << 16 | u16(pos + 2);
        pos += 4;
        const bool is_delimiter = (e.tag >> 16) == 0xFFFE;
        if (is_delimiter || !(explicit_ || force_explicit)) {
            e.length = u32(pos);
            pos += 4;
        } else {
            need(pos, 2);
            const std::string_view vr(reinterpret_cast<const char*>(bytes_.data() + pos), 2);
            if (!plausible_vr(bytes_[pos], bytes_[pos + 1]))
                throw FormatError("DICOM: invalid VR at byte " + std::to_string(pos));
            if (long_form_vr(vr)) {
                e.length = u32(pos + 4);
                pos += 8;
            } else {
                e.length = u16(pos + 2);
                pos += 4;
            }
        }
        e.offset = pos;
        return e;
    }

    /// Skips the value of `e` (already past its header), including
    /// undefined-length sequences.
    void skip_value(const Element& e, std::size_t& pos, int depth) const
    {
        if (e.length != kUndefinedLength) {
            need(pos, e.length);
            pos += e.length;
            return;
        }
        if (depth > 32)
            throw FormatError("DICOM: sequences nested too deeply");
        while (true) {
            const Element item = header(pos);
            if (item.tag == kSequenceDelimiter)
                return;
            if (item.tag != kItem)
                throw FormatError("DICOM: expected sequence item at byte " + std::to_string(pos));
            if (item.length != kUndefinedLength) {
                need(pos, item.length);
                pos += item.length;
                continue;
            }
            while (true) {
                const Element inner = header(pos);
                if (inner.tag == kItemDelimiter)
                    break;
                skip_value(inner, pos, depth + 1);
            }
        }
    }

    std::string text(const Element& e) const
    {
        need(e.offset, e.length);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + e.offset), e.length);
        while (!s.empty() && (s.back() == '\0' || s.back() == ' '))
            s.pop_back();
        while (!s.empty() && s.front() == ' ')
            s.erase(s.begin());
        return s;
    }

    std::size_t size() const { return bytes_.size(); }
    std::span<const std::uint8_t> bytes() const { return bytes_; }

    void need(std::size_t at, std::size_t n) const
    {
        if (at > bytes_.size() || bytes_.size() - at < n)
            throw FormatError("DICOM: truncated at byte " + std::to_string(at));
    }

private:
    std::span<const std::uint8_t> bytes_;
    bool explicit_;
};

double parse_ds(const std::string& s, const char* what)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (s.find_first_not_of(' ', used) != std::string::npos)
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(std::string("DICOM: bad decimal string in ") + what + ": '" + s + "'");
    }
}

}  // namespace

DicomImage parse_dicom(std::span<const std::uint8_t> bytes, std::string source)
{
    DicomImage img;
    img.source = std::move(source);
    std::size_t pos = 0;
    bool explicit_vr = false;

    const bool part10 = bytes.size() >= 132 && std::equal(bytes.begin() + 128, bytes.begin() + 132, "DICM");
    if (part10) {
        pos = 132;
        const Parser meta(bytes, true);
        while (pos + 4 <= bytes.size() && meta.u16(pos) == 0x0002) {
            const Element e = meta.header(pos);
            if (e.tag == kTransferSyntaxTag)
                img.transfer_syntax = meta.text(e);
            meta.skip_value(e, pos, 0);
        }
        if (img.transfer_syntax.empty())
            throw FormatError("DICOM: missing TransferSyntaxUID in file meta");
        if (img.transfer_syntax == kExplicitVrLittleEndian)
            explicit_vr = true;
        else if (img.transfer_syntax == kImplicitVrLittleEndian)
            explicit_vr = false;
        else
            throw UnsupportedSyntaxError("DICOM: unsupported transfer syntax " + img.transfer_syntax);
    } else {
        // Bare dataset: a VR-looking pair after the first tag means explicit encoding.
        if (bytes.size() < 8)
            throw FormatError("DICOM: file too short");
        explicit_vr = plausible_vr(bytes[4], bytes[5]) && Parser(bytes, true).u16(0) != 0;
        img.transfer_syntax = std::string(explicit_vr ? kExplicitVrLittleEndian : kImplicitVrLittleEndian);
    }

    const Parser p(bytes, explicit_vr);
    std::optional<int> rows, cols, bits;
    std::optional<Spacing> spacing;
    std::optional<Element> pixel_data;
    int representation = 0;
    while (pos < bytes.size()) {
        const Element e = p.header(pos);
        if (e.tag == kPixelData) {
            if (e.length == kUndefinedLength)
                throw UnsupportedSyntaxError("DICOM: encapsulated (compressed) pixel data is not supported");
            p.need(pos, e.length);
            pixel_data = e;
            pos += e.length;
            continue;
        }
        if (e.length != kUndefinedLength && e.length >= 2) {
            switch (e.tag) {
            case kRows: rows = p.u16(e.offset); break;
            case kColumns: cols = p.u16(e.offset); break;
            case kBitsAllocated: bits = p.u16(e.offset); break;
            case kPixelRepresentation: representation = p.u16(e.offset); break;
            case kSamplesPerPixel:
                if (p.u16(e.offset) != 1)
                    throw UnsupportedSyntaxError("DICOM: only single-sample (grayscale) images are supported");
                break;
            case kNumberOfFrames: {
                const std::string frames = p.text(e);
                if (!frames.empty() && parse_ds(frames, "NumberOfFrames") != 1.0)
                    throw UnsupportedSyntaxError("DICOM: multi-frame images are not supported");
                break;
            }
            case kPixelSpacing: {
                const std::string s = p.text(e);
                const auto sep = s.find('\\');
                if (sep == std::string::npos)
                    throw FormatError("DICOM: PixelSpacing must hold two values, got '" + s + "'");
                spacing = Spacing{parse_ds(s.substr(0, sep), "PixelSpacing"),
                                  parse_ds(s.substr(sep + 1), "PixelSpacing")};
                break;
            }
            default: break;
            }
        }
        p.skip_value(e, pos, 0);
    }

    auto require = [](bool present, const char* name) {
        if (!present)
            throw FormatError(std::string("DICOM: missing required tag ") + name);
    };
    require(rows.has_value(), "Rows (0028,0010)");
    require(cols.has_value(), "Columns (0028,0011)");
    require(bits.has_value(), "BitsAllocated (0028,0100)");
    require(spacing.has_value(), "PixelSpacing (0028,0030)");
    require(pixel_data.has_value(), "PixelData (7FE0,0010)");
    if (*bits != 8 && *bits != 16)
        throw UnsupportedSyntaxError("DICOM: BitsAllocated " + std::to_string(*bits) + " not supported");
    if (*rows < 1 || *cols < 1)
        throw FormatError("DICOM: empty image");
    if (!(spacing->row_mm > 0) || !(spacing->col_mm > 0))
        throw FormatError("DICOM: PixelSpacing components must be positive");

    img.rows = *rows;
    img.cols = *cols;
    img.bits_allocated = *bits;
    img.is_signed = representation == 1;
    img.spacing = *spacing;
    const std::size_t count = static_cast<std::size_t>(img.rows) * img.cols;
    const std::size_t bytes_per = static_cast<std::size_t>(img.bits_allocated / 8);
    const std::size_t expected = count * bytes_per;
    const std::size_t length = pixel_data->length;
    if (length != expected && !(length == expected + 1 && expected % 2 == 1))
        throw FormatError("DICOM: pixel payload is " + std::to_string(length) + " bytes, expected " +
                          std::to_string(expected));
    img.pixels.resize(count);
    const std::uint8_t* src = bytes.data() + pixel_data->offset;
    for (std::size_t i = 0; i < count; ++i) {
        if (bytes_per == 1) {
            img.pixels[i] = img.is_signed ? static_cast<std::int8_t>(src[i]) : src[i];
        } else {
            const auto raw = static_cast<std::uint16_t>(src[2 * i] | src[2 * i + 1] << 8);
            img.pixels[i] = img.is_signed ? static_cast<std::int16_t>(raw) : raw;
        }
    }
    return img;
}

DicomImage read_dicom(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw FormatError("cannot open DICOM file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_dicom(bytes, path.string());
}

}  // namespace vfcn
