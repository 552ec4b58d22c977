#include "vfcn/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vfcn/rng.hpp"

namespace vfcn {
namespace {

constexpr char kMagic[4] = {'F', 'C', 'N', 'W'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u16(std::uint16_t v)
    {
        u8(static_cast<std::uint8_t>(v));
        u8(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint8_t u8()
    {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16()
    {
        need(2);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n)
    {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n)
            throw FormatError("weight file truncated at byte " + std::to_string(pos_));
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint32_t> dims_of(const Shape& s, int rank)
{
    const std::uint32_t all[4] = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                  static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    return {all, all + rank};
}

}  // namespace

template <typename T>
void check_store_matches(const NetworkSpec& spec, const BasicWeightStore<T>& store)
{
    for (const auto& p : param_shapes(spec)) {
        const auto* e = store.find(p.layer);
        if (!e)
            throw ContractError("weights: missing layer '" + p.layer + "'");
        if (e->blobs.size() != 2 || e->blobs[0].shape() != p.weights || e->blobs[1].shape() != p.bias)
            throw ContractError("weights: layer '" + p.layer + "' does not match spec shape " + p.weights.str());
    }
}

template void check_store_matches(const NetworkSpec&, const BasicWeightStore<float>&);
template void check_store_matches(const NetworkSpec&, const BasicWeightStore<double>&);

std::vector<float> bilinear_kernel(int kernel)
{
    const int factor = (kernel + 1) / 2;
    const double center = kernel % 2 == 1 ? factor - 1 : factor - 0.5;
    std::vector<float> k(static_cast<std::size_t>(kernel) * kernel);
    for (int y = 0; y < kernel; ++y)
        for (int x = 0; x < kernel; ++x)
            k[static_cast<std::size_t>(y) * kernel + x] =
                static_cast<float>((1.0 - std::abs(y - center) / factor) * (1.0 - std::abs(x - center) / factor));
    return k;
}

WeightStore init_xavier(const NetworkSpec& spec, std::uint64_t seed)
{
    Rng rng(seed);
    WeightStore store;
    for (const auto& p : param_shapes(spec)) {
        const LayerSpec& layer = *spec.find(p.layer);
        Tensor w(p.weights);
        if (layer.kind == LayerKind::Upsample) {
            const auto filt = bilinear_kernel(layer.kernel);
            const std::size_t diag = std::min(p.weights.n, p.weights.c);
            for (std::size_t i = 0; i < diag; ++i)
                std::copy(filt.begin(), filt.end(), w.plane(i, i));
        } else {
            const double fan_in = static_cast<double>(p.weights.c * p.weights.h * p.weights.w);
            const double limit = std::sqrt(3.0 / fan_in);
            for (auto& v : w.values())
                v = static_cast<float>(rng.uniform(-limit, limit));
        }
        store.layers.push_back({p.layer, {std::move(w), Tensor(p.bias)}});
    }
    return store;
}

std::vector<std::uint8_t> encode_weights(const WeightStore& store)
{
    Writer out;
    out.raw(std::string_view(kMagic, 4));
    out.u32(kVersion);
    out.u32(static_cast<std::uint32_t>(store.layers.size()));
    for (const auto& e : store.layers) {
        if (e.name.size() > 0xFFFF)
            throw ContractError("weights: layer name too long");
        if (e.blobs.size() > 0xFF)
            throw ContractError("weights: too many blobs in layer '" + e.name + "'");
        out.u16(static_cast<std::uint16_t>(e.name.size()));
        out.raw(e.name);
        out.u8(static_cast<std::uint8_t>(e.blobs.size()));
        for (std::size_t b = 0; b < e.blobs.size(); ++b) {
            const auto dims = dims_of(e.blobs[b].shape(), b == 0 ? 4 : 1);
            out.u8(static_cast<std::uint8_t>(dims.size()));
            for (auto d : dims)
                out.u32(d);
            for (float v : e.blobs[b].values())
                out.f32(v);
        }
    }
    return std::move(out.bytes);
}

void save_weights(const WeightStore& store, const std::filesystem::path& path)
{
    const auto bytes = encode_weights(store);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw FormatError("cannot write weight file " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw FormatError("failed writing weight file " + path.string());
}

WeightStore decode_weights(std::span<const std::uint8_t> bytes)
{
    Reader in(bytes);
    if (in.str(4) != std::string_view(kMagic, 4))
        throw FormatError("weight file: bad magic (expected FCNW)");
    if (const auto version = in.u32(); version != kVersion)
        throw FormatError("weight file: unsupported version " + std::to_string(version));
    const std::uint32_t count = in.u32();
    WeightStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightStore::Entry e;
        e.name = in.str(in.u16());
        if (store.find(e.name))
            throw FormatError("weight file: duplicate layer '" + e.name + "'");
        const std::uint8_t blobs = in.u8();
        for (std::uint8_t b = 0; b < blobs; ++b) {
            const std::uint8_t rank = in.u8();
            if (rank == 0 || rank > 4)
                throw FormatError("weight file: unsupported blob rank " + std::to_string(rank));
            std::size_t dims[4] = {1, 1, 1, 1};
            std::size_t total = 1;
            for (std::uint8_t d = 0; d < rank; ++d) {
                dims[d] = in.u32();
                total *= dims[d];
            }
            if (total > in.remaining() / 4)
                throw FormatError("weight file truncated in layer '" + e.name + "'");
            std::vector<float> values(total);
            for (auto& v : values)
                v = in.f32();
            e.blobs.emplace_back(Shape{dims[0], dims[1], dims[2], dims[3]}, std::move(values));
        }
        store.layers.push_back(std::move(e));
    }
    if (in.remaining() != 0)
        throw FormatError("weight file: " + std::to_string(in.remaining()) + " trailing bytes");
    return store;
}

WeightStore read_weights(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw FormatError("cannot open weight file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_weights(bytes);
}

LoadResult transplant(const WeightStore& source, const NetworkSpec& spec)
{
    LoadResult r;
    for (const auto& p : param_shapes(spec)) {
        const auto* e = source.find(p.layer);
        const bool match = e && e->blobs.size() == 2 && e->blobs[0].shape() == p.weights &&
                           e->blobs[1].shape() == p.bias;
        if (match) {
            r.store.layers.push_back(*e);
            r.transplanted.push_back(p.layer);
        } else {
            r.skipped.push_back(p.layer);
        }
    }
    return r;
}

LoadResult load_weights(const std::filesystem::path& path, const NetworkSpec& spec, bool strict)
{
    LoadResult r = transplant(read_weights(path), spec);
    if (strict && !r.skipped.empty())
        throw ContractError("strict weight load: layer '" + r.skipped.front() +
                            "' missing or shape-mismatched in " + path.string());
    return r;
}

}  // namespace vfcn
