#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vfcn/network_spec.hpp"
#include "vfcn/tensor.hpp"

namespace vfcn {

/// Named parameter blobs, one entry per parameterized layer. Blob 0 is the
/// weight tensor, blob 1 the bias stored as (outC, 1, 1, 1).
template <typename T>
struct BasicWeightStore {
    struct Entry {
        std::string name;
        std::vector<BasicTensor<T>> blobs;
        bool operator==(const Entry&) const = default;
    };
    std::vector<Entry> layers;

    Entry* find(std::string_view name)
    {
        for (auto& e : layers)
            if (e.name == name)
                return &e;
        return nullptr;
    }
    const Entry* find(std::string_view name) const
    {
        for (const auto& e : layers)
            if (e.name == name)
                return &e;
        return nullptr;
    }

    std::size_t param_count() const
    {
        std::size_t n = 0;
        for (const auto& e : layers)
            for (const auto& b : e.blobs)
                n += b.size();
        return n;
    }

    template <typename U>
    BasicWeightStore<U> cast() const
    {
        BasicWeightStore<U> out;
        for (const auto& e : layers) {
            typename BasicWeightStore<U>::Entry ce{e.name, {}};
            for (const auto& b : e.blobs)
                ce.blobs.push_back(b.template cast<U>());
            out.layers.push_back(std::move(ce));
        }
        return out;
    }

    bool operator==(const BasicWeightStore&) const = default;
};

using WeightStore = BasicWeightStore<float>;

/// Throws ContractError unless every parameterized layer of `spec` has blobs
/// of exactly the expected shapes.
template <typename T>
void check_store_matches(const NetworkSpec& spec, const BasicWeightStore<T>& store);

/// Conv and score-conv weights uniform in [-sqrt(3/fan_in), +sqrt(3/fan_in)]
/// with fan_in = inC*kh*kw; upsampling layers start as per-channel bilinear
/// interpolation; biases zero. Deterministic for a given seed.
WeightStore init_xavier(const NetworkSpec& spec, std::uint64_t seed);

/// Separable bilinear interpolation kernel, kernel x kernel, row-major.
std::vector<float> bilinear_kernel(int kernel);

/// Binary weight file: "FCNW", u32 version 1, u32 layer count, then per layer
/// u16 name length + UTF-8 name, u8 blob count, and per blob u8 rank, u32 dims,
/// binary32 values; all little-endian.
void save_weights(const WeightStore& store, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_weights(const WeightStore& store);

/// Raw file contents, no spec checks. Throws FormatError on any corruption.
WeightStore read_weights(const std::filesystem::path& path);
WeightStore decode_weights(std::span<const std::uint8_t> bytes);

struct LoadResult {
    WeightStore store;  ///< only the transplanted layers, in spec order
    std::vector<std::string> transplanted;
    std::vector<std::string> skipped;  ///< absent or shape-mismatched; left to the caller
};

/// Copies name-and-shape-matching layers from `source` into the layout of `spec`.
LoadResult transplant(const WeightStore& source, const NetworkSpec& spec);

/// Strict mode requires every spec layer to be present with matching shapes
/// (ContractError otherwise); non-strict mode reports what was skipped.
LoadResult load_weights(const std::filesystem::path& path, const NetworkSpec& spec, bool strict);

}  // namespace vfcn
