#pragma once

// Independent reference implementations used as test oracles. Everything
// here is written as plain loops, deliberately unlike the production kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "vfcn/contour.hpp"
#include "vfcn/rng.hpp"
#include "vfcn/tensor.hpp"

namespace testing {

using vfcn::Shape;
using vfcn::Tensor64;

inline Tensor64 random_tensor(Shape s, vfcn::Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor64 t(s, 0.0);
    for (double& v : t.values())
        v = rng.uniform(lo, hi);
    return t;
}

/// Direct cross-correlation with zero padding.
inline Tensor64 naive_conv2d(const Tensor64& x, const Tensor64& w, const std::vector<double>& b, int stride, int pad)
{
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    const int oh = (static_cast<int>(xs.h) + 2 * pad - static_cast<int>(ws.h)) / stride + 1;
    const int ow = (static_cast<int>(xs.w) + 2 * pad - static_cast<int>(ws.w)) / stride + 1;
    Tensor64 y(Shape{xs.n, ws.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)}, 0.0);
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t o = 0; o < ws.n; ++o)
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c) {
                    double acc = b.empty() ? 0.0 : b[o];
                    for (std::size_t i = 0; i < xs.c; ++i)
                        for (std::size_t kr = 0; kr < ws.h; ++kr)
                            for (std::size_t kc = 0; kc < ws.w; ++kc) {
                                const int ir = r * stride - pad + static_cast<int>(kr);
                                const int ic = c * stride - pad + static_cast<int>(kc);
                                if (ir < 0 || ic < 0 || ir >= static_cast<int>(xs.h) || ic >= static_cast<int>(xs.w))
                                    continue;
                                acc += x.at(n, i, ir, ic) * w.at(o, i, kr, kc);
                            }
                    y.at(n, o, r, c) = acc;
                }
    return y;
}

/// Scatter form: every input pixel stamps its kernel into the output.
inline Tensor64 naive_transposed_conv2d(const Tensor64& x, const Tensor64& w, const std::vector<double>& b, int stride)
{
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();  // [inC, outC, kh, kw]
    const std::size_t oh = (xs.h - 1) * stride + ws.h;
    const std::size_t ow = (xs.w - 1) * stride + ws.w;
    Tensor64 y(Shape{xs.n, ws.c, oh, ow}, 0.0);
    for (std::size_t n = 0; n < xs.n; ++n) {
        for (std::size_t o = 0; o < ws.c; ++o)
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t c = 0; c < ow; ++c)
                    y.at(n, o, r, c) = b.empty() ? 0.0 : b[o];
        for (std::size_t i = 0; i < xs.c; ++i)
            for (std::size_t r = 0; r < xs.h; ++r)
                for (std::size_t c = 0; c < xs.w; ++c)
                    for (std::size_t o = 0; o < ws.c; ++o)
                        for (std::size_t kr = 0; kr < ws.h; ++kr)
                            for (std::size_t kc = 0; kc < ws.w; ++kc)
                                y.at(n, o, r * stride + kr, c * stride + kc) += x.at(n, i, r, c) * w.at(i, o, kr, kc);
    }
    return y;
}

/// Ceil-mode max pooling; windows are clipped at the border.
inline Tensor64 naive_maxpool(const Tensor64& x, int k, int s)
{
    const Shape& xs = x.shape();
    auto out_len = [&](int in) {
        int o = static_cast<int>(std::ceil(static_cast<double>(in - k) / s)) + 1;
        if ((o - 1) * s >= in)
            --o;
        return o;
    };
    const int oh = out_len(static_cast<int>(xs.h));
    const int ow = out_len(static_cast<int>(xs.w));
    Tensor64 y(Shape{xs.n, xs.c, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)}, 0.0);
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t ch = 0; ch < xs.c; ++ch)
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int kr = 0; kr < k; ++kr)
                        for (int kc = 0; kc < k; ++kc) {
                            const int ir = r * s + kr;
                            const int ic = c * s + kc;
                            if (ir < static_cast<int>(xs.h) && ic < static_cast<int>(xs.w))
                                best = std::max(best, x.at(n, ch, ir, ic));
                        }
                    y.at(n, ch, r, c) = best;
                }
    return y;
}

/// Central difference of scalar `f` with respect to x[i].
inline double central_difference(const std::function<double()>& f, double& xi, double h)
{
    const double saved = xi;
    xi = saved + h;
    const double plus = f();
    xi = saved - h;
    const double minus = f();
    xi = saved;
    return (plus - minus) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, floor): a relative error that does not blow up when
/// both values are at round-off level.
inline double relative_error(double analytic, double numeric, double floor)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline vfcn::LabelMask random_mask(int rows, int cols, vfcn::Rng& rng, double p = 0.5)
{
    vfcn::LabelMask m(rows, cols);
    for (auto& v : m.data)
        v = rng.uniform() < p ? 1 : 0;
    return m;
}

struct Counts {
    std::uint64_t inter = 0, uni = 0, a = 0, m = 0, t1 = 0, t0 = 0, f1 = 0, f0 = 0;
};

inline Counts count_pixels(const vfcn::LabelMask& pred, const vfcn::LabelMask& truth)
{
    Counts c;
    for (int r = 0; r < pred.rows; ++r)
        for (int col = 0; col < pred.cols; ++col) {
            const bool p = pred(r, col) != 0;
            const bool t = truth(r, col) != 0;
            c.a += p;
            c.m += t;
            c.inter += p && t;
            c.uni += p || t;
            c.t1 += p && t;
            c.t0 += !p && !t;
            c.f1 += p && !t;
            c.f0 += !p && t;
        }
    return c;
}

inline double point_distance(vfcn::Point p, vfcn::Point q, vfcn::Spacing s)
{
    return std::hypot((p.x - q.x) * s.col_mm, (p.y - q.y) * s.row_mm);
}

inline double oracle_directed_max(const vfcn::Contour& a, const vfcn::Contour& m, vfcn::Spacing s)
{
    double worst = 0;
    for (const auto& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : m)
            best = std::min(best, point_distance(p, q, s));
        worst = std::max(worst, best);
    }
    return worst;
}

inline double oracle_directed_mean(const vfcn::Contour& a, const vfcn::Contour& m, vfcn::Spacing s)
{
    double sum = 0;
    for (const auto& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : m)
            best = std::min(best, point_distance(p, q, s));
        sum += best;
    }
    return sum / static_cast<double>(a.size());
}

inline double oracle_hausdorff(const vfcn::Contour& a, const vfcn::Contour& m, vfcn::Spacing s)
{
    return std::max(oracle_directed_max(a, m, s), oracle_directed_max(m, a, s));
}

inline double oracle_apd(const vfcn::Contour& a, const vfcn::Contour& m, vfcn::Spacing s)
{
    return 0.5 * (oracle_directed_mean(a, m, s) + oracle_directed_mean(m, a, s));
}

inline vfcn::Contour random_contour(int points, vfcn::Rng& rng, double extent = 32.0)
{
    vfcn::Contour c;
    for (int i = 0; i < points; ++i)
        c.push_back({rng.uniform(0, extent), rng.uniform(0, extent)});
    return c;
}

/// Even-odd point-in-polygon by ray casting toward +x.
inline bool point_in_polygon(const vfcn::Contour& poly, double x, double y)
{
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x)
            inside = !inside;
    }
    return inside;
}

// ---- DICOM synthesis ----

struct DicomWriter {
    std::vector<std::uint8_t> bytes;
    bool explicit_vr = true;

    void u16(std::uint16_t v)
    {
        bytes.push_back(v & 0xFF);
        bytes.push_back(v >> 8);
    }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            bytes.push_back((v >> (8 * i)) & 0xFF);
    }
    void header(std::uint16_t group, std::uint16_t element, const char* vr, std::uint32_t length, bool force_explicit = false)
    {
        u16(group);
        u16(element);
        if (!(explicit_vr || force_explicit)) {
            u32(length);
            return;
        }
        bytes.push_back(vr[0]);
        bytes.push_back(vr[1]);
        const std::string v(vr, 2);
        if (v == "OB" || v == "OW" || v == "SQ" || v == "UN" || v == "UT") {
            u16(0);
            u32(length);
        } else {
            u16(static_cast<std::uint16_t>(length));
        }
    }
    void text(std::uint16_t group, std::uint16_t element, const char* vr, std::string value, bool force_explicit = false)
    {
        if (value.size() % 2)
            value.push_back(std::string(vr) == "UI" ? '\0' : ' ');
        header(group, element, vr, static_cast<std::uint32_t>(value.size()), force_explicit);
        bytes.insert(bytes.end(), value.begin(), value.end());
    }
    void us(std::uint16_t group, std::uint16_t element, std::uint16_t v)
    {
        header(group, element, "US", 2);
        u16(v);
    }
};

struct DicomFields {
    int rows = 2;
    int cols = 2;
    int bits = 16;
    int representation = 0;
    std::string spacing = "1.25\\1.25";
    std::vector<std::int32_t> pixels{0, 1, 2, 3};
    std::string syntax = "1.2.840.10008.1.2.1";
    bool part10 = true;
    bool with_sequence = false;
    bool encapsulated = false;
};

/// Writes a minimal single-frame file. The dataset encoding follows `syntax`.
inline std::vector<std::uint8_t> synthesize_dicom(const DicomFields& f)
{
    DicomWriter w;
    if (f.part10) {
        w.bytes.assign(128, 0);
        w.bytes.insert(w.bytes.end(), {'D', 'I', 'C', 'M'});
        DicomWriter meta;
        meta.explicit_vr = true;
        meta.text(0x0002, 0x0001, "OB", std::string("\0\1", 2));
        meta.text(0x0002, 0x0010, "UI", f.syntax);
        w.header(0x0002, 0x0000, "UL", 4, true);
        w.u32(static_cast<std::uint32_t>(meta.bytes.size()));
        w.bytes.insert(w.bytes.end(), meta.bytes.begin(), meta.bytes.end());
    }
    w.explicit_vr = f.syntax != "1.2.840.10008.1.2";
    w.text(0x0008, 0x0060, "CS", "MR");
    if (f.with_sequence) {
        // Undefined-length sequence holding one undefined-length item.
        w.header(0x0008, 0x1140, "SQ", 0xFFFFFFFF);
        w.u16(0xFFFE);
        w.u16(0xE000);
        w.u32(0xFFFFFFFF);
        w.text(0x0008, 0x1150, "UI", "1.2.3");
        w.u16(0xFFFE);
        w.u16(0xE00D);
        w.u32(0);
        w.u16(0xFFFE);
        w.u16(0xE0DD);
        w.u32(0);
    }
    w.us(0x0028, 0x0002, 1);
    w.us(0x0028, 0x0010, static_cast<std::uint16_t>(f.rows));
    w.us(0x0028, 0x0011, static_cast<std::uint16_t>(f.cols));
    w.text(0x0028, 0x0030, "DS", f.spacing);
    w.us(0x0028, 0x0100, static_cast<std::uint16_t>(f.bits));
    w.us(0x0028, 0x0103, static_cast<std::uint16_t>(f.representation));
    if (f.encapsulated) {
        w.header(0x7FE0, 0x0010, "OB", 0xFFFFFFFF);
        w.u16(0xFFFE);
        w.u16(0xE0DD);
        w.u32(0);
        return w.bytes;
    }
    std::vector<std::uint8_t> payload;
    for (std::int32_t v : f.pixels) {
        const auto u = static_cast<std::uint32_t>(v);
        payload.push_back(u & 0xFF);
        if (f.bits == 16)
            payload.push_back((u >> 8) & 0xFF);
    }
    if (payload.size() % 2)
        payload.push_back(0);
    w.header(0x7FE0, 0x0010, f.bits == 16 ? "OW" : "OB", static_cast<std::uint32_t>(payload.size()));
    w.bytes.insert(w.bytes.end(), payload.begin(), payload.end());
    return w.bytes;
}

}  // namespace testing
