#include "vfcn/contour.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vfcn {

LabelMask rasterize_contour(const Contour& contour, int rows, int cols)
{
    if (contour.size() < 3)
        throw ContractError("rasterize_contour: contour needs at least 3 points, got " +
                            std::to_string(contour.size()));
    LabelMask mask(rows, cols, 0);
    std::vector<double> crossings;
    const std::size_t n = contour.size();
    for (int r = 0; r < rows; ++r) {
        const double y = r + kRasterNudge;
        crossings.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const Point& a = contour[i];
            const Point& b = contour[(i + 1) % n];
            if ((a.y > y) == (b.y > y))
                continue;
            crossings.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
        std::sort(crossings.begin(), crossings.end());
        for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
            // columns with crossings[k] < c + nudge < crossings[k+1]
            const double lo = crossings[k] - kRasterNudge;
            const double hi = crossings[k + 1] - kRasterNudge;
            int c0 = static_cast<int>(std::floor(lo)) + 1;
            int c1 = static_cast<int>(std::ceil(hi)) - 1;
            c0 = std::max(c0, 0);
            c1 = std::min(c1, cols - 1);
            for (int c = c0; c <= c1; ++c)
                mask(r, c) = 1;
        }
    }
    return mask;
}

Contour translate(const Contour& contour, double dx, double dy)
{
    Contour out;
    out.reserve(contour.size());
    for (const Point& p : contour)
        out.push_back({p.x + dx, p.y + dy});
    return out;
}

Contour parse_contour(std::string_view text)
{
    Contour out;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream fields(line);
        std::string xs, ys, extra;
        if (!(fields >> xs))
            continue;
        if (!(fields >> ys) || (fields >> extra))
            throw FormatError("contour line " + std::to_string(line_no) + ": expected two numbers");
        Point p;
        try {
            std::size_t used = 0;
            p.x = std::stod(xs, &used);
            if (used != xs.size())
                throw std::invalid_argument(xs);
            p.y = std::stod(ys, &used);
            if (used != ys.size())
                throw std::invalid_argument(ys);
        } catch (const std::exception&) {
            throw FormatError("contour line " + std::to_string(line_no) + ": bad number");
        }
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw FormatError("contour line " + std::to_string(line_no) + ": non-finite coordinate");
        out.push_back(p);
    }
    return out;
}

Contour read_contour(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open contour file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_contour(buf.str());
}

void write_contour(const Contour& contour, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw FormatError("cannot write contour file " + path.string());
    out.precision(17);
    for (const Point& p : contour)
        out << p.x << ' ' << p.y << '\n';
}

}  // namespace vfcn
