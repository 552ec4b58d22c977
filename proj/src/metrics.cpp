#include "vfcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

namespace vfcn::metrics {
namespace {

void require_same_shape(const LabelMask& a, const LabelMask& b, const char* what)
{
    if (!a.same_shape(b))
        throw ContractError(std::string(what) + ": mask shapes differ (" + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                            std::to_string(b.cols) + ")");
}

struct Overlap {
    std::uint64_t a = 0, m = 0, both = 0;
};

Overlap overlap(const LabelMask& a, const LabelMask& m)
{
    Overlap o;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool pa = a.data[i] != 0;
        const bool pm = m.data[i] != 0;
        o.a += pa;
        o.m += pm;
        o.both += pa && pm;
    }
    return o;
}

double distance(const Point& p, const Point& q, Spacing s)
{
    return std::hypot((p.x - q.x) * s.col_mm, (p.y - q.y) * s.row_mm);
}

// Distance from every point of `from` to its nearest point of `to`.
std::vector<double> nearest_distances(const Contour& from, const Contour& to, Spacing s)
{
    std::vector<double> d(from.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < from.size(); ++i)
        for (const Point& q : to)
            d[i] = std::min(d[i], distance(from[i], q, s));
    return d;
}

double mean_of(const std::vector<double>& v)
{
    double sum = 0;
    for (double x : v)
        sum += x;
    return sum / static_cast<double>(v.size());
}

void require_nonempty(const Contour& a, const Contour& m, const char* what)
{
    if (a.empty() || m.empty())
        throw ContractError(std::string(what) + ": empty contour");
}

}  // namespace

double dice(const LabelMask& a, const LabelMask& m)
{
    require_same_shape(a, m, "dice");
    const Overlap o = overlap(a, m);
    if (o.a + o.m == 0)
        return 1.0;
    return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.m);
}

double jaccard(const LabelMask& a, const LabelMask& m)
{
    require_same_shape(a, m, "jaccard");
    const Overlap o = overlap(a, m);
    const std::uint64_t uni = o.a + o.m - o.both;
    if (uni == 0)
        return 1.0;
    return static_cast<double>(o.both) / static_cast<double>(uni);
}

Confusion confusion(const LabelMask& pred, const LabelMask& truth)
{
    require_same_shape(pred, truth, "confusion");
    Confusion c;
    auto& k = c.counts;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool t = truth.data[i] != 0;
        if (p && t)
            ++k.t1;
        else if (!p && !t)
            ++k.t0;
        else if (p)
            ++k.f1;
        else
            ++k.f0;
    }
    auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
        if (den == 0)
            return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    c.p = ratio(k.t1, k.n1());
    c.q = ratio(k.t0, k.n0());
    c.ppv = ratio(k.t1, k.t1 + k.f1);
    c.npv = ratio(k.t0, k.t0 + k.f0);
    return c;
}

double hausdorff(const Contour& a, const Contour& m, Spacing spacing)
{
    require_nonempty(a, m, "hausdorff");
    const auto da = nearest_distances(a, m, spacing);
    const auto dm = nearest_distances(m, a, spacing);
    return std::max(*std::max_element(da.begin(), da.end()), *std::max_element(dm.begin(), dm.end()));
}

double apd(const Contour& a, const Contour& m, Spacing spacing, ApdMode mode)
{
    require_nonempty(a, m, "apd");
    const double forward = mean_of(nearest_distances(a, m, spacing));
    if (mode == ApdMode::Directed)
        return forward;
    return 0.5 * (forward + mean_of(nearest_distances(m, a, spacing)));
}

std::optional<double> good_contour_pct(std::span<const std::optional<double>> apds)
{
    if (apds.empty())
        return std::nullopt;
    std::size_t good = 0;
    for (const auto& v : apds)
        if (v && *v < kGoodContourMm)
            ++good;
    return 100.0 * static_cast<double>(good) / static_cast<double>(apds.size());
}

LabelMask select_label(const LabelMask& labels, std::uint8_t label, bool at_least)
{
    LabelMask out(labels.rows, labels.cols, 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        out.data[i] = at_least ? labels.data[i] >= label : labels.data[i] == label;
    return out;
}

LabelMask largest_component(const LabelMask& mask)
{
    const int rows = mask.rows, cols = mask.cols;
    Grid<int> comp(rows, cols, -1);
    int best = -1;
    std::size_t best_size = 0;
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!mask(r, c) || comp(r, c) >= 0)
                continue;
            const int id = next++;
            std::size_t size = 0;
            stack.assign(1, {r, c});
            comp(r, c) = id;
            while (!stack.empty()) {
                auto [y, x] = stack.back();
                stack.pop_back();
                ++size;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= rows || nx < 0 || nx >= cols)
                            continue;
                        if (mask(ny, nx) && comp(ny, nx) < 0) {
                            comp(ny, nx) = id;
                            stack.emplace_back(ny, nx);
                        }
                    }
            }
            if (size > best_size) {
                best_size = size;
                best = id;
            }
        }
    LabelMask out(rows, cols, 0);
    if (best >= 0)
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data[i] = comp.data[i] == best;
    return out;
}

std::optional<Contour> mask_to_contour(const LabelMask& mask)
{
    const LabelMask blob = largest_component(mask);
    const int rows = blob.rows, cols = blob.cols;
    auto at = [&](int r, int c) -> int {
        return (r >= 0 && r < rows && c >= 0 && c < cols && blob(r, c)) ? 1 : 0;
    };

    // Vertices are cell-edge midpoints; doubling the coordinates keeps them integral.
    using Key = std::pair<int, int>;  // (2y, 2x)
    std::map<Key, std::vector<Key>> adjacency;
    auto link = [&](Key a, Key b) {
        adjacency[a].push_back(b);
        adjacency[b].push_back(a);
    };
    enum Edge { Top, Right, Bottom, Left };
    // Cells span corners (r, c) .. (r+1, c+1) over the zero-padded lattice.
    for (int r = -1; r < rows; ++r)
        for (int c = -1; c < cols; ++c) {
            const int tl = at(r, c), tr = at(r, c + 1), br = at(r + 1, c + 1), bl = at(r + 1, c);
            const int index = tl << 3 | tr << 2 | br << 1 | bl;
            if (index == 0 || index == 15)
                continue;
            auto mid = [&](Edge e) -> Key {
                switch (e) {
                case Top: return {2 * r, 2 * c + 1};
                case Right: return {2 * r + 1, 2 * c + 2};
                case Bottom: return {2 * r + 2, 2 * c + 1};
                default: return {2 * r + 1, 2 * c};
                }
            };
            auto seg = [&](Edge a, Edge b) { link(mid(a), mid(b)); };
            switch (index) {
            case 1: case 14: seg(Left, Bottom); break;
            case 2: case 13: seg(Bottom, Right); break;
            case 3: case 12: seg(Left, Right); break;
            case 4: case 11: seg(Top, Right); break;
            case 6: case 9: seg(Top, Bottom); break;
            case 7: case 8: seg(Left, Top); break;
            // Saddles: diagonal foreground pixels stay joined (8-connectivity).
            case 5: seg(Left, Top); seg(Right, Bottom); break;
            case 10: seg(Top, Right); seg(Bottom, Left); break;
            }
        }
    if (adjacency.empty())
        return std::nullopt;

    std::optional<Contour> best;
    double best_area = -1;
    std::map<Key, bool> visited;
    for (const auto& [start, _] : adjacency) {
        if (visited[start])
            continue;
        Contour loop;
        Key prev = start, cur = start;
        do {
            visited[cur] = true;
            loop.push_back({cur.second / 2.0, cur.first / 2.0});
            const auto& nb = adjacency[cur];
            const Key next = (nb[0] != prev || cur == start) ? nb[0] : nb[1];
            prev = cur;
            cur = next;
        } while (cur != start);
        double area = 0;
        for (std::size_t i = 0; i < loop.size(); ++i) {
            const Point& p = loop[i];
            const Point& q = loop[(i + 1) % loop.size()];
            area += p.x * q.y - q.x * p.y;
        }
        area = std::abs(area) / 2;
        if (area > best_area) {
            best_area = area;
            best = std::move(loop);
        }
    }
    return best;
}

ImageMetrics evaluate_image(std::string id, std::string structure, const LabelMask& pred, const LabelMask& truth,
                            const std::optional<Contour>& pred_contour, const Contour& truth_contour,
                            Spacing spacing, ApdMode mode)
{
    ImageMetrics m;
    m.id = std::move(id);
    m.structure = std::move(structure);
    m.predicted = pred_contour.has_value() && !pred_contour->empty();
    const LabelMask empty(truth.rows, truth.cols, 0);
    const LabelMask& scored = m.predicted ? pred : empty;
    m.dice = dice(scored, truth);
    m.jaccard = jaccard(scored, truth);
    const Confusion c = confusion(scored, truth);
    m.p = c.p;
    m.q = c.q;
    m.ppv = c.ppv;
    m.npv = c.npv;
    if (m.predicted && !truth_contour.empty()) {
        m.apd_mm = apd(*pred_contour, truth_contour, spacing, mode);
        m.hausdorff_mm = hausdorff(*pred_contour, truth_contour, spacing);
        m.good_contour = *m.apd_mm < kGoodContourMm;
    }
    return m;
}

Aggregate aggregate(std::span<const std::optional<double>> values)
{
    Aggregate a;
    double sum = 0;
    for (const auto& v : values)
        if (v) {
            sum += *v;
            ++a.count;
        }
    if (a.count == 0)
        return a;
    const double mean = sum / static_cast<double>(a.count);
    a.mean = mean;
    if (a.count >= 2) {
        double ss = 0;
        for (const auto& v : values)
            if (v)
                ss += (*v - mean) * (*v - mean);
        a.sd = std::sqrt(ss / static_cast<double>(a.count - 1));
    }
    return a;
}

MetricsReport summarize(std::vector<ImageMetrics> images)
{
    MetricsReport report;
    report.images = std::move(images);
    std::vector<std::string> order;
    for (const auto& m : report.images)
        if (std::find(order.begin(), order.end(), m.structure) == order.end())
            order.push_back(m.structure);
    for (const auto& structure : order) {
        std::vector<std::optional<double>> dice, jac, apd, hd, p, q, ppv, npv;
        for (const auto& m : report.images) {
            if (m.structure != structure)
                continue;
            dice.emplace_back(m.dice);
            jac.emplace_back(m.jaccard);
            apd.push_back(m.apd_mm);
            hd.push_back(m.hausdorff_mm);
            p.push_back(m.p);
            q.push_back(m.q);
            ppv.push_back(m.ppv);
            npv.push_back(m.npv);
        }
        StructureSummary s;
        s.structure = structure;
        s.images = dice.size();
        s.dice = aggregate(dice);
        s.jaccard = aggregate(jac);
        s.apd_mm = aggregate(apd);
        s.hausdorff_mm = aggregate(hd);
        s.p = aggregate(p);
        s.q = aggregate(q);
        s.ppv = aggregate(ppv);
        s.npv = aggregate(npv);
        s.good_contour_pct = good_contour_pct(apd);
        report.summaries.push_back(std::move(s));
    }
    return report;
}

namespace {

std::string num(const std::optional<double>& v)
{
    if (!v)
        return "NA";
    std::ostringstream o;
    o.precision(6);
    o << std::fixed << *v;
    return o.str();
}

std::string agg(const Aggregate& a)
{
    return num(a.mean) + " (" + num(a.sd) + ")";
}

}  // namespace

std::string format_report_csv(const MetricsReport& report)
{
    std::ostringstream out;
    out << "id,structure,dice,jaccard,apd_mm,hausdorff_mm,good_contour,p,q,ppv,npv\n";
    for (const auto& m : report.images)
        out << m.id << ',' << m.structure << ',' << num(m.dice) << ',' << num(m.jaccard) << ',' << num(m.apd_mm)
            << ',' << num(m.hausdorff_mm) << ',' << (m.good_contour ? 1 : 0) << ',' << num(m.p) << ','
            << num(m.q) << ',' << num(m.ppv) << ',' << num(m.npv) << '\n';
    for (const auto& s : report.summaries)
        out << "summary," << s.structure << ',' << agg(s.dice) << ',' << agg(s.jaccard) << ',' << agg(s.apd_mm)
            << ',' << agg(s.hausdorff_mm) << ',' << num(s.good_contour_pct) << ',' << agg(s.p) << ','
            << agg(s.q) << ',' << agg(s.ppv) << ',' << agg(s.npv) << '\n';
    return out.str();
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw FormatError("cannot write report " + path.string());
    out << format_report_csv(report);
}

}  // namespace vfcn::metrics
