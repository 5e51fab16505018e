#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "npt/common.hpp"
#include "npt/evalharness.hpp"

namespace npt {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

std::string pt(double v) { return fmt_f(v, 2); }

std::string line(double x1, double y1, double x2, double y2, const std::string& color,
                 double width = 1.6, const std::string& dash = "") {
    std::string s = str_cat("<line x1=\"", pt(x1), "\" y1=\"", pt(y1), "\" x2=\"", pt(x2),
                            "\" y2=\"", pt(y2), "\" stroke=\"", color, "\" stroke-width=\"",
                            fmt_f(width, 1), "\"");
    if (!dash.empty()) s += str_cat(" stroke-dasharray=\"", dash, "\"");
    return s + "/>\n";
}

std::string polygon(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    std::string s = "<polygon points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) s += ' ';
        s += str_cat(pt(pts[i].first), ',', pt(pts[i].second));
    }
    return s + str_cat("\" fill=\"", color, "\"/>\n");
}

std::string text(double x, double y, const std::string& content, int size,
                 const std::string& anchor, const std::string& transform = "") {
    std::string s = str_cat("<text x=\"", pt(x), "\" y=\"", pt(y), "\" font-size=\"", size,
                            "\" font-family=\"sans-serif\" text-anchor=\"", anchor, "\"");
    if (!transform.empty()) s += str_cat(" transform=\"", transform, "\"");
    return s + str_cat(">", esc(content), "</text>\n");
}

// Paper figure convention: cross=clean, plus=adversarial, circle=elastic,
// square=occlusion, star=noise, triangle=wave, five-pointed star=saturation,
// down-triangle=blur.
std::string marker(const std::string& condition, double x, double y, const std::string& color) {
    const double r = 5.0;
    if (condition == "clean")
        return line(x - r, y - r, x + r, y + r, color) + line(x - r, y + r, x + r, y - r, color);
    if (condition == "adversarial")
        return line(x - r, y, x + r, y, color) + line(x, y - r, x, y + r, color);
    if (condition == "elastic")
        return str_cat("<circle cx=\"", pt(x), "\" cy=\"", pt(y), "\" r=\"", pt(r), "\" fill=\"",
                       color, "\"/>\n");
    if (condition == "occlusion")
        return str_cat("<rect x=\"", pt(x - r), "\" y=\"", pt(y - r), "\" width=\"", pt(2 * r),
                       "\" height=\"", pt(2 * r), "\" fill=\"", color, "\"/>\n");
    if (condition == "gaussian_noise") {
        std::string s;
        for (int k = 0; k < 3; ++k) {
            const double a = kPi * (90.0 + 60.0 * k) / 180.0;
            s += line(x - r * std::cos(a), y + r * std::sin(a), x + r * std::cos(a),
                      y - r * std::sin(a), color);
        }
        return s;
    }
    if (condition == "wave")
        return polygon({{x, y - r}, {x - r, y + r}, {x + r, y + r}}, color);
    if (condition == "saturation") {
        std::vector<std::pair<double, double>> pts;
        for (int k = 0; k < 10; ++k) {
            const double rad = (k % 2 == 0) ? r * 1.2 : r * 0.5;
            const double a = kPi * (-90.0 + 36.0 * k) / 180.0;
            pts.push_back({x + rad * std::cos(a), y + rad * std::sin(a)});
        }
        return polygon(pts, color);
    }
    if (condition == "blur")
        return polygon({{x, y + r}, {x - r, y - r}, {x + r, y - r}}, color);
    // fallback: diamond
    return polygon({{x, y - r}, {x + r, y}, {x, y + r}, {x - r, y}}, color);
}

int condition_rank(const std::string& name) {
    static const std::vector<std::string> order = {"clean", "adversarial",     "elastic",
                                                   "occlusion", "gaussian_noise", "wave",
                                                   "saturation", "blur"};
    for (std::size_t i = 0; i < order.size(); ++i)
        if (order[i] == name) return static_cast<int>(i);
    return static_cast<int>(order.size());
}

std::string series_label(const ExperimentRecord& r) {
    return r.train_kind.empty() ? r.regime : str_cat(r.regime, ':', r.train_kind);
}

const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {
        "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
        "#a6761d", "#666666", "#1f78b4", "#b15928", "#fb9a99", "#6a3d9a"};
    return colors;
}

}  // namespace

std::string render_scatter(const std::vector<ExperimentRecord>& records,
                           const std::string& grouping) {
    if (records.empty()) throw std::invalid_argument("render_scatter: no records");
    if (grouping != "condition" && grouping != "regime")
        throw std::invalid_argument("render_scatter: grouping must be condition or regime");

    std::vector<ExperimentRecord> recs = records;
    std::sort(recs.begin(), recs.end(), [](const ExperimentRecord& a, const ExperimentRecord& b) {
        if (a.regime != b.regime) return a.regime < b.regime;
        if (a.train_kind != b.train_kind) return a.train_kind < b.train_kind;
        return condition_rank(a.condition) < condition_rank(b.condition);
    });

    const auto group_key = [&](const ExperimentRecord& r) {
        return grouping == "condition" ? r.condition : r.regime;
    };

    std::vector<std::string> groups;
    std::vector<std::string> series;
    std::set<std::string> conditions_seen;
    for (const ExperimentRecord& r : recs) {
        if (std::find(groups.begin(), groups.end(), group_key(r)) == groups.end())
            groups.push_back(group_key(r));
        const std::string s = series_label(r);
        if (std::find(series.begin(), series.end(), s) == series.end()) series.push_back(s);
        conditions_seen.insert(r.condition);
    }
    if (grouping == "condition")
        std::sort(groups.begin(), groups.end(), [](const std::string& a, const std::string& b) {
            const int ra = condition_rank(a), rb = condition_rank(b);
            return ra != rb ? ra < rb : a < b;
        });

    std::vector<std::string> cond_list(conditions_seen.begin(), conditions_seen.end());
    std::sort(cond_list.begin(), cond_list.end(), [](const std::string& a, const std::string& b) {
        const int ra = condition_rank(a), rb = condition_rank(b);
        return ra != rb ? ra < rb : a < b;
    });

    double lo = 0.0, hi = 0.0;
    for (const ExperimentRecord& r : recs) {
        lo = std::min(lo, r.delta);
        hi = std::max(hi, r.delta);
    }
    double pad = 0.08 * (hi - lo);
    if (pad == 0.0) pad = 1.0;
    lo -= pad;
    hi += pad;

    const double x0 = 70, x1 = 620, y0 = 30, y1 = 400;
    const double width = 900, height = 470;
    const auto ypix = [&](double v) { return y0 + (hi - v) / (hi - lo) * (y1 - y0); };
    const double gw = (x1 - x0) / static_cast<double>(groups.size());

    std::map<std::string, std::string> color;
    for (std::size_t i = 0; i < series.size(); ++i)
        color[series[i]] = palette()[i % palette().size()];

    std::string svg = str_cat(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"", pt(width), "\" height=\"",
        pt(height), "\" viewBox=\"0 0 ", pt(width), " ", pt(height), "\">\n",
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // axes and ticks
    svg += line(x0, y0, x0, y1, "#000", 1.0);
    svg += line(x0, y1, x1, y1, "#000", 1.0);
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        const double py = ypix(v);
        svg += line(x0 - 4, py, x0, py, "#000", 1.0);
        svg += line(x0, py, x1, py, "#ddd", 0.5);
        svg += text(x0 - 8, py + 3, fmt_f(v, 1), 10, "end");
    }
    if (lo < 0.0 && hi > 0.0) svg += line(x0, ypix(0.0), x1, ypix(0.0), "#888", 1.0, "4,3");
    svg += text(18, (y0 + y1) / 2, "delta (percentage points)", 11, "middle",
                str_cat("rotate(-90 18 ", pt((y0 + y1) / 2), ")"));

    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double gx = x0 + (g + 0.5) * gw;
        svg += text(gx, y1 + 14, groups[g], 10, "end",
                    str_cat("rotate(-30 ", pt(gx), " ", pt(y1 + 14), ")"));
    }

    // markers
    const double spread = std::min(14.0, gw * 0.8 / std::max<std::size_t>(series.size(), 1));
    for (const ExperimentRecord& r : recs) {
        const auto git = std::find(groups.begin(), groups.end(), group_key(r));
        const auto sit = std::find(series.begin(), series.end(), series_label(r));
        const std::size_t gi = git - groups.begin();
        const std::size_t si = sit - series.begin();
        const double gx = x0 + (gi + 0.5) * gw +
                          (static_cast<double>(si) - (series.size() - 1) / 2.0) * spread;
        svg += marker(r.condition, gx, ypix(r.delta), color[series_label(r)]);
    }

    // legend: condition shapes, then series colors
    double ly = y0 + 8;
    const double lx = x1 + 30;
    svg += text(lx, ly, "test condition", 11, "start");
    ly += 14;
    for (const std::string& c : cond_list) {
        svg += marker(c, lx + 6, ly - 3, "#333333");
        svg += text(lx + 18, ly, c, 10, "start");
        ly += 14;
    }
    ly += 8;
    svg += text(lx, ly, "training", 11, "start");
    ly += 14;
    for (const std::string& s : series) {
        svg += str_cat("<rect x=\"", pt(lx), "\" y=\"", pt(ly - 9), "\" width=\"12\" height=\"9\"",
                       " fill=\"", color[s], "\"/>\n");
        svg += text(lx + 18, ly, s, 10, "start");
        ly += 14;
    }

    svg += "</svg>\n";
    return svg;
}

}  // namespace npt
