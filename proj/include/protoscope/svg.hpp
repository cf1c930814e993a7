#pragma once

// Static SVG emitters for the three report figures: per-model beeswarm,
// top-five weighted bars, and the cross-model bubble summary. Output is
// plain text and deterministic (beeswarm jitter derives from the seed).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "protoscope/rng.hpp"
#include "protoscope/shap.hpp"

namespace protoscope::svg {

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

/// Low values blue, high values red, matching the usual SHAP palette.
inline std::string value_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(31.0 + t * (214.0 - 31.0)));
    const int g = static_cast<int>(std::lround(119.0 + t * (39.0 - 119.0)));
    const int b = static_cast<int>(std::lround(180.0 + t * (40.0 - 180.0)));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

inline std::string direction_color(shap::Direction d) {
    switch (d) {
        case shap::Direction::direct: return "#d62728";  // red
        case shap::Direction::inverse: return "#1f77b4"; // blue
        default: return "#9a9a9a";                       // gray
    }
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

inline std::string header(int width, int height, const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
           std::to_string(width) + " " + std::to_string(height) +
           "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"16\" y=\"22\" "
           "font-family=\"sans-serif\" font-size=\"14\" font-weight=\"bold\">" +
           escape(title) + "</text>\n";
}

} // namespace detail

/// One horizontal band per feature (importance order), points at x ~ phi with
/// seeded vertical jitter, colored by the normalized feature value.
inline std::string beeswarm_svg(const shap::Attribution& attribution,
                                const std::vector<std::vector<double>>& X,
                                const std::string& title, std::uint64_t seed) {
    const auto points = shap::beeswarm_data(attribution, X);
    std::size_t n_features = 0;
    double max_abs = 1e-12;
    for (const auto& p : points) {
        n_features = std::max(n_features, p.feature_rank + 1);
        max_abs = std::max(max_abs, std::abs(p.phi));
    }
    const int row_height = 26;
    const int left = 170, right = 40, top = 40;
    const int plot_width = 420;
    const int width = left + plot_width + right;
    const int height = top + row_height * static_cast<int>(n_features) + 30;

    std::string out = detail::header(width, height, title);
    const double mid = left + plot_width / 2.0;
    out += "<line x1=\"" + detail::num(mid) + "\" y1=\"" + std::to_string(top - 8) +
           "\" x2=\"" + detail::num(mid) + "\" y2=\"" +
           std::to_string(height - 26) + "\" stroke=\"#cccccc\"/>\n";

    std::vector<bool> labeled(n_features, false);
    rng::Stream jitter(seed, 0xBEE5);
    for (const auto& p : points) {
        const double cy = top + row_height * (static_cast<double>(p.feature_rank) + 0.5) +
                          jitter.uniform(-row_height * 0.28, row_height * 0.28);
        const double cx = mid + (p.phi / max_abs) * (plot_width / 2.0 - 10.0);
        if (!labeled[p.feature_rank]) {
            labeled[p.feature_rank] = true;
            out += "<text x=\"8\" y=\"" +
                   detail::num(top + row_height * (static_cast<double>(p.feature_rank) + 0.5) + 4) +
                   "\" font-family=\"sans-serif\" font-size=\"11\">" +
                   detail::escape(p.feature) + "</text>\n";
        }
        out += "<circle cx=\"" + detail::num(cx) + "\" cy=\"" + detail::num(cy) +
               "\" r=\"2.4\" fill=\"" + detail::value_color(p.color) +
               "\" fill-opacity=\"0.8\"/>\n";
    }
    out += "<text x=\"" + detail::num(mid - 48) + "\" y=\"" + std::to_string(height - 8) +
           "\" font-family=\"sans-serif\" font-size=\"11\">SHAP value (probability)</text>\n";
    out += "</svg>\n";
    return out;
}

/// Grouped horizontal bars: each model's top five features scaled by the
/// F1-weighted rank score.
inline std::string top5_bar_svg(const shap::TrendSummary& summary, const std::string& title) {
    struct Bar {
        std::string model;
        std::string feature;
        double weight;
    };
    std::vector<Bar> bars;
    for (const auto& model : summary.models) {
        std::vector<const shap::TrendCell*> cells;
        for (const auto& cell : summary.cells)
            if (cell.model == model && cell.rank <= 5) cells.push_back(&cell);
        std::sort(cells.begin(), cells.end(),
                  [](const auto* a, const auto* b) { return a->rank < b->rank; });
        for (const auto* c : cells) bars.push_back({model, c->feature, c->impact_weight});
    }
    double max_weight = 1e-12;
    for (const auto& b : bars) max_weight = std::max(max_weight, b.weight);

    const int row_height = 18;
    const int left = 220, top = 40;
    const int plot_width = 380;
    const int width = left + plot_width + 40;
    const int height = top + row_height * static_cast<int>(bars.size()) + 20;
    std::string out = detail::header(width, height, title);
    std::string last_model;
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double y = top + row_height * static_cast<double>(i);
        if (bars[i].model != last_model) {
            last_model = bars[i].model;
            out += "<text x=\"8\" y=\"" + detail::num(y + 13) +
                   "\" font-family=\"sans-serif\" font-size=\"12\" font-weight=\"bold\">" +
                   detail::escape(bars[i].model) + "</text>\n";
        }
        out += "<text x=\"52\" y=\"" + detail::num(y + 13) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" +
               detail::escape(bars[i].feature) + "</text>\n";
        out += "<rect x=\"" + std::to_string(left) + "\" y=\"" + detail::num(y + 3) +
               "\" width=\"" + detail::num(plot_width * bars[i].weight / max_weight) +
               "\" height=\"" + std::to_string(row_height - 6) +
               "\" fill=\"#4c78a8\"/>\n";
        out += "<text x=\"" +
               detail::num(left + plot_width * bars[i].weight / max_weight + 6) + "\" y=\"" +
               detail::num(y + 13) + "\" font-family=\"sans-serif\" font-size=\"10\">" +
               detail::num(bars[i].weight) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

/// Bubble grid: models on the horizontal axis, the pre-reduction feature
/// universe on the vertical axis. Radius tracks the F1-weighted rank score;
/// red = direct, blue = inverse, gray = no trend. A feature removed by
/// reduction simply has no bubble.
inline std::string bubble_svg(const shap::TrendSummary& summary, const std::string& title) {
    const int cell = 46;
    const int left = 170, top = 60;
    const int width = left + cell * static_cast<int>(summary.models.size()) + 50;
    const int height = top + cell * static_cast<int>(summary.feature_universe.size()) + 40;
    std::string out = detail::header(width, height, title);

    for (std::size_t m = 0; m < summary.models.size(); ++m)
        out += "<text x=\"" + detail::num(left + cell * (static_cast<double>(m) + 0.5) - 12) +
               "\" y=\"" + std::to_string(top - 12) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" +
               detail::escape(summary.models[m]) + "</text>\n";
    for (std::size_t f = 0; f < summary.feature_universe.size(); ++f)
        out += "<text x=\"8\" y=\"" +
               detail::num(top + cell * (static_cast<double>(f) + 0.5) + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" +
               detail::escape(summary.feature_universe[f]) + "</text>\n";

    double max_weight = 1e-12;
    for (const auto& c : summary.cells) max_weight = std::max(max_weight, c.impact_weight);
    for (const auto& c : summary.cells) {
        std::size_t m = summary.models.size(), f = summary.feature_universe.size();
        for (std::size_t i = 0; i < summary.models.size(); ++i)
            if (summary.models[i] == c.model) m = i;
        for (std::size_t i = 0; i < summary.feature_universe.size(); ++i)
            if (summary.feature_universe[i] == c.feature) f = i;
        if (m == summary.models.size() || f == summary.feature_universe.size()) continue;
        const double radius = 3.0 + 17.0 * (c.impact_weight / max_weight);
        out += "<circle cx=\"" + detail::num(left + cell * (static_cast<double>(m) + 0.5)) +
               "\" cy=\"" + detail::num(top + cell * (static_cast<double>(f) + 0.5)) +
               "\" r=\"" + detail::num(radius) + "\" fill=\"" +
               detail::direction_color(c.direction) + "\" fill-opacity=\"0.85\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

} // namespace protoscope::svg
