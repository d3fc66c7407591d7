#include "dmc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dmc/errors.hpp"

namespace dmc {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 360;
constexpr double kMargin = 48;

const char* const kStrokes[] = {"", "6 3", "2 3", "10 3 2 3"};
const char* const kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

struct Box {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
    double y0 = x0, y1 = -x0;

    void include(double x, double y) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
    }
    void pad() {
        if (x1 - x0 < 1e-9) x0 -= 0.5, x1 += 0.5;
        if (y1 - y0 < 1e-9) y0 -= 0.5, y1 += 0.5;
        const double px = 0.05 * (x1 - x0), py = 0.05 * (y1 - y0);
        x0 -= px, x1 += px, y0 -= py, y1 += py;
    }
    double sx(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
    double sy(double y) const { return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin); }
};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::ostringstream open_svg(const std::string& title) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\">" << escape(title) << "</text>\n";
    return os;
}

void axes(std::ostringstream& os, const Box& b, const std::string& xlabel, const std::string& ylabel) {
    os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
       << kHeight - 2 * kMargin << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(xlabel)
       << "</text>\n";
    os << "<text x=\"14\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 14 " << kHeight / 2
       << ")\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
    std::ostringstream lo, hi;
    lo << std::setprecision(3) << b.y0;
    hi << std::setprecision(3) << b.y1;
    os << "<text x=\"" << kMargin - 4 << "\" y=\"" << b.sy(b.y0) << "\" text-anchor=\"end\">" << lo.str() << "</text>\n";
    os << "<text x=\"" << kMargin - 4 << "\" y=\"" << b.sy(b.y1) + 10 << "\" text-anchor=\"end\">" << hi.str()
       << "</text>\n";
}

void legend(std::ostringstream& os, const std::vector<PlotSeries>& series, bool coloured) {
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double y = kMargin + 14 + 16 * static_cast<double>(i);
        os << "<line x1=\"" << kWidth - kMargin - 150 << "\" y1=\"" << y - 4 << "\" x2=\"" << kWidth - kMargin - 122
           << "\" y2=\"" << y - 4 << "\" stroke=\"" << (coloured ? kColours[i % 5] : "#444")
           << "\" stroke-width=\"2\" stroke-dasharray=\"" << kStrokes[i % 4] << "\"/>\n";
        os << "<text x=\"" << kWidth - kMargin - 116 << "\" y=\"" << y << "\">" << escape(series[i].label)
           << "</text>\n";
    }
}

std::string gradient_colour(double u) {
    const int r = static_cast<int>(std::lround(40 + 200 * u));
    const int b = static_cast<int>(std::lround(240 - 200 * u));
    std::ostringstream os;
    os << "rgb(" << r << ",60," << b << ')';
    return os.str();
}

}  // namespace

std::string height_trace_svg(const std::vector<PlotSeries>& series, const ContactParams& params) {
    if (series.empty()) throw UsageError("height trace: no series");
    std::vector<Vector> heights;
    Box box;
    box.include(0, -params.contact_height_threshold);
    box.include(0, params.contact_height_threshold);
    for (const auto& s : series) {
        heights.push_back(lowest_joint_heights(s.motion));
        for (Index t = 0; t < heights.back().size(); ++t) box.include(static_cast<double>(t), heights.back()(t));
    }
    box.pad();
    auto os = open_svg("Lowest-joint height per frame");
    const double band_top = box.sy(params.contact_height_threshold);
    const double band_bottom = box.sy(-params.contact_height_threshold);
    os << "<rect x=\"" << kMargin << "\" y=\"" << band_top << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
       << band_bottom - band_top << "\" fill=\"#eee\"/>\n";
    os << "<line x1=\"" << kMargin << "\" y1=\"" << box.sy(0) << "\" x2=\"" << kWidth - kMargin << "\" y2=\""
       << box.sy(0) << "\" stroke=\"#000\" stroke-width=\"1\"/>\n";
    axes(os, box, "frame", "height (m)");
    for (std::size_t i = 0; i < heights.size(); ++i) {
        os << "<polyline fill=\"none\" stroke=\"" << kColours[i % 5] << "\" stroke-width=\"1.5\" stroke-dasharray=\""
           << kStrokes[i % 4] << "\" points=\"";
        for (Index t = 0; t < heights[i].size(); ++t) {
            os << box.sx(static_cast<double>(t)) << ',' << box.sy(heights[i](t)) << ' ';
        }
        os << "\"/>\n";
    }
    legend(os, series, true);
    os << "</svg>\n";
    return os.str();
}

std::string trajectory_svg(const std::vector<PlotSeries>& series) {
    if (series.empty()) throw UsageError("trajectory: no series");
    Box box;
    for (const auto& s : series) {
        const int feet[] = {0, s.motion.skeleton->left_foot(), s.motion.skeleton->right_foot()};
        for (int j : feet)
            for (Index t = 0; t < s.motion.frame_count(); ++t) box.include(s.motion.frames(t, 3 * j), s.motion.frames(t, 3 * j + 2));
    }
    // Equal scale on both axes.
    const double span = std::max(box.x1 - box.x0, box.y1 - box.y0);
    const double cx = 0.5 * (box.x0 + box.x1), cy = 0.5 * (box.y0 + box.y1);
    const double aspect = (kWidth - 2 * kMargin) / (kHeight - 2 * kMargin);
    box.x0 = cx - 0.5 * span * aspect, box.x1 = cx + 0.5 * span * aspect;
    box.y0 = cy - 0.5 * span, box.y1 = cy + 0.5 * span;
    box.pad();

    auto os = open_svg("Ground-plane trajectory (blue = start, red = end)");
    axes(os, box, "x (m)", "z (m)");
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& m = series[i].motion;
        const Index T = m.frame_count();
        const int joints[] = {0, m.skeleton->left_foot(), m.skeleton->right_foot()};
        for (int j : joints) {
            const double width = j == 0 ? 2.0 : 1.0;
            for (Index t = 0; t + 1 < T; ++t) {
                const double u = T > 2 ? static_cast<double>(t) / static_cast<double>(T - 2) : 0.0;
                os << "<line x1=\"" << box.sx(m.frames(t, 3 * j)) << "\" y1=\"" << box.sy(m.frames(t, 3 * j + 2))
                   << "\" x2=\"" << box.sx(m.frames(t + 1, 3 * j)) << "\" y2=\"" << box.sy(m.frames(t + 1, 3 * j + 2))
                   << "\" stroke=\"" << gradient_colour(u) << "\" stroke-width=\"" << width
                   << "\" stroke-dasharray=\"" << kStrokes[i % 4] << "\"/>\n";
            }
        }
    }
    legend(os, series, false);
    os << "</svg>\n";
    return os.str();
}

}  // namespace dmc
