#pragma once

// Static SVG figures for evaluation reports.

#include <string>
#include <vector>

#include "dmc/metrics.hpp"
#include "dmc/motion.hpp"

namespace dmc {

struct PlotSeries {
    std::string label;
    MotionSequence motion;
};

/// Lowest-joint height per frame for each series, with the ground line and
/// the contact band shaded.
std::string height_trace_svg(const std::vector<PlotSeries>& series, const ContactParams& params = {});

/// Top-down x/z path of the root joint and both feet. Segment colour runs
/// from blue (first frame) to red (last frame); series differ by stroke.
std::string trajectory_svg(const std::vector<PlotSeries>& series);

}  // namespace dmc
