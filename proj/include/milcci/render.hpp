#pragma once

#include <string>
#include <vector>

#include "milcci/data.hpp"

namespace milcci {

// Static SVG report for a fitted model: one heatmap per component variant
// (channels down, components across, diverging color scale) and a polyline
// panel of one trial's traces. Pure string generation, no I/O.
std::string render_model_svg(const ModelState& state,
                             const std::vector<CategorySpec>& categories,
                             const Matrix* trace_example, const std::string& trace_title);

}  // namespace milcci
