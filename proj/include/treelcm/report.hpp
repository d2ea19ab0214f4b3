#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "treelcm/posterior_summary.hpp"

namespace treelcm {

enum class PlotOption { all, tree, profile };

// Throws Error("usage") listing all|tree|profile.
PlotOption parse_plot_option(std::string_view text);
std::string to_string(PlotOption option);

// Layout of the MAP tree and/or the class profiles. Every number the SVG
// shows is stored here; the "primitives" array is what gets drawn.
nlohmann::json build_plot_data(const PosteriorSummary& summary, PlotOption option);
std::string render_svg(const nlohmann::json& plot_data);

}  // namespace treelcm
