#include "graphmask/render.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace graphmask {

namespace {

constexpr std::array<const char*, 10> kPalette = {"#000000", "#1f77b4", "#d62728", "#2ca02c",
                                                  "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                                  "#7f7f7f", "#17becf"};

std::string colour_of(int c) {
  if (c >= 0 && static_cast<std::size_t>(c) < kPalette.size()) return kPalette[static_cast<std::size_t>(c)];
  // Stable fallback for larger palettes.
  std::ostringstream out;
  out << "hsl(" << (c * 47) % 360 << ",60%,45%)";
  return out.str();
}

std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_star_svg(const StarGraphExample& example, const AttributionResult& attribution,
                            const std::string& title) {
  const std::size_t n = example.num_leaves();
  for (const auto& layer : attribution.retained) {
    if (layer.size() != n) {
      throw std::invalid_argument("attribution has " + std::to_string(layer.size()) +
                                  " edges but the example has " + std::to_string(n) + " leaves");
    }
  }
  constexpr double width = 320.0;
  constexpr double height = 360.0;
  constexpr double cx = 160.0;
  constexpr double cy = 170.0;
  constexpr double radius = 120.0;

  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"" << cx << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">"
      << escape(title) << "</text>\n";
  for (std::size_t e = 0; e < n; ++e) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(e) / static_cast<double>(n) -
                         std::numbers::pi / 2.0;
    const double x = cx + radius * std::cos(angle);
    const double y = cy + radius * std::sin(angle);
    bool kept = false;
    for (const auto& layer : attribution.retained) kept = kept || layer[e];
    const std::string colour = colour_of(example.leaf_colors[e]);
    svg << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << cx << "\" y2=\"" << cy
        << "\" stroke=\"" << colour << "\" stroke-width=\"" << (kept ? 4 : 2) << "\" opacity=\""
        << (kept ? "1" : "0.2") << "\"" << (kept ? "" : " stroke-dasharray=\"6 4\"")
        << " data-edge=\"" << e << "\" data-retained=\"" << (kept ? "true" : "false") << "\"/>\n";
    svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"9\" fill=\"" << colour
        << "\" stroke=\"#333333\"/>\n";
  }
  svg << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"12\" fill=\"#ffffff\" "
         "stroke=\"#333333\" stroke-width=\"2\"/>\n";
  svg << "<text x=\"" << cx << "\" y=\"" << height - 28 << "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\">query: "
      << "<tspan fill=\"" << colour_of(example.query.first) << "\">x = " << example.query.first
      << "</tspan>, <tspan fill=\"" << colour_of(example.query.second) << "\">y = "
      << example.query.second << "</tspan>; label " << (example.label ? "true" : "false")
      << ", prediction " << attribution.original_prediction << " / masked "
      << attribution.masked_prediction << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace graphmask
