#pragma once

#include <string>

#include "graphmask/attribution.hpp"
#include "graphmask/graphs.hpp"

namespace graphmask {

/// SVG drawing of a star example: centroid in the middle, leaves on a
/// circle in edge order, each edge in its colour. Edges retained in any layer
/// are drawn solid; superfluous edges are faded and dashed. The queried
/// colours are annotated below the graph.
std::string render_star_svg(const StarGraphExample& example, const AttributionResult& attribution,
                            const std::string& title);

}  // namespace graphmask
