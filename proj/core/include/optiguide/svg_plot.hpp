#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "optiguide/guidance_sim.hpp"

namespace optiguide {

// Minimal standalone SVG writer for quick-look plots: the planar trajectory
// with the confidence level as a color track, plus sigma(t) and r(t) panels.
void write_sim_svg(const SimResult& result, const std::filesystem::path& path);

}  // namespace optiguide
