#pragma once

#include <filesystem>
#include <string>

#include "ecdg/circuit.hpp"
#include "ecdg/distribution.hpp"

namespace ecdg {

/// Bar chart over flat state index for D != 2, S x S heatmap for D == 2.
/// Presentation only.
void write_distribution_svg(const std::filesystem::path& path, const DiscreteDistribution& dist,
                            const CircuitConfig& cfg, const std::string& title);

}  // namespace ecdg
