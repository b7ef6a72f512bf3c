#pragma once

#include <filesystem>
#include <vector>

#include "kanerva/linalg.hpp"

namespace kanerva::images {

/// Binary PGM (P5, maxval 255) of a single pattern with values in [0, 1].
void write_pgm(const std::filesystem::path& path, const Vector& pattern, int width, int height);

/// Tiles grid[r][c] patterns with a one-pixel mid-grey border.
void write_montage(const std::filesystem::path& path, const std::vector<std::vector<Vector>>& grid, int width,
                   int height);

/// Pixels >= 0.5 become 1, the rest 0.
Vector threshold(const Vector& probabilities);

}  // namespace kanerva::images
