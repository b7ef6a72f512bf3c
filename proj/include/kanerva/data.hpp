#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "kanerva/linalg.hpp"
#include "kanerva/rng.hpp"

namespace kanerva::data {

struct LabelledPatterns {
  Matrix patterns;  // N × D_x, one pattern per row
  std::vector<int> labels;

  Index size() const { return patterns.rows(); }
  Index dim() const { return patterns.cols(); }
};

struct Dataset {
  LabelledPatterns train;
  LabelledPatterns test;

  Index dim() const { return train.dim(); }
};

/// Procedural binary glyphs: random square prototypes upsampled to the
/// glyph side, with independent bit flips per sample.
struct GlyphConfig {
  int side = 8;
  int prototype_side = 4;
  int classes = 16;
  Index train = 2000;
  Index test = 500;
  double flip = 0.12;
};

Dataset make_glyphs(const GlyphConfig& config, std::uint64_t seed);

/// Class prototypes used by `make_glyphs` for the same seed, one per row.
Matrix glyph_prototypes(const GlyphConfig& config, std::uint64_t seed);

/// An exchangeable batch of T patterns, one per row.
struct Episode {
  Matrix patterns;
  std::vector<int> labels;

  Index size() const { return patterns.rows(); }
};

/// Uniform draw of T patterns, without replacement when the pool allows. With
/// `class_count`, the pool is restricted to that many randomly chosen labels.
Episode sample_episode(const LabelledPatterns& source, Index T, std::optional<int> class_count, Rng& rng);

// KDS1: "KDS1", count, D_x, train count (u32 LE), count × D_x pixel bytes,
// then count label bytes. Train patterns come first.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// Reads IDX image (and optional label) files and binarises at `threshold`
/// (pixel > threshold -> 1). The first `train_count` images form the train split.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                 Index train_count, int threshold = 20);

}  // namespace kanerva::data
