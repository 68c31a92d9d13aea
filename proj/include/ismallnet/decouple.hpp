#pragma once

#include <filesystem>

#include "ismallnet/plane.hpp"

namespace ismallnet {

/// GT mask split into a centre-weighted interior map and an edge-weighted
/// boundary map with interior + boundary == gt.
struct DecoupledLabel {
  BinaryMask gt;
  RealMap interior;
  RealMap boundary;
};

/// Exact Euclidean distance from every foreground pixel to the nearest
/// background pixel (0 on background). A mask without any background pixel
/// gets the sentinel max(H, W) everywhere.
RealMap distance_to_background(const BinaryMask& mask);

/// Per 8-connected component c: interior = d / max_c(d), boundary = 1 - interior.
DecoupledLabel decouple(const BinaryMask& mask);

/// Cache container with float32 arrays `interior` and `boundary` of shape [H, W].
void save_decoupled(const std::filesystem::path& path, const DecoupledLabel& label);
/// Reads a cache written by save_decoupled; `gt` supplies the mask the maps belong to.
DecoupledLabel load_decoupled(const std::filesystem::path& path, const BinaryMask& gt);

}  // namespace ismallnet
