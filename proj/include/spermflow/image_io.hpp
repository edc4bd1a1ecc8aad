#pragma once

#include <filesystem>

#include "spermflow/media.hpp"

// Binary netpbm (P5 grey, P6 colour, maxval 255). Grey images are expanded
// to RGB on read.
namespace spermflow::media {

PixelFrame read_netpbm(const std::filesystem::path& path);
FrameSize read_netpbm_size(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const PixelFrame& frame);

}  // namespace spermflow::media
