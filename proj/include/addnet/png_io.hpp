#pragma once

#include <filesystem>

#include "addnet/image.hpp"

namespace addnet::io {

/// Reads an 8-bit PNG as gray (1 channel) or RGB (3 channels); alpha is dropped.
ImageXf read_png(const std::filesystem::path& path);

/// Writes 1- or 3-channel images as 8-bit PNG, value = round(255 * clamp(v, 0, 1)).
void write_png(const std::filesystem::path& path, const ImageXf& image);
void write_png(const std::filesystem::path& path, const PlaneXd& gray);

}  // namespace addnet::io
