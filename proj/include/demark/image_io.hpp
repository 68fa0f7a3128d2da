#pragma once

#include "demark/image.hpp"

#include <filesystem>

namespace demark {

// Decode any OpenCV-supported format to RGB (3 channels).
ImageU8 read_image_rgb(const std::filesystem::path& path);

// Decode to single-channel grayscale (masks, alpha maps).
ImageU8 read_image_gray(const std::filesystem::path& path);

// Lossless PNG. 1- or 3-channel input.
void write_png(const std::filesystem::path& path, const ImageU8& img);

bool has_image_extension(const std::filesystem::path& path);

} // namespace demark
