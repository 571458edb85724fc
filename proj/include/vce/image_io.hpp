#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "vce/image.hpp"

namespace vce {

enum class ImageFormat { PortableFloat, Png16 };

// Portable-float container: ASCII magic "VCEF1\n", then "H W\n", then
// H*W little-endian float32 values, row-major. Lossless round trip.
void save_pfloat(const GrayImage& img, const std::filesystem::path& path);

// When `declared` is absent the loaded image declares the tight range of the
// data it contains.
GrayImage load_pfloat(const std::filesystem::path& path,
                      std::optional<ValueRange> declared = std::nullopt);

// 16-bit grayscale PNG; pixels are mapped from the image's declared range to
// [0, 65535]. Loading maps back to [0, 1].
void save_png16(const GrayImage& img, const std::filesystem::path& path);
GrayImage load_png16(const std::filesystem::path& path);

// 8-bit RGB PNG used for rendered heatmaps. `rgb` is height*width*3.
void save_png_rgb8(const std::vector<uint8_t>& rgb, int height, int width,
                   const std::filesystem::path& path);

void save_image(const GrayImage& img, const std::filesystem::path& path, ImageFormat format);

// Loads a validated sample from portable-float files. A missing mask path
// yields an all-zero mask (has_lesion = false). Shape mismatches and
// non-finite pixels are rejected with the offending file named.
PairedSample load_sample(const std::filesystem::path& path_x,
                         const std::filesystem::path& path_y,
                         const std::optional<std::filesystem::path>& path_s,
                         const std::string& patient_id);

}  // namespace vce
