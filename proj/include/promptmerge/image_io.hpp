#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pm {

struct DocumentImage;

struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 1; // 1 = gray, 4 = RGBA
    std::vector<std::uint8_t> data;
};

// Format chosen by extension: .png (lossless, libpng) or .pgm/.ppm-style
// binary portable graymap. RGBA images are PNG only.
void write_image(const std::filesystem::path& path, const RasterImage& image);
RasterImage read_image(const std::filesystem::path& path);

// Pages are stored dark-on-light: byte = 255 * (1 - ink).
RasterImage page_to_raster(const DocumentImage& page);
void raster_to_page(const RasterImage& raster, DocumentImage& page);

} // namespace pm
