#include "promptmerge/image_io.hpp"

#include "promptmerge/doc_synth.hpp"
#include "promptmerge/errors.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

namespace pm {

namespace {

std::string extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, const RasterImage& image) {
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw IoError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write failed: " + path.string());
    }
    png_init_io(png, file.get());
    const int color = image.channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    for (int r = 0; r < image.height; ++r)
        png_write_row(png, const_cast<png_bytep>(image.data.data() + stride * static_cast<std::size_t>(r)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

RasterImage read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw IoError("cannot open: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng read failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    RasterImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = 1;
    img.data.resize(static_cast<std::size_t>(img.width) * img.height);
    for (int r = 0; r < img.height; ++r)
        png_read_row(png, img.data.data() + static_cast<std::size_t>(r) * img.width, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_pgm(const std::filesystem::path& path, const RasterImage& image) {
    if (image.channels != 1) throw IoError("portable graymap output requires a single channel");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
}

RasterImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string magic;
    int maxval = 0;
    RasterImage img;
    in >> magic >> img.width >> img.height >> maxval;
    if (magic != "P5" || maxval != 255 || img.width <= 0 || img.height <= 0)
        throw IoError("unsupported portable graymap: " + path.string());
    in.get();
    img.data.resize(static_cast<std::size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!in) throw IoError("truncated portable graymap: " + path.string());
    return img;
}

} // namespace

void write_image(const std::filesystem::path& path, const RasterImage& image) {
    const std::string ext = extension(path);
    if (ext == ".png") return write_png(path, image);
    if (ext == ".pgm") return write_pgm(path, image);
    throw IoError("unsupported image extension: " + path.string());
}

RasterImage read_image(const std::filesystem::path& path) {
    const std::string ext = extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm") return read_pgm(path);
    throw IoError("unsupported image extension: " + path.string());
}

RasterImage page_to_raster(const DocumentImage& page) {
    RasterImage img;
    img.width = page.width;
    img.height = page.height;
    img.channels = 1;
    img.data.resize(page.pixels.size());
    for (std::size_t i = 0; i < page.pixels.size(); ++i)
        img.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - page.pixels[i])));
    return img;
}

void raster_to_page(const RasterImage& raster, DocumentImage& page) {
    if (raster.channels != 1) throw IoError("page images must be grayscale");
    page.width = raster.width;
    page.height = raster.height;
    page.pixels.resize(raster.data.size());
    for (std::size_t i = 0; i < raster.data.size(); ++i)
        page.pixels[i] = 1.0f - static_cast<float>(raster.data[i]) / 255.0f;
}

} // namespace pm
