#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "skelres/image.hpp"

namespace skelres {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
    (void)png;
    throw IoError(std::string("libpng: ") + msg);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

void save_png(const ActionImage& img, const std::string& path) {
    if (img.height < 1 || img.width < 1 ||
        img.pixels.size() != static_cast<std::size_t>(img.height * img.width * 3))
        throw ShapeError("save_png: malformed image");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot open '" + path + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error,
                                              on_png_warning);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                     static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (Index row = 0; row < img.height; ++row)
            png_write_row(png, const_cast<png_bytep>(img.pixels.data() + row * img.width * 3));
        png_write_end(png, info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

ActionImage load_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open '" + path + "' for reading");

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("'" + path + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error,
                                             on_png_warning);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    ActionImage img;
    try {
        png_init_io(png, file.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);

        if (png_get_bit_depth(png, info) != 8 ||
            png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB)
            throw UnsupportedPngError("'" + path + "' is not an 8-bit RGB PNG");

        img = ActionImage(static_cast<Index>(png_get_image_height(png, info)),
                          static_cast<Index>(png_get_image_width(png, info)));
        std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
        for (Index row = 0; row < img.height; ++row)
            rows[static_cast<std::size_t>(row)] = img.pixels.data() + row * img.width * 3;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace skelres
