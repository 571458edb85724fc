#include "vce/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace vce {

namespace {

constexpr char kMagic[] = "VCEF1\n";

static_assert(std::endian::native == std::endian::little,
              "portable-float writer assumes a little-endian host");

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_pfloat(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_pfloat: cannot open " + path.string() + " for writing");
    os << kMagic << img.height() << " " << img.width() << "\n";
    os.write(reinterpret_cast<const char*>(img.data()),
             static_cast<std::streamsize>(img.numel() * sizeof(float)));
    if (!os) throw IoError("save_pfloat: write failed for " + path.string());
}

GrayImage load_pfloat(const std::filesystem::path& path, std::optional<ValueRange> declared) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_pfloat: cannot open " + path.string());
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kMagic, 6) != 0)
        throw IoError("load_pfloat: bad magic in " + path.string());
    long h = 0, w = 0;
    is >> h >> w;
    is.ignore(1);  // newline after dims
    if (!is || h < 1 || w < 1 || h > 1 << 20 || w > 1 << 20)
        throw IoError("load_pfloat: bad dimensions in " + path.string());
    std::vector<float> pix(static_cast<size_t>(h) * static_cast<size_t>(w));
    is.read(reinterpret_cast<char*>(pix.data()),
            static_cast<std::streamsize>(pix.size() * sizeof(float)));
    if (!is) throw IoError("load_pfloat: truncated payload in " + path.string());

    ValueRange range;
    if (declared) {
        range = *declared;
    } else {
        float lo = std::numeric_limits<float>::infinity();
        float hi = -lo;
        for (float v : pix) {
            if (!std::isfinite(v))
                throw ValidationError("load_pfloat: non-finite pixel in " + path.string());
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        range = ValueRange{lo, hi};
    }
    try {
        return GrayImage(static_cast<int>(h), static_cast<int>(w), range, std::move(pix));
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(e.what()) + " (file: " + path.string() + ")");
    }
}

void save_png16(const GrayImage& img, const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("save_png16: cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("save_png16: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("save_png16: libpng write error for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const ValueRange r = img.range();
    const float scale = r.width() > 0.0f ? 65535.0f / r.width() : 0.0f;
    std::vector<uint16_t> row(static_cast<size_t>(img.width()));
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            float v = (img.at(y, x) - r.lo) * scale;
            v = std::clamp(v, 0.0f, 65535.0f);
            uint16_t q = static_cast<uint16_t>(std::lround(v));
            row[static_cast<size_t>(x)] = static_cast<uint16_t>((q >> 8) | (q << 8));  // big-endian
        }
        png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

GrayImage load_png16(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("load_png16: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("load_png16: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("load_png16: libpng read error for " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(png, info) != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("load_png16: " + path.string() + " is not 16-bit grayscale");
    }
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<float> pix(static_cast<size_t>(h) * w);
    std::vector<uint16_t> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, reinterpret_cast<png_bytep>(row.data()), nullptr);
        for (int x = 0; x < w; ++x) {
            uint16_t be = row[static_cast<size_t>(x)];
            uint16_t q = static_cast<uint16_t>((be >> 8) | (be << 8));
            pix[static_cast<size_t>(y) * w + x] = static_cast<float>(q) / 65535.0f;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return GrayImage(h, w, kUnitRange, std::move(pix));
}

void save_png_rgb8(const std::vector<uint8_t>& rgb, int height, int width,
                   const std::filesystem::path& path) {
    if (rgb.size() != static_cast<size_t>(height) * width * 3)
        throw ValidationError("save_png_rgb8: buffer size does not match dimensions");
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("save_png_rgb8: cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("save_png_rgb8: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("save_png_rgb8: libpng write error for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<size_t>(y) * width * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_image(const GrayImage& img, const std::filesystem::path& path, ImageFormat format) {
    switch (format) {
        case ImageFormat::PortableFloat: save_pfloat(img, path); return;
        case ImageFormat::Png16: save_png16(img, path); return;
    }
    throw ValidationError("save_image: unknown format");
}

PairedSample load_sample(const std::filesystem::path& path_x,
                         const std::filesystem::path& path_y,
                         const std::optional<std::filesystem::path>& path_s,
                         const std::string& patient_id) {
    GrayImage x = load_pfloat(path_x);
    GrayImage y = load_pfloat(path_y);
    if (!x.same_shape(y))
        throw ValidationError("load_sample: shape mismatch between " + path_x.string() + " and " +
                              path_y.string());
    LesionMask s = LesionMask::zeros(x.height(), x.width());
    if (path_s) {
        GrayImage raw = load_pfloat(*path_s);
        if (!x.same_shape(raw))
            throw ValidationError("load_sample: mask shape mismatch in " + path_s->string());
        std::vector<uint8_t> bits(raw.numel());
        for (size_t i = 0; i < bits.size(); ++i) {
            float v = raw.pixels()[i];
            if (v != 0.0f && v != 1.0f)
                throw ValidationError("load_sample: non-binary mask value in " + path_s->string());
            bits[i] = v != 0.0f ? 1 : 0;
        }
        s = LesionMask(x.height(), x.width(), std::move(bits));
    }
    return PairedSample::make(std::move(x), std::move(y), std::move(s), patient_id);
}

}  // namespace vce
