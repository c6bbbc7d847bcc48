#include "tdae/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace tdae::io {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void check_raster(const Image8& image) {
    if (image.height == 0 || image.width == 0 || image.pixels.size() != image.height * image.width * 3) {
        throw IoError("image raster size does not match its dimensions");
    }
}

bool has_png_signature(const std::vector<std::uint8_t>& bytes) {
    return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

// libpng reports errors through longjmp; route them to a message and bail out.
void png_error_handler(png_structp png, png_const_charp msg) {
    auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
    if (buf) *buf = msg;
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

struct ReadCursor {
    const std::vector<std::uint8_t>* bytes;
    std::size_t offset;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes->size()) png_error(png, "truncated PNG data");
    std::memcpy(out, cur->bytes->data() + cur->offset, length);
    cur->offset += length;
}

void png_write_to_memory(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

// Skips whitespace and '#' comments in a PNM header, then reads one decimal field.
std::size_t read_pnm_field(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t value = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
        if (++digits > 9) throw IoError("PPM header field too large");
        ++pos;
    }
    if (digits == 0) throw IoError("malformed PPM header");
    return value;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& image) {
    check_raster(image);
    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(image.height);
    for (std::size_t y = 0; y < image.height; ++y) {
        rows[y] = const_cast<png_bytep>(image.pixels.data() + y * image.width * 3);
    }
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode failed: " + error);
    }
    png_set_write_fn(png, &out, png_write_to_memory, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image8 decode_png(const std::vector<std::uint8_t>& bytes) {
    if (!has_png_signature(bytes)) throw IoError("not a PNG file");
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler, png_warning_handler);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    Image8 image;
    ReadCursor cursor{&bytes, 0};
    std::vector<png_bytep> rows;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode failed: " + error);
    }
    png_set_read_fn(png, &cursor, png_read_from_memory);
    png_read_info(png, info);
    const png_byte colour = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (colour == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (colour == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (colour == PNG_COLOR_TYPE_GRAY || colour == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (colour & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    image.width = png_get_image_width(png, info);
    image.height = png_get_image_height(png, info);
    if (png_get_rowbytes(png, info) != image.width * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG layout");
    }
    image.pixels.resize(image.width * image.height * 3);
    rows.resize(image.height);
    for (std::size_t y = 0; y < image.height; ++y) rows[y] = image.pixels.data() + y * image.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

std::vector<std::uint8_t> encode_ppm(const Image8& image) {
    check_raster(image);
    const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

Image8 decode_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError("not a binary PPM (P6) file");
    std::size_t pos = 2;
    Image8 image;
    image.width = read_pnm_field(bytes, pos);
    image.height = read_pnm_field(bytes, pos);
    const std::size_t maxval = read_pnm_field(bytes, pos);
    if (maxval != 255) throw IoError("only 8-bit PPM (maxval 255) is supported");
    if (image.width == 0 || image.height == 0) throw IoError("PPM has zero size");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("malformed PPM header");
    ++pos;
    const std::size_t n = image.width * image.height * 3;
    if (bytes.size() - pos < n) throw IoError("truncated PPM data");
    image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                        bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return image;
}

Image8 read_image(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (has_png_signature(bytes)) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    throw IoError("unrecognized image format: " + path.string());
}

void write_image(const std::filesystem::path& path, const Image8& image) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    write_bytes(path, ext == ".png" ? encode_png(image) : encode_ppm(image));
}

Tensor to_tensor(const Image8& image) {
    check_raster(image);
    std::vector<double> values(image.pixels.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = image.pixels[i] / 255.0;
    return Tensor({image.height, image.width, 3}, std::move(values));
}

Image8 to_image8(const Tensor& image) {
    if (image.rank() != 3 || image.shape()[2] != 3) {
        throw nd::ShapeError("to_image8: expected [H,W,3], got " + nd::to_string(image.shape()));
    }
    Image8 out{image.shape()[0], image.shape()[1], std::vector<std::uint8_t>(image.size())};
    for (std::size_t i = 0; i < image.size(); ++i) {
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(image[i] * 255.0), 0L, 255L));
    }
    return out;
}

Image8 snap_for_export(const Tensor& x0, const Tensor& delta_v, std::int64_t budget_steps) {
    nd::require_same_shape(x0, delta_v, "snap_for_export");
    if (budget_steps < 0) throw std::invalid_argument("snap_for_export: negative budget");
    Image8 out = to_image8(x0);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const std::int64_t d = std::clamp<std::int64_t>(std::llround(delta_v[i] * 255.0), -budget_steps, budget_steps);
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp<std::int64_t>(out.pixels[i] + d, 0, 255));
    }
    return out;
}

std::int64_t max_step_difference(const Image8& a, const Image8& b) {
    if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size()) {
        throw nd::ShapeError("max_step_difference: image sizes differ");
    }
    std::int64_t worst = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        worst = std::max<std::int64_t>(worst, std::abs(static_cast<std::int64_t>(a.pixels[i]) - b.pixels[i]));
    }
    return worst;
}

}  // namespace tdae::io
