#include "depthfuse/depth_png.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>

#include "depthfuse/errors.hpp"

namespace depthfuse {
namespace {

struct MemReader {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->offset + n > r->bytes.size()) {
        png_error(png, "read past end of buffer");
    }
    std::memcpy(out, r->bytes.data() + r->offset, n);
    r->offset += n;
}

void write_callback(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp png, png_const_charp msg) {
    // Jump back to the guarded region; the message is recovered there.
    longjmp(png_jmpbuf(png), 1);
    (void)msg;
}

void warning_callback(png_structp, png_const_charp) {}

/// Decode a 16-bit grayscale PNG into raw u16 samples (native order).
struct RawImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint16_t> samples;
};

RawImage decode_gray16(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw CodecError("not a PNG stream");
    }
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    if (!png) throw CodecError("libpng read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw CodecError("libpng info struct allocation failed");
    }

    MemReader reader{bytes, 0};
    std::vector<std::uint8_t> rowbuf;
    RawImage img;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw CodecError("malformed PNG stream");
    }

    png_set_read_fn(png, &reader, read_callback);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("expected 16-bit single-channel PNG, got bit depth " +
                          std::to_string(bit_depth) + ", color type " +
                          std::to_string(color_type));
    }

    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    img.height = static_cast<int>(h);
    img.width = static_cast<int>(w);
    img.samples.resize(static_cast<std::size_t>(h) * w);
    rowbuf.resize(png_get_rowbytes(png, info));

    std::vector<png_bytep> rows(h);
    std::vector<std::uint8_t> all(static_cast<std::size_t>(h) * rowbuf.size());
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = all.data() + static_cast<std::size_t>(r) * rowbuf.size();
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    // PNG stores 16-bit samples big-endian.
    for (std::size_t r = 0; r < h; ++r) {
        const std::uint8_t* src = all.data() + r * (static_cast<std::size_t>(w) * 2);
        for (std::size_t c = 0; c < w; ++c) {
            img.samples[r * w + c] =
                static_cast<std::uint16_t>((src[2 * c] << 8) | src[2 * c + 1]);
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_gray16(int height, int width,
                                        std::span<const std::uint16_t> samples) {
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
    if (!png) throw CodecError("libpng write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw CodecError("libpng info struct allocation failed");
    }

    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw CodecError("PNG encoding failed");
    }

    png_set_write_fn(png, &out, write_callback, flush_callback);
    // Fixed settings keep the byte stream deterministic for identical input.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * 2);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const std::uint16_t s = samples[static_cast<std::size_t>(r) * width + c];
            row[2 * c] = static_cast<std::uint8_t>(s >> 8);
            row[2 * c + 1] = static_cast<std::uint8_t>(s & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_depth_png(const DepthMap& map) {
    std::vector<std::uint16_t> samples(map.pixel_count());
    auto values = map.values();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const long stored = std::lround(values[i] * 256.0);
        if (stored > 65535) {
            throw RangeError("depth " + std::to_string(values[i]) +
                             " m does not fit 16-bit storage (must be < 256 m)");
        }
        samples[i] = static_cast<std::uint16_t>(stored);
    }
    return encode_gray16(map.height(), map.width(), samples);
}

DepthMap decode_depth_png(std::span<const std::uint8_t> bytes) {
    RawImage img = decode_gray16(bytes);
    DepthMap map(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const std::uint16_t s = img.samples[static_cast<std::size_t>(r) * img.width + c];
            if (s != 0) map.set(r, c, static_cast<double>(s) / 256.0);
        }
    }
    return map;
}

std::vector<std::uint8_t> encode_confidence_png(const ConfidenceMap& map) {
    std::vector<std::uint16_t> samples(map.pixel_count());
    auto values = map.values();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<std::uint16_t>(std::lround(values[i] * 65535.0));
    }
    return encode_gray16(map.height(), map.width(), samples);
}

ConfidenceMap decode_confidence_png(std::span<const std::uint8_t> bytes) {
    RawImage img = decode_gray16(bytes);
    ConfidenceMap map(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const std::uint16_t s = img.samples[static_cast<std::size_t>(r) * img.width + c];
            map.set(r, c, static_cast<double>(s) / 65535.0);
        }
    }
    return map;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

DepthMap load_depth_png(const std::filesystem::path& path) {
    try {
        return decode_depth_png(read_file(path));
    } catch (const CodecError& e) {
        throw CodecError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_depth_png(const std::filesystem::path& path, const DepthMap& map) {
    write_file(path, encode_depth_png(map));
}

ConfidenceMap load_confidence_png(const std::filesystem::path& path) {
    try {
        return decode_confidence_png(read_file(path));
    } catch (const CodecError& e) {
        throw CodecError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_confidence_png(const std::filesystem::path& path, const ConfidenceMap& map) {
    write_file(path, encode_confidence_png(map));
}

}  // namespace depthfuse
