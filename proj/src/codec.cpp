#include "dba/codec.hpp"

#include <csetjmp>
#include <cstring>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "dba/kernels.hpp"

namespace dba {

namespace {

constexpr unsigned char k_png_magic[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

void png_error_to_exception(png_structp, png_const_charp msg) {
    throw Error(Errc::decode_error, std::string("png: ") + msg);
}

void png_warn_silent(png_structp, png_const_charp) {}

struct PngReadState {
    const unsigned char* data;
    size_t size;
    size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->pos + len > st->size)
        png_error(png, "truncated stream");
    std::memcpy(out, st->data + st->pos, len);
    st->pos += len;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

void png_mem_flush(png_structp) {}

std::string encode_png(const QuantizedImage& q) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_to_exception, png_warn_silent);
    if (!png)
        throw Error(Errc::io_error, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::string out;
    try {
        png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
        png_set_IHDR(png, info, q.width, q.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<png_bytep> rows(q.height);
        for (int y = 0; y < q.height; ++y)
            rows[y] = const_cast<png_bytep>(q.data.data() + static_cast<size_t>(y) * q.width * 3);
        png_write_image(png, rows.data());
        png_write_end(png, info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

QuantizedImage decode_png(std::string_view bytes) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_to_exception, png_warn_silent);
    if (!png)
        throw Error(Errc::io_error, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    PngReadState st{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
    QuantizedImage q;
    try {
        png_set_read_fn(png, &st, png_mem_read);
        png_read_info(png, info);

        png_uint_32 w = png_get_image_width(png, info);
        png_uint_32 h = png_get_image_height(png, info);
        int color = png_get_color_type(png, info);
        int depth = png_get_bit_depth(png, info);

        if (depth == 16)
            png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE)
            png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS))
            png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
        png_read_update_info(png, info);

        if (png_get_rowbytes(png, info) != w * 3)
            throw Error(Errc::decode_error, "png: unexpected row size after transforms");

        q = QuantizedImage(static_cast<int>(h), static_cast<int>(w), 3);
        std::vector<png_bytep> rows(h);
        for (png_uint_32 y = 0; y < h; ++y)
            rows[y] = q.data.data() + static_cast<size_t>(y) * w * 3;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return q;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    longjmp(err->jump, 1);
}

std::string encode_jpeg(const QuantizedImage& q, int quality) {
    jpeg_compress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;

    unsigned char* volatile buf = nullptr;
    unsigned long buf_size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        if (buf)
            free(buf);
        throw Error(Errc::io_error, std::string("jpeg: ") + err.message);
    }

    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, const_cast<unsigned char**>(&buf), &buf_size);
    cinfo.image_width = q.width;
    cinfo.image_height = q.height;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    for (int y = 0; y < q.height; ++y) {
        JSAMPROW row = const_cast<JSAMPROW>(q.data.data() + static_cast<size_t>(y) * q.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);

    std::string out(reinterpret_cast<char*>(buf), buf_size);
    free(buf);
    return out;
}

QuantizedImage decode_jpeg(std::string_view bytes) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(Errc::decode_error, std::string("jpeg: ") + err.message);
    }

    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    if (jpeg_read_header(&cinfo, TRUE) != JPEG_HEADER_OK) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(Errc::decode_error, "jpeg: bad header");
    }
    cinfo.out_color_space = JCS_RGB; // grayscale expands to 3 channels
    jpeg_start_decompress(&cinfo);

    QuantizedImage q(static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width),
                     3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = q.data.data() + static_cast<size_t>(cinfo.output_scanline) * q.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return q;
}

constexpr char k_b64_alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z')
        return c - 'A';
    if (c >= 'a' && c <= 'z')
        return c - 'a' + 26;
    if (c >= '0' && c <= '9')
        return c - '0' + 52;
    if (c == '+')
        return 62;
    if (c == '/')
        return 63;
    return -1;
}

} // namespace

bool looks_like_png(std::string_view bytes) {
    return bytes.size() >= 8 && std::memcmp(bytes.data(), k_png_magic, 8) == 0;
}

bool looks_like_jpeg(std::string_view bytes) {
    return bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
           static_cast<unsigned char>(bytes[1]) == 0xD8 &&
           static_cast<unsigned char>(bytes[2]) == 0xFF;
}

EncodedImage encode_image(const QuantizedImage& q, ImageFormat format, int quality) {
    if (q.channels != 3 || q.data.size() != static_cast<size_t>(q.height) * q.width * 3)
        throw Error(Errc::shape_mismatch, "encode_image: malformed image");
    EncodedImage enc;
    enc.format = format;
    enc.quality = quality;
    switch (format) {
        case ImageFormat::png:
            enc.bytes = encode_png(q);
            break;
        case ImageFormat::jpeg:
            if (quality < 1 || quality > 100)
                throw Error(Errc::contract_violation, "encode_image: quality must be in [1,100]");
            enc.bytes = encode_jpeg(q, quality);
            break;
        default:
            throw Error(Errc::format_unsupported, "encode_image: unknown format");
    }
    return enc;
}

QuantizedImage decode_image(std::string_view bytes) {
    if (looks_like_png(bytes))
        return decode_png(bytes);
    if (looks_like_jpeg(bytes))
        return decode_jpeg(bytes);
    throw Error(Errc::decode_error, "decode_image: not a PNG or JPEG stream");
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 3 <= bytes.size()) {
        uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out += k_b64_alphabet[(v >> 18) & 0x3F];
        out += k_b64_alphabet[(v >> 12) & 0x3F];
        out += k_b64_alphabet[(v >> 6) & 0x3F];
        out += k_b64_alphabet[v & 0x3F];
        i += 3;
    }
    size_t rem = bytes.size() - i;
    if (rem == 1) {
        uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out += k_b64_alphabet[(v >> 18) & 0x3F];
        out += k_b64_alphabet[(v >> 12) & 0x3F];
        out += "==";
    } else if (rem == 2) {
        uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += k_b64_alphabet[(v >> 18) & 0x3F];
        out += k_b64_alphabet[(v >> 12) & 0x3F];
        out += k_b64_alphabet[(v >> 6) & 0x3F];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0)
        throw Error(Errc::base64_error, "base64: length not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        int pad = 0;
        uint32_t v = 0;
        for (int j = 0; j < 4; ++j) {
            char c = text[i + j];
            if (c == '=') {
                // '=' is only legal as the final one or two characters
                if (i + 4 != text.size() || j < 2 || (j == 2 && text[i + 3] != '='))
                    throw Error(Errc::base64_error, "base64: misplaced padding");
                ++pad;
                v <<= 6;
                continue;
            }
            int d = b64_value(c);
            if (d < 0)
                throw Error(Errc::base64_error, "base64: illegal character");
            v = (v << 6) | static_cast<uint32_t>(d);
        }
        out += static_cast<char>((v >> 16) & 0xFF);
        if (pad < 2)
            out += static_cast<char>((v >> 8) & 0xFF);
        if (pad < 1)
            out += static_cast<char>(v & 0xFF);
    }
    return out;
}

ImageTensor resize_bilinear_image(const ImageTensor& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw Error(Errc::contract_violation, "resize_bilinear: output dims must be >= 1");
    ImageTensor out(out_h, out_w, x.channels);
    kernels::resize_bilinear(x.data.data(), x.height, x.width, x.channels, out.data.data(),
                             out_h, out_w);
    return out;
}

} // namespace dba
