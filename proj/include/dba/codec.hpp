#pragma once

#include <string>
#include <string_view>

#include "dba/core.hpp"

namespace dba {

enum class ImageFormat { png, jpeg };

struct EncodedImage {
    ImageFormat format = ImageFormat::png;
    std::string bytes;
    int quality = 90; // JPEG only
};

/// PNG is lossless and mandatory; JPEG is baseline at the given quality.
EncodedImage encode_image(const QuantizedImage& q, ImageFormat format, int quality = 90);

/// Sniffs PNG/JPEG magic bytes. Grayscale is expanded to 3 channels,
/// alpha is dropped. Undecodable bytes raise DecodeError.
QuantizedImage decode_image(std::string_view bytes);

bool looks_like_jpeg(std::string_view bytes);
bool looks_like_png(std::string_view bytes);

/// RFC 4648 standard alphabet with padding.
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

ImageTensor resize_bilinear_image(const ImageTensor& x, int out_h, int out_w);

} // namespace dba
