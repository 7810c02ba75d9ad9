// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <formbench/geometry.hpp>

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace formbench {

/// 8-bit, 3-channel raster (OpenCV BGR channel order in memory; written to
/// disk as RGB PNG).
using Image = cv::Mat;

ImageSize size_of(const Image& image) noexcept;

/// Loads any format OpenCV can decode and converts it to 8-bit 3-channel.
Image load_image(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& image);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_image(const std::vector<std::uint8_t>& bytes);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Hex SHA-256 of raw bytes.
std::string sha256_hex(std::string_view bytes);

/// Hex SHA-256 over the image's dimensions and raw pixel data.
std::string image_digest(const Image& image);

/// Byte-exact comparison of two images (size, type and pixels).
bool identical(const Image& a, const Image& b);

} // namespace formbench
