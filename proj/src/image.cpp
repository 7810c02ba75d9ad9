// SPDX-License-Identifier: Apache-2.0

#include <formbench/errors.hpp>
#include <formbench/image.hpp>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <openssl/evp.h>

#include <fmt/format.h>

#include <memory>

namespace formbench {

namespace {

Image to_bgr8(Image image)
{
    if (image.depth() != CV_8U)
    {
        Image converted;
        image.convertTo(converted, CV_8U, image.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
        image = converted;
    }
    if (image.channels() == 1)
    {
        Image bgr;
        cv::cvtColor(image, bgr, cv::COLOR_GRAY2BGR);
        return bgr;
    }
    if (image.channels() == 4)
    {
        Image bgr;
        cv::cvtColor(image, bgr, cv::COLOR_BGRA2BGR);
        return bgr;
    }
    return image;
}

} // namespace

ImageSize size_of(const Image& image) noexcept
{
    return ImageSize { image.cols, image.rows };
}

Image load_image(const std::filesystem::path& path)
{
    Image image = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (image.empty())
        throw MissingAsset(path, "image missing or unreadable");
    return to_bgr8(image);
}

void save_png(const std::filesystem::path& path, const Image& image)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto const bytes = encode_png(image);
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f)
        throw Error(fmt::format("cannot write {}", path.string()));
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
}

std::vector<std::uint8_t> encode_png(const Image& image)
{
    std::vector<std::uint8_t> out;
    // Fixed compression level keeps encoded bytes stable across runs.
    if (!cv::imencode(".png", image, out, { cv::IMWRITE_PNG_COMPRESSION, 6 }))
        throw Error("PNG encoding failed");
    return out;
}

Image decode_image(const std::vector<std::uint8_t>& bytes)
{
    Image image = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
    if (image.empty())
        throw Error("image decoding failed");
    return to_bgr8(image);
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int const n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text)
{
    if (text.size() % 4 != 0)
        throw Error("invalid base64 length");
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    int const n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0)
        throw Error("invalid base64 payload");
    std::size_t padding = 0;
    if (!text.empty() && text.back() == '=')
        ++padding;
    if (text.size() > 1 && text[text.size() - 2] == '=')
        ++padding;
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

std::string sha256_hex(std::string_view bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1
        || EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1
        || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw Error("sha256 failed");
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i)
        hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string image_digest(const Image& image)
{
    std::string buffer = fmt::format("{}x{}x{}:", image.cols, image.rows, image.type());
    if (!image.empty())
    {
        Image const contiguous = image.isContinuous() ? image : image.clone();
        buffer.append(reinterpret_cast<const char*>(contiguous.data), contiguous.total() * contiguous.elemSize());
    }
    return sha256_hex(buffer);
}

bool identical(const Image& a, const Image& b)
{
    if (a.size() != b.size() || a.type() != b.type())
        return false;
    if (a.empty())
        return true;
    Image diff;
    cv::absdiff(a, b, diff);
    return cv::countNonZero(diff.reshape(1)) == 0;
}

} // namespace formbench
