// SPDX-License-Identifier: Apache-2.0

#include <formbench/errors.hpp>
#include <formbench/geometry.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace formbench {

namespace {

void check_dimensions(ImageSize size)
{
    if (size.width <= 0 || size.height <= 0)
        throw InvalidImageDimensions(fmt::format("invalid image dimensions {}x{}", size.width, size.height));
}

// Rounds [lo, hi) to integers on [0, extent] keeping at least one pixel.
std::pair<int, int> to_pixels(double lo, double hi, int extent)
{
    int a = static_cast<int>(std::lround(lo * extent));
    int b = static_cast<int>(std::lround(hi * extent));
    a = std::clamp(a, 0, extent);
    b = std::clamp(b, 0, extent);
    if (b <= a)
    {
        // Sub-pixel span: take the pixel holding its midpoint.
        a = std::clamp(static_cast<int>(std::floor((lo + hi) / 2.0 * extent)), 0, extent - 1);
        b = a + 1;
    }
    return {a, b};
}

} // namespace

bool Point::in_unit_square() const noexcept
{
    return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0;
}

BBox::BBox(double x0, double y0, double x1, double y1): x0_(x0), y0_(y0), x1_(x1), y1_(y1)
{
    bool const finite = std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1);
    if (!finite || !(x0 < x1) || !(y0 < y1))
        throw InvalidGeometry(fmt::format("degenerate box ({}, {}, {}, {})", x0, y0, x1, y1));
}

bool BBox::within_unit() const noexcept
{
    return x0_ >= 0.0 && y0_ >= 0.0 && x1_ <= 1.0 && y1_ <= 1.0;
}

bool PixelBBox::valid_for(ImageSize size) const noexcept
{
    return 0 <= px0 && px0 < px1 && px1 <= size.width && 0 <= py0 && py0 < py1 && py1 <= size.height;
}

Point center(const BBox& box) noexcept
{
    return Point { (box.x0() + box.x1()) / 2.0, (box.y0() + box.y1()) / 2.0 };
}

bool contains(const BBox& box, Point p) noexcept
{
    return box.x0() <= p.x && p.x <= box.x1() && box.y0() <= p.y && p.y <= box.y1();
}

bool encloses(const BBox& outer, const BBox& inner) noexcept
{
    return outer.x0() <= inner.x0() && outer.y0() <= inner.y0() && inner.x1() <= outer.x1()
           && inner.y1() <= outer.y1();
}

bool intersects(const BBox& a, const BBox& b) noexcept
{
    return a.x0() < b.x1() && b.x0() < a.x1() && a.y0() < b.y1() && b.y0() < a.y1();
}

BBox normalize(const PixelBBox& box, ImageSize size)
{
    check_dimensions(size);
    if (!box.valid_for(size))
        throw InvalidGeometry(fmt::format("pixel box ({}, {}, {}, {}) outside {}x{} image",
                                          box.px0, box.py0, box.px1, box.py1, size.width, size.height));
    double const w = size.width;
    double const h = size.height;
    return BBox(box.px0 / w, box.py0 / h, box.px1 / w, box.py1 / h);
}

PixelBBox denormalize(const BBox& box, ImageSize size)
{
    check_dimensions(size);
    auto const [x0, x1] = to_pixels(box.x0(), box.x1(), size.width);
    auto const [y0, y1] = to_pixels(box.y0(), box.y1(), size.height);
    return PixelBBox { x0, y0, x1, y1 };
}

nlohmann::json bbox_to_json(const BBox& box)
{
    return nlohmann::json::array({ box.x0(), box.y0(), box.x1(), box.y1() });
}

BBox bbox_from_json(const nlohmann::json& j)
{
    if (!j.is_array() || j.size() != 4)
        throw InvalidGeometry("bbox must be a 4-element array [x0, y0, x1, y1]");
    for (auto const& v: j)
        if (!v.is_number())
            throw InvalidGeometry("bbox coordinates must be numbers");
    return BBox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

} // namespace formbench
