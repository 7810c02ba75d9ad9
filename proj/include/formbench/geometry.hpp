// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <compare>

namespace formbench {

/// A point in normalized image coordinates: (0, 0) is the top-left corner and
/// (1, 1) the bottom-right. Out-of-range points are representable; callers
/// that need in-range coordinates check in_unit_square().
struct Point
{
    double x = 0.0;
    double y = 0.0;

    bool in_unit_square() const noexcept;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Image extent in pixels.
struct ImageSize
{
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Axis-aligned, non-degenerate box in normalized coordinates.
///
/// Width and height are measured independently as fractions of the image
/// width and height. Construction rejects boxes with x0 >= x1 or y0 >= y1.
class BBox
{
  public:
    BBox(double x0, double y0, double x1, double y1);

    double x0() const noexcept { return x0_; }
    double y0() const noexcept { return y0_; }
    double x1() const noexcept { return x1_; }
    double y1() const noexcept { return y1_; }
    double width() const noexcept { return x1_ - x0_; }
    double height() const noexcept { return y1_ - y0_; }

    /// True when the box lies inside (0, 0, 1, 1).
    bool within_unit() const noexcept;

    friend bool operator==(const BBox&, const BBox&) = default;

  private:
    double x0_;
    double y0_;
    double x1_;
    double y1_;
};

/// Integer pixel box, half-open: covers columns [px0, px1) and rows [py0, py1).
struct PixelBBox
{
    int px0 = 0;
    int py0 = 0;
    int px1 = 0;
    int py1 = 0;

    int width() const noexcept { return px1 - px0; }
    int height() const noexcept { return py1 - py0; }
    bool valid_for(ImageSize size) const noexcept;

    friend bool operator==(const PixelBBox&, const PixelBBox&) = default;
};

Point center(const BBox& box) noexcept;

/// Closed containment: points on the boundary count as inside.
bool contains(const BBox& box, Point p) noexcept;

/// True when `inner` lies inside `outer` componentwise.
bool encloses(const BBox& outer, const BBox& inner) noexcept;

bool intersects(const BBox& a, const BBox& b) noexcept;

BBox normalize(const PixelBBox& box, ImageSize size);

/// Nearest-integer pixel box clamped to the image; never smaller than 1x1.
PixelBBox denormalize(const BBox& box, ImageSize size);

// Boxes travel as [x0, y0, x1, y1] in every file and wire format.
nlohmann::json bbox_to_json(const BBox& box);
BBox bbox_from_json(const nlohmann::json& j);

} // namespace formbench
