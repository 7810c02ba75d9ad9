// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <formbench/errors.hpp>

#include <boost/multiprecision/cpp_int.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace formbench;
using boost::multiprecision::cpp_rational;

namespace {

// |rational(computed) - exact| must not exceed half an ulp of computed.
void expect_correctly_rounded(double computed, const cpp_rational& exact)
{
    double const up = std::nextafter(computed, 2.0);
    cpp_rational const half_ulp = (cpp_rational(up) - cpp_rational(computed)) / 2;
    cpp_rational err = cpp_rational(computed) - exact;
    if (err < 0)
        err = -err;
    EXPECT_LE(err, half_ulp) << computed;
}

} // namespace

TEST(Geometry, CenterExamples)
{
    EXPECT_NEAR(center(BBox(0.2, 0.4, 0.6, 0.8)).x, 0.4, 1e-15);
    EXPECT_NEAR(center(BBox(0.2, 0.4, 0.6, 0.8)).y, 0.6, 1e-15);
    EXPECT_EQ(center(BBox(0, 0, 1, 1)), (Point { 0.5, 0.5 }));
}

TEST(Geometry, CenterMatchesExactRationalMidpoint)
{
    BBox const thin(0.1, 0.1, 0.1002, 0.9);
    Point const c = center(thin);
    expect_correctly_rounded(c.x, (cpp_rational(0.1) + cpp_rational(0.1002)) / 2);
    expect_correctly_rounded(c.y, (cpp_rational(0.1) + cpp_rational(0.9)) / 2);
    EXPECT_NEAR(c.x, 0.1001, 1e-15);
    EXPECT_NEAR(c.y, 0.5, 1e-15);

    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i)
    {
        BBox const b = test::random_box(rng);
        Point const p = center(b);
        expect_correctly_rounded(p.x, (cpp_rational(b.x0()) + cpp_rational(b.x1())) / 2);
        expect_correctly_rounded(p.y, (cpp_rational(b.y0()) + cpp_rational(b.y1())) / 2);
    }
}

TEST(Geometry, DegenerateBoxesRejected)
{
    EXPECT_THROW(BBox(0.5, 0.1, 0.5, 0.2), InvalidGeometry);
    EXPECT_THROW(BBox(0.1, 0.3, 0.2, 0.2), InvalidGeometry);
    EXPECT_THROW(BBox(0.1, 0.1, NAN, 0.2), InvalidGeometry);
}

TEST(Geometry, ContainsIsClosed)
{
    EXPECT_TRUE(contains(BBox(0, 0, 1, 1), { 0.5, 0.5 }));
    EXPECT_TRUE(contains(BBox(0.2, 0.2, 0.4, 0.4), { 0.2, 0.3 }));
    EXPECT_FALSE(contains(BBox(0.2, 0.2, 0.4, 0.4), { 0.5, 0.3 }));
    EXPECT_TRUE(contains(BBox(0.2, 0.2, 0.4, 0.4), { 0.4, 0.4 }));
}

TEST(Geometry, NormalizeExamples)
{
    EXPECT_EQ(normalize(PixelBBox { 100, 200, 300, 400 }, { 1000, 2000 }), BBox(0.1, 0.1, 0.3, 0.2));
    EXPECT_EQ(normalize(PixelBBox { 0, 0, 640, 480 }, { 640, 480 }), BBox(0, 0, 1, 1));
    EXPECT_THROW(normalize(PixelBBox { 0, 0, 10, 10 }, { 0, 10 }), InvalidImageDimensions);
    EXPECT_THROW(normalize(PixelBBox { 0, 0, 11, 10 }, { 10, 10 }), InvalidGeometry);
}

TEST(Geometry, DenormalizeExamples)
{
    EXPECT_EQ(denormalize(BBox(0.1, 0.1, 0.3, 0.2), { 1000, 2000 }), (PixelBBox { 100, 200, 300, 400 }));
    EXPECT_EQ(denormalize(BBox(0, 0, 1, 1), { 8, 8 }), (PixelBBox { 0, 0, 8, 8 }));
    EXPECT_THROW(denormalize(BBox(0, 0, 1, 1), { 0, 8 }), InvalidImageDimensions);
    EXPECT_THROW(denormalize(BBox(0, 0, 1, 1), { 8, -1 }), InvalidImageDimensions);
}

TEST(Geometry, SubPixelBoxesBecomeOnePixel)
{
    int const W = 200;
    int const H = 100;
    std::vector<double> starts { 0.0, 0.0001, 0.25, 0.4987, 0.5, 0.999, 0.9999 };
    for (double x0: starts)
        for (double frac: { 0.01, 0.3, 0.99 })
        {
            double const x1 = x0 + frac / W;
            if (x1 > 1.0 || !(x0 < x1))
                continue;
            PixelBBox const pb = denormalize(BBox(x0, 0.2, x1, 0.6), { W, H });
            EXPECT_EQ(pb.width(), 1) << x0 << " " << frac;
            EXPECT_TRUE(pb.valid_for({ W, H }));
            EXPECT_LE(std::abs(pb.px0 - x0 * W), 1.0) << x0 << " " << frac;
            EXPECT_LE(std::abs(pb.px1 - x1 * W), 1.0) << x0 << " " << frac;
        }
}

TEST(Geometry, SubPixelBoxPicksMidpointPixel)
{
    // 10.6 and 10.8 px both round to 11; widening to [11, 12) would move the
    // right edge 1.2 px.
    PixelBBox const pb = denormalize(BBox(10.6 / 100, 0.1, 10.8 / 100, 0.5), { 100, 10 });
    EXPECT_EQ(pb.px0, 10);
    EXPECT_EQ(pb.px1, 11);
    EXPECT_EQ(denormalize(BBox(0.9995, 0.1, 1.0, 0.5), { 100, 10 }).px0, 99);
    EXPECT_EQ(denormalize(BBox(0.0, 0.1, 0.0004, 0.5), { 100, 10 }).px1, 1);
}

TEST(Geometry, JsonRoundTrip)
{
    BBox const b(0.125, 0.25, 0.5, 0.75);
    EXPECT_EQ(bbox_to_json(b).dump(), "[0.125,0.25,0.5,0.75]");
    EXPECT_EQ(bbox_from_json(bbox_to_json(b)), b);
    EXPECT_THROW(bbox_from_json(nlohmann::json::array({ 0, 0, 1 })), InvalidGeometry);
    EXPECT_THROW(bbox_from_json(nlohmann::json::array({ 0, 0, "1", 1 })), InvalidGeometry);
}

TEST(GeometryProperty, CenterInsideAndMonotoneContainment)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5000; ++i)
    {
        BBox const b = test::random_box(rng);
        ASSERT_TRUE(contains(b, center(b)));
        BBox const outer(b.x0() * u(rng), b.y0() * u(rng), b.x1() + (1 - b.x1()) * u(rng),
                         b.y1() + (1 - b.y1()) * u(rng));
        ASSERT_TRUE(encloses(outer, b));
        for (Point const p: { center(b), Point { b.x0(), b.y1() }, Point { u(rng), u(rng) } })
            if (contains(b, p))
            {
                ASSERT_TRUE(contains(outer, p));
            }
    }
}

TEST(GeometryProperty, PixelRoundTripWithinOnePixel)
{
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> dim(1, 5000);
    for (int i = 0; i < 1000; ++i)
    {
        ImageSize const size { dim(rng), dim(rng) };
        std::uniform_int_distribution<int> xs(0, size.width), ys(0, size.height);
        int a = xs(rng), b = xs(rng), c = ys(rng), d = ys(rng);
        if (a == b || c == d)
            continue;
        PixelBBox const pb { std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d) };
        EXPECT_EQ(denormalize(normalize(pb, size), size), pb);

        BBox const nb = test::random_box(rng);
        PixelBBox const back = denormalize(nb, size);
        ASSERT_TRUE(back.valid_for(size));
        EXPECT_LE(std::abs(back.px0 - nb.x0() * size.width), 1.0);
        EXPECT_LE(std::abs(back.px1 - nb.x1() * size.width), 1.0);
        EXPECT_LE(std::abs(back.py0 - nb.y0() * size.height), 1.0);
        EXPECT_LE(std::abs(back.py1 - nb.y1() * size.height), 1.0);
    }
}
