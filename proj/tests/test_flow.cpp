#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ldreg/flow.hpp"

using namespace ldreg;

namespace {

ImageGrid grid2d(int n) { return ImageGrid({n, n}, {1.0, 1.0}, {0.0, 0.0}); }

TimeVaryingVelocity constant_velocity(const ImageGrid& g, int T, double cx, double cy) {
    TimeVaryingVelocity v(g, T);
    for (int j = 0; j < T; ++j)
        for (std::size_t vox = 0; vox < g.voxel_count(); ++vox) {
            v.slices[j].at(vox, 0) = cx;
            v.slices[j].at(vox, 1) = cy;
        }
    return v;
}

// stationary rigid-rotation field about the grid center, total angle theta
TimeVaryingVelocity rotation_velocity(const ImageGrid& g, int T, double theta) {
    TimeVaryingVelocity v(g, T);
    double c = 0.5 * (g.dims[0] - 1);
    for (int j = 0; j < T; ++j)
        for (std::size_t vox = 0; vox < g.voxel_count(); ++vox) {
            auto idx = g.unlinear(vox);
            v.slices[j].at(vox, 0) = -theta * (idx[1] - c);
            v.slices[j].at(vox, 1) = theta * (idx[0] - c);
        }
    return v;
}

// smooth random band-limited velocity, sup-norm bounded
TimeVaryingVelocity smooth_random_velocity(const ImageGrid& g, int T, double amp, unsigned seed) {
    TimeVaryingVelocity v(g, T);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    double n = g.dims[0];
    for (int j = 0; j < T; ++j) {
        double a1 = d(rng), a2 = d(rng), b1 = d(rng), b2 = d(rng), p1 = d(rng), p2 = d(rng);
        for (std::size_t vox = 0; vox < g.voxel_count(); ++vox) {
            auto idx = g.unlinear(vox);
            double x = 2.0 * std::numbers::pi * idx[0] / n;
            double y = 2.0 * std::numbers::pi * idx[1] / n;
            v.slices[j].at(vox, 0) = amp * (a1 * std::sin(x + p1) * std::cos(y) + a2 * std::cos(2 * y));
            v.slices[j].at(vox, 1) = amp * (b1 * std::cos(x) * std::sin(y + p2) + b2 * std::sin(2 * x));
        }
    }
    return v;
}

}  // namespace

TEST_CASE("zero velocity yields identity maps") {
    ImageGrid g = grid2d(12);
    TimeVaryingVelocity v(g, 5);
    for (int j = 0; j < 5; ++j) {
        DeformationMap b = integrate_backward(v, j);
        DeformationMap f = integrate_forward(v, j);
        for (double u : b.displacement.data) CHECK(u == 0.0);
        for (double u : f.displacement.data) CHECK(u == 0.0);
    }
    CHECK_THROWS(integrate_backward(v, 5));
    CHECK_THROWS(integrate_forward(v, -1));
}

TEST_CASE("constant velocity integrates to a translation") {
    ImageGrid g = grid2d(24);
    TimeVaryingVelocity v = constant_velocity(g, 8, 1.5, -0.75);
    DeformationMap b = integrate_backward(v, 7);
    DeformationMap f = integrate_forward(v, 0);
    // interior voxels: clamp effects only near the swept boundary
    for (int y = 4; y < 20; ++y)
        for (int x = 4; x < 20; ++x) {
            std::size_t vox = g.linear({x, y, 0});
            CHECK(b.displacement.at(vox, 0) == doctest::Approx(-1.5).epsilon(1e-10));
            CHECK(b.displacement.at(vox, 1) == doctest::Approx(0.75).epsilon(1e-10));
            CHECK(f.displacement.at(vox, 0) == doctest::Approx(1.5).epsilon(1e-10));
            CHECK(f.displacement.at(vox, 1) == doctest::Approx(-0.75).epsilon(1e-10));
        }
}

TEST_CASE("rotation flow matches the closed-form rotation at interior landmarks") {
    ImageGrid g = grid2d(33);
    double theta = 20.0 * std::numbers::pi / 180.0;
    TimeVaryingVelocity v = rotation_velocity(g, 32, theta);
    DeformationMap phi10 = integrate_backward(v, 31);
    double c = 16.0;
    // phi_{1,0} is the pullback: it rotates points by -theta
    for (double r : {3.0, 6.0, 9.0}) {
        for (double ang = 0.0; ang < 6.0; ang += 0.7) {
            std::array<double, kMaxDim> p{c + r * std::cos(ang), c + r * std::sin(ang), 0.0};
            auto q = phi10.apply(p);
            double ex = c + r * std::cos(ang - theta);
            double ey = c + r * std::sin(ang - theta);
            CHECK(std::abs(q[0] - ex) < 0.1);
            CHECK(std::abs(q[1] - ey) < 0.1);
        }
    }
}

TEST_CASE("doubling T shrinks the rotation endpoint error by the convergence factor") {
    ImageGrid g = grid2d(33);
    double theta = 20.0 * std::numbers::pi / 180.0;
    double c = 16.0;
    auto endpoint_error = [&](int T) {
        TimeVaryingVelocity v = rotation_velocity(g, T, theta);
        DeformationMap phi = integrate_backward(v, T - 1);
        double worst = 0.0;
        for (double ang = 0.0; ang < 6.0; ang += 0.5) {
            std::array<double, kMaxDim> p{c + 8.0 * std::cos(ang), c + 8.0 * std::sin(ang), 0.0};
            auto q = phi.apply(p);
            double ex = c + 8.0 * std::cos(ang - theta);
            double ey = c + 8.0 * std::sin(ang - theta);
            worst = std::max(worst, std::hypot(q[0] - ex, q[1] - ey));
        }
        return worst;
    };
    double e16 = endpoint_error(16), e32 = endpoint_error(32);
    CHECK(e16 / e32 >= 1.8);
}

TEST_CASE("compose: identities and translation addition") {
    ImageGrid g = grid2d(16);
    DeformationMap id(g);
    DeformationMap t(g);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        t.displacement.at(v, 0) = 0.5;
        t.displacement.at(v, 1) = -0.25;
    }
    DeformationMap a = compose(id, t);
    DeformationMap b = compose(t, id);
    for (std::size_t i = 0; i < t.displacement.data.size(); ++i) {
        CHECK(a.displacement.data[i] == doctest::Approx(t.displacement.data[i]).epsilon(1e-12));
        CHECK(b.displacement.data[i] == doctest::Approx(t.displacement.data[i]).epsilon(1e-12));
    }

    DeformationMap t2(g);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
        t2.displacement.at(v, 0) = 1.0;
        t2.displacement.at(v, 1) = 0.5;
    }
    DeformationMap sum = compose(t2, t);
    for (int y = 2; y < 14; ++y)
        for (int x = 2; x < 14; ++x) {
            std::size_t v = g.linear({x, y, 0});
            CHECK(sum.displacement.at(v, 0) == doctest::Approx(1.5).epsilon(1e-12));
            CHECK(sum.displacement.at(v, 1) == doctest::Approx(0.25).epsilon(1e-12));
        }

    ImageGrid other({16, 16}, {2.0, 2.0}, {0.0, 0.0});
    CHECK_THROWS(compose(t, DeformationMap(other)));
}

TEST_CASE("inverse consistency of the integrated pair on smooth random velocities") {
    ImageGrid g = grid2d(32);
    for (unsigned seed : {1u, 2u, 3u}) {
        TimeVaryingVelocity v = smooth_random_velocity(g, 16, 1.2, seed);
        // keep within the smoothness class: ||v||inf * dt < 0.5 voxel
        double m = 0.0;
        for (auto& s : v.slices) m = std::max(m, s.max_norm());
        CHECK(m * v.dt() < 0.5);

        DeformationMap phi10 = integrate_backward(v, 15);
        DeformationMap phi01 = integrate_forward(v, 0);
        DeformationMap round = compose(phi01, phi10);
        double worst = 0.0;
        for (int y = 6; y < 26; ++y)
            for (int x = 6; x < 26; ++x) {
                std::size_t vox = g.linear({x, y, 0});
                worst = std::max(worst, std::hypot(round.displacement.at(vox, 0),
                                                   round.displacement.at(vox, 1)));
            }
        CHECK(worst < 0.5);

        // diffeomorphism preserved: positive Jacobian in the interior
        ImageVolume det = jacobian_determinant(phi10);
        for (int y = 2; y < 30; ++y)
            for (int x = 2; x < 30; ++x) CHECK(det.at({x, y, 0}) > 0.0);
    }
}

TEST_CASE("deform_image: identity, translation, rotated blob center") {
    ImageGrid g = grid2d(32);
    ImageVolume img(g);
    double cx = 20.0, cy = 16.0, s = 3.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        auto idx = g.unlinear(i);
        double r2 = (idx[0] - cx) * (idx[0] - cx) + (idx[1] - cy) * (idx[1] - cy);
        img.data[i] = std::exp(-0.5 * r2 / (s * s));
    }

    DeformationMap id(g);
    ImageVolume same = deform_image(img, id);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(same.data[i] == img.data[i]);

    DeformationMap t(g);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) t.displacement.at(v, 0) = 1.0;
    ImageVolume shifted = deform_image(img, t);
    for (int y = 1; y < 31; ++y)
        for (int x = 1; x < 31; ++x)
            CHECK(shifted.at({x, y, 0}) == doctest::Approx(img.at({x + 1 > 31 ? 31 : x + 1, y, 0}))
                                               .epsilon(1e-12));

    // rotation moves the blob's center of mass to the rotated position
    double theta = 15.0 * std::numbers::pi / 180.0;
    TimeVaryingVelocity v = rotation_velocity(g, 32, theta);
    DeformationMap phi10 = integrate_backward(v, 31);
    ImageVolume rotated = deform_image(img, phi10);
    double mx = 0.0, my = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < rotated.data.size(); ++i) {
        auto idx = g.unlinear(i);
        mx += rotated.data[i] * idx[0];
        my += rotated.data[i] * idx[1];
        mass += rotated.data[i];
    }
    mx /= mass;
    my /= mass;
    double gc = 15.5;  // rotation center of the velocity field
    double ex = gc + std::cos(theta) * (cx - gc) - std::sin(theta) * (cy - gc);
    double ey = gc + std::sin(theta) * (cx - gc) + std::cos(theta) * (cy - gc);
    CHECK(std::abs(mx - ex) < 0.2);
    CHECK(std::abs(my - ey) < 0.2);
}
