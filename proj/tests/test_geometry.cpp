#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "plpvio/geometry.hpp"
#include "test_util.hpp"

using namespace plpvio;
using testing::Rng;

TEST_CASE("plucker transform identity") {
    PluckerLine L;
    L.d = Vec3(0.3, -0.4, 0.5).normalized();
    L.n = Vec3(1, 2, 0.5).cross(L.d);
    const PluckerLine out = plucker_transform(L, Pose::Identity());
    CHECK((out.n - L.n).norm() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((out.d - L.d).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("plucker transform pure translation matches two-point oracle") {
    PluckerLine L;
    L.n = Vec3::Zero();
    L.d = Vec3(0, 1, 0);
    const Pose T(Vec3(1, 0, 0), Quat::Identity());
    const PluckerLine out = plucker_transform(L, T);
    CHECK((out.d - Vec3(0, 1, 0)).norm() < 1e-12);
    CHECK((out.n - Vec3(0, 0, 1)).norm() < 1e-12);

    // oracle: transform two points on the line, recompute n = p x d
    const Vec3 p1 = T.transform(Vec3(0, 0, 0));
    const Vec3 p2 = T.transform(Vec3(0, 1, 0));
    const PluckerLine oracle = plucker_from_points(p1, p2);
    CHECK((out.n - oracle.n).norm() < 1e-12);
}

TEST_CASE("plucker transform composition is a group action") {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const Vec3 p = rng.vec3(-3, 3);
        const Vec3 d = rng.vec3(-1, 1).normalized();
        PluckerLine L{p.cross(d), d};
        const Pose T1 = rng.pose(), T2 = rng.pose();
        const PluckerLine a = plucker_transform(plucker_transform(L, T1), T2);
        const PluckerLine b = plucker_transform(L, T2 * T1);
        CHECK((a.n - b.n).norm() < 1e-9);
        CHECK((a.d - b.d).norm() < 1e-9);
    }
}

TEST_CASE("plucker constraint preserved under random transforms") {
    Rng rng(11);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Vec3 p = rng.vec3(-5, 5);
        const Vec3 d = rng.vec3(-1, 1).normalized();
        PluckerLine L{p.cross(d), d};
        const PluckerLine out = plucker_transform(L, rng.pose(3.0));
        worst = std::max(worst, std::abs(out.n.dot(out.d)) / std::max(1.0, out.n.norm()));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("orthonormal conversion axis-aligned case") {
    PluckerLine L{Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const OrthonormalLine o = plucker_to_orthonormal(L);
    CHECK((o.U - Mat3::Identity()).norm() < 1e-12);
    CHECK(o.w1() == doctest::Approx(std::cos(M_PI / 4)).epsilon(1e-12));
    CHECK(o.w2() == doctest::Approx(std::sin(M_PI / 4)).epsilon(1e-12));
}

TEST_CASE("orthonormal conversion scaling only changes W") {
    const OrthonormalLine o1 = plucker_to_orthonormal({Vec3(1, 0, 0), Vec3(0, 1, 0)});
    const OrthonormalLine o2 = plucker_to_orthonormal({Vec3(2, 0, 0), Vec3(0, 1, 0)});
    CHECK((o1.U - o2.U).norm() < 1e-12);
    const double phi = std::atan2(o2.w2(), o2.w1());
    CHECK(phi == doctest::Approx(std::atan2(1.0, 2.0)).epsilon(1e-12));
}

TEST_CASE("plucker orthonormal round trip up to positive scale") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p = rng.vec3(-4, 4);
        const Vec3 d = rng.vec3(-1, 1).normalized();
        PluckerLine L{p.cross(d), d};
        const PluckerLine back = orthonormal_to_plucker(plucker_to_orthonormal(L));
        const double s = std::sqrt(L.n.squaredNorm() + L.d.squaredNorm());
        CHECK((back.n * s - L.n).norm() < 1e-8 * s);
        CHECK((back.d * s - L.d).norm() < 1e-8 * s);
        CHECK(back.d.normalized().dot(L.d.normalized()) > 1.0 - 1e-9);
        CHECK(std::abs(back.n.dot(back.d)) < 1e-8);
    }
}

TEST_CASE("orthonormal round trip identity on the chart") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const Vec3 p = rng.vec3(-4, 4);
        const Vec3 d = rng.vec3(-1, 1).normalized();
        const OrthonormalLine o = plucker_to_orthonormal({p.cross(d), d});
        const OrthonormalLine o2 = plucker_to_orthonormal(orthonormal_to_plucker(o));
        CHECK((o.U - o2.U).norm() < 1e-9);
        CHECK((o.W - o2.W).norm() < 1e-9);
    }
}

TEST_CASE("degenerate line through origin handled deterministically") {
    PluckerLine L{Vec3::Zero(), Vec3(0, 0, 2)};
    const OrthonormalLine o = plucker_to_orthonormal(L);
    CHECK((o.U.transpose() * o.U - Mat3::Identity()).norm() < 1e-9);
    CHECK(o.U.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((o.U.col(1) - Vec3(0, 0, 1)).norm() < 1e-12);
    CHECK(o.w1() == doctest::Approx(0.0));
}

TEST_CASE("orthonormal update zero delta is identity") {
    const OrthonormalLine o = plucker_to_orthonormal({Vec3(1, 0.5, 0.2).cross(Vec3::UnitY()), Vec3::UnitY()});
    const OrthonormalLine o2 = orthonormal_update(o, Vec4::Zero());
    CHECK((o.U - o2.U).norm() < 1e-12);
    CHECK((o.W - o2.W).norm() < 1e-12);
}

TEST_CASE("two small updates compose to first order") {
    Rng rng(9);
    const OrthonormalLine o = plucker_to_orthonormal({Vec3(1, 2, 3).cross(Vec3::UnitX()), Vec3::UnitX()});
    for (int i = 0; i < 20; ++i) {
        Vec4 d1, d2;
        for (int k = 0; k < 4; ++k) {
            d1[k] = rng.uniform(-1e-4, 1e-4);
            d2[k] = rng.uniform(-1e-4, 1e-4);
        }
        const OrthonormalLine a = orthonormal_update(orthonormal_update(o, d1), d2);
        const OrthonormalLine b = orthonormal_update(o, d1 + d2);
        CHECK((a.U - b.U).norm() < 1e-7);
        CHECK((a.W - b.W).norm() < 1e-7);
    }
}

TEST_CASE("orthonormal update invariants hold") {
    Rng rng(13);
    OrthonormalLine o = plucker_to_orthonormal({Vec3(0.3, 1, -2).cross(Vec3::UnitZ()), Vec3::UnitZ()});
    for (int i = 0; i < 1000; ++i) {
        Vec4 d;
        for (int k = 0; k < 4; ++k) d[k] = rng.uniform(-0.3, 0.3);
        o = orthonormal_update(o, d);
    }
    CHECK((o.U.transpose() * o.U - Mat3::Identity()).norm() < 1e-9);
    CHECK(o.U.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((o.W.transpose() * o.W - Mat2::Identity()).norm() < 1e-9);
}

TEST_CASE("plane tangent basis canonical axis") {
    auto [b1, b2] = plane_tangent_basis(Vec3(0, 0, 1));
    CHECK((b1 - Vec3(1, 0, 0)).norm() < 1e-12);
    CHECK((b2 - Vec3(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("plane tangent basis orthonormal over sphere grid") {
    for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 20; ++j) {
            const double az = 2 * M_PI * i / 40.0, el = M_PI * (j + 0.5) / 20.0 - M_PI / 2;
            const Vec3 n(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
            auto [b1, b2] = plane_tangent_basis(n);
            CHECK(std::abs(b1.dot(n)) < 1e-12);
            CHECK(std::abs(b2.dot(n)) < 1e-12);
            CHECK(std::abs(b1.dot(b2)) < 1e-12);
            CHECK((b1.cross(b2) - n).norm() < 1e-12);
        }
    }
}

TEST_CASE("plane update identity and first order") {
    const PlaneParam pi = PlaneParam::from_nd(Vec3(0, 0, 1), 1.0);
    const PlaneParam same = plane_update(pi, 0, 0, 0);
    CHECK((same.n - pi.n).norm() < 1e-12);
    CHECK(same.d == doctest::Approx(1.0));

    const PlaneParam moved = plane_update(pi, 1e-3, 0, 0);
    const Vec3 expect = Vec3(1e-3, 0, 1).normalized();
    CHECK((moved.n - expect).norm() < 1e-12);
}

TEST_CASE("plane update keeps unit normal") {
    Rng rng(21);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const PlaneParam pi = PlaneParam::from_nd(rng.vec3(-1, 1).normalized(), rng.uniform(-5, 5));
        const PlaneParam out =
            plane_update(pi, rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-1, 1));
        worst = std::max(worst, std::abs(out.n.norm() - 1.0));
        CHECK(std::abs(out.b1.dot(out.n)) < 1e-12);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("line endpoints from observation, ray-line intersection oracle") {
    // line through (1, 0, 2) with direction +y
    const Vec3 p0(1, 0, 2), d(0, 1, 0);
    PluckerLine L{p0.cross(d), d};
    const auto ep = line_endpoints_3d(L, Vec3(0.5, 0, 1), Vec3(0.5, 0.5, 1));
    REQUIRE(ep.has_value());
    CHECK((ep->start - Vec3(1, 0, 2)).norm() < 1e-9);
    CHECK((ep->end - Vec3(1, 1, 2)).norm() < 1e-9);

    // points lie on the line and re-project onto the observations
    for (const Vec3& P : {ep->start, ep->end}) {
        const Vec3 diff = P - L.closest_point_to_origin();
        CHECK((diff - diff.dot(d) * d).norm() < 1e-8);
    }
    CHECK((ep->start / ep->start.z() - Vec3(0.5, 0, 1)).norm() < 1e-9);
    CHECK((ep->end / ep->end.z() - Vec3(0.5, 0.5, 1)).norm() < 1e-9);
}

TEST_CASE("swapping observed endpoints swaps outputs") {
    const Vec3 p0(0.5, -1, 3), d = Vec3(0.2, 1, 0.1).normalized();
    PluckerLine L{p0.cross(d), d};
    const Vec3 a = (p0 + 0.3 * d) / (p0 + 0.3 * d).z();
    const Vec3 b = (p0 + 1.3 * d) / (p0 + 1.3 * d).z();
    const auto e1 = line_endpoints_3d(L, a, b);
    const auto e2 = line_endpoints_3d(L, b, a);
    REQUIRE(e1.has_value());
    REQUIRE(e2.has_value());
    CHECK((e1->start - e2->end).norm() < 1e-9);
    CHECK((e1->end - e2->start).norm() < 1e-9);
}

TEST_CASE("near-parallel ray rejected as unstable") {
    const Vec3 p0(0.01, 0, 5);
    const Vec3 d = Vec3(0.002, 0, 1).normalized();  // almost along the optical axis
    PluckerLine L{p0.cross(d), d};
    const Vec3 obs = (p0 + 1.0 * d) / (p0 + 1.0 * d).z();
    CHECK(!line_endpoints_3d(L, obs, obs).has_value());
}
