#include <cmath>

#include "doctest.h"
#include "rnflow/errors.hpp"
#include "rnflow/interpolant.hpp"
#include "rnflow/rng.hpp"

using namespace rnflow;

namespace {

// Closed forms for the 1-D transport N(0,1) -> N(m, s^2) along the linear
// path: x_t ~ N(t*m, sig2_t) with sig2_t = t^2 s^2 + (1-t)^2, conditional
// expectations of endpoints given x_t from joint-Gaussian algebra.
struct Gauss1d {
    double m;
    double s;

    double sig2(double t) const { return t * t * s * s + (1 - t) * (1 - t); }
    double velocity(double x, double t) const {
        return m + ((t * s * s - (1 - t)) / sig2(t)) * (x - t * m);
    }
    double score(double x, double t) const { return -(x - t * m) / sig2(t); }
};

}  // namespace

TEST_SUITE_BEGIN("interpolant");

TEST_CASE("boundary times return the endpoints") {
    Tensor x_star({2}, {2.0, -1.0});
    Tensor x0({2}, {0.5, 4.0});
    PathPoint at0 = interpolate(x_star, x0, 0.0);
    CHECK(at0.x_t.data == x0.data);
    PathPoint at1 = interpolate(x_star, x0, 1.0);
    CHECK(at1.x_t.data == x_star.data);
}

TEST_CASE("worked interpolation example") {
    Tensor x_star({2}, {2.0, 0.0});
    Tensor x0({2}, {0.0, 2.0});
    PathPoint p = interpolate(x_star, x0, 0.25);
    CHECK(p.x_t.data == std::vector<double>{0.5, 1.5});
    CHECK(p.v_target.data == std::vector<double>{2.0, -2.0});
}

TEST_CASE("invalid inputs are rejected") {
    Tensor a({2}, {0.0, 0.0});
    Tensor b({3}, {0.0, 0.0, 0.0});
    CHECK_THROWS_AS(interpolate(a, b, 0.5), ShapeError);
    CHECK_THROWS_AS(interpolate(a, a, -0.1), ConfigError);
    CHECK_THROWS_AS(interpolate(a, a, 1.1), ConfigError);
}

TEST_CASE("interpolation is affine in t") {
    Rng rng(31);
    Tensor x_star = rng.sample_normal({5});
    Tensor x0 = rng.sample_normal({5});
    const double a = 0.2;
    const double b = 0.9;
    const double lambda = 0.37;
    const double t = lambda * a + (1 - lambda) * b;
    Tensor x_a = interpolate(x_star, x0, a).x_t;
    Tensor x_b = interpolate(x_star, x0, b).x_t;
    Tensor x_t = interpolate(x_star, x0, t).x_t;
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(x_t.data[i] ==
              doctest::Approx(lambda * x_a.data[i] + (1 - lambda) * x_b.data[i])
                  .epsilon(1e-12));
    }
}

TEST_CASE("endpoint reconstruction inverts the interpolant") {
    Rng rng(32);
    for (double t : {0.1, 0.5, 0.93}) {
        Tensor x_star = rng.sample_normal({4});
        Tensor x0 = rng.sample_normal({4});
        PathPoint p = interpolate(x_star, x0, t);
        auto [x_star_hat, eps_hat] = velocity_to_endpoint(p.x_t, t, p.v_target);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(x_star_hat.data[i] == doctest::Approx(x_star.data[i]).epsilon(1e-12));
            CHECK(eps_hat.data[i] == doctest::Approx(x0.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("t=0 endpoint is x_t plus the velocity") {
    Tensor x_t({2}, {1.0, 2.0});
    Tensor v({2}, {0.5, -0.5});
    auto [x_star_hat, eps_hat] = velocity_to_endpoint(x_t, 0.0, v);
    CHECK(x_star_hat.data == std::vector<double>{1.5, 1.5});
    CHECK(eps_hat.data == x_t.data);
}

TEST_CASE("re-interpolating reconstructed endpoints reproduces x_t") {
    Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x_t = rng.sample_normal({3});
        Tensor v = rng.sample_normal({3});
        const double t = 0.05 + 0.9 * rng.uniform();
        auto [x_star_hat, eps_hat] = velocity_to_endpoint(x_t, t, v);
        PathPoint p = interpolate(x_star_hat, eps_hat, t);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(p.x_t.data[i] == doctest::Approx(x_t.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("score formula boundary and worked cases") {
    Tensor x_t({3}, {0.3, -1.2, 2.0});
    Tensor v({3}, {0.0, 0.0, 0.0});
    Tensor score0 = velocity_to_score(x_t, 0.0, v);
    for (std::size_t i = 0; i < 3; ++i) CHECK(score0.data[i] == -x_t.data[i]);

    Tensor x1({1}, {1.0});
    Tensor v1({1}, {3.0});
    Tensor s = velocity_to_score(x1, 0.5, v1);
    CHECK(s.data[0] == doctest::Approx(1.0));
}

TEST_CASE("near t=1 the score conversion raises a singularity error") {
    Tensor x({1}, {0.0});
    Tensor v({1}, {0.0});
    CHECK_THROWS_AS(velocity_to_score(x, 1.0, v), SingularityError);
    CHECK_THROWS_AS(velocity_to_score(x, 1.0 - 1e-9, v), SingularityError);
    CHECK_NOTHROW(velocity_to_score(x, 0.999, v));
}

TEST_CASE("gaussian transport: converted score matches the closed form") {
    const Gauss1d oracle{2.0, 0.5};
    TimeWindow window;
    for (double t : {window.t_min, 0.1, 0.35, 0.6, 0.85, window.t_max}) {
        for (double x : {-2.0, -0.5, 0.0, 1.3, 2.0, 4.0}) {
            Tensor xt({1}, {x});
            Tensor v({1}, {oracle.velocity(x, t)});
            Tensor s = velocity_to_score(xt, t, v);
            CHECK(s.data[0] == doctest::Approx(oracle.score(x, t)).epsilon(1e-8));
        }
    }
}

TEST_CASE("time window validation") {
    TimeWindow good;
    CHECK_NOTHROW(validate(good));
    TimeWindow flipped{0.9, 0.1};
    CHECK_THROWS_AS(validate(flipped), ConfigError);
    TimeWindow out_of_range{-0.1, 0.5};
    CHECK_THROWS_AS(validate(out_of_range), ConfigError);
}

TEST_SUITE_END();
