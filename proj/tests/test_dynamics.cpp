#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "optiguide/datagen.hpp"
#include "optiguide/dynamics.hpp"

using namespace optiguide;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent construction of the minimum-time path: hard turn on the
// bounded-curvature circle until the heading points at the target along a
// tangent, then fly straight. Both turn directions are tried.
double min_time_geometric(double r, double sigma, double r_min) {
    if (std::abs(sigma) < 1e-14) return r;

    const Eigen::Vector2d target(0.0, 0.0);
    const Eigen::Vector2d missile(r, 0.0);
    const Eigen::Vector2d heading(-std::cos(sigma), std::sin(sigma));

    double best = std::numeric_limits<double>::infinity();
    for (const double turn : {+1.0, -1.0}) {  // +1 = counterclockwise
        const Eigen::Vector2d normal(-turn * heading[1], turn * heading[0]);
        const Eigen::Vector2d center = missile + r_min * normal;
        const double oc = (target - center).norm();
        if (oc < r_min) continue;  // target inside this turn circle
        const double tangent_len = std::sqrt(oc * oc - r_min * r_min);

        const double phi_start = std::atan2(missile[1] - center[1], missile[0] - center[0]);
        const double phi_to_target =
            std::atan2(target[1] - center[1], target[0] - center[0]);
        const double gamma = std::acos(r_min / oc);

        for (const double side : {+1.0, -1.0}) {
            const double phi_touch = phi_to_target + side * gamma;
            const Eigen::Vector2d radius(std::cos(phi_touch), std::sin(phi_touch));
            const Eigen::Vector2d touch = center + r_min * radius;
            const Eigen::Vector2d exit_heading(-turn * radius[1], turn * radius[0]);
            const Eigen::Vector2d to_target = (target - touch).normalized();
            if (exit_heading.dot(to_target) < 1.0 - 1e-9) continue;  // wrong tangent

            double arc = turn * (phi_touch - phi_start);
            arc = std::fmod(arc, 2.0 * kPi);
            if (arc < 0.0) arc += 2.0 * kPi;
            best = std::min(best, r_min * arc + tangent_len);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("reduced_rhs matches the closed form") {
    auto d = reduced_rhs({1.0, 0.0}, 0.0);
    CHECK(d.dr == doctest::Approx(-1.0));
    CHECK(d.dsigma == doctest::Approx(0.0));

    d = reduced_rhs({0.5, kPi / 2.0}, 0.0);
    CHECK(d.dr == doctest::Approx(0.0));
    CHECK(d.dsigma == doctest::Approx(2.0));

    d = reduced_rhs({0.5, kPi / 2.0}, 1.0);
    CHECK(d.dr == doctest::Approx(0.0));
    CHECK(d.dsigma == doctest::Approx(3.0));

    CHECK_THROWS_AS(reduced_rhs({0.0, 0.1}, 0.0), NonPositiveRadius);
    CHECK_THROWS_AS(reduced_rhs({-0.3, 0.1}, 0.0), NonPositiveRadius);
}

TEST_CASE("full_rhs matches the closed form and the angular identity") {
    auto d = full_rhs({1.0, 0.0, 0.0}, 0.0);
    CHECK(d.dr == doctest::Approx(-1.0));
    CHECK(d.dlambda == doctest::Approx(0.0));
    CHECK(d.dsigma == doctest::Approx(0.0));

    d = full_rhs({1.0, 0.3, kPi / 2.0}, 0.0);
    CHECK(d.dr == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.dlambda == doctest::Approx(-1.0));
    CHECK(d.dsigma == doctest::Approx(1.0));

    // dlambda + (dsigma - u) = 0 for any input
    for (const double sigma : {-2.0, -0.4, 0.0, 0.7, 2.9}) {
        for (const double u : {-3.0, 0.0, 1.5}) {
            const auto dd = full_rhs({0.7, 0.2, sigma}, u);
            CHECK(std::abs(dd.dlambda + (dd.dsigma - u)) < 1e-14);
        }
    }
}

TEST_CASE("costate_rhs matches the closed form") {
    auto d = costate_rhs({1.0, 0.0}, {1.0, 1.0});
    CHECK(d.dp_r == doctest::Approx(0.0));
    CHECK(d.dp_sigma == doctest::Approx(-1.0));

    d = costate_rhs({2.0, kPi / 2.0}, {0.0, 4.0});
    CHECK(d.dp_r == doctest::Approx(1.0));
    CHECK(d.dp_sigma == doctest::Approx(0.0).epsilon(1e-12));

    d = costate_rhs({0.37, 1.1}, {0.0, 0.0});
    CHECK(d.dp_r == 0.0);
    CHECK(d.dp_sigma == 0.0);
}

TEST_CASE("clip_control three-branch rule, odd and idempotent") {
    CHECK(clip_control(0.3, 5.0) == 0.3);
    CHECK(clip_control(7.0, 5.0) == 5.0);
    CHECK(clip_control(-9.0, 5.0) == -5.0);

    for (const double p : {-12.0, -5.0, -0.2, 0.0, 3.3, 5.0, 8.1}) {
        CHECK(clip_control(-p, 5.0) == -clip_control(p, 5.0));
        CHECK(clip_control(clip_control(p, 5.0), 5.0) == clip_control(p, 5.0));
    }
}

TEST_CASE("hamiltonian evaluates the printed expression") {
    CHECK(hamiltonian({1.0, 0.0}, {1.0, 0.0}, 0.0) == doctest::Approx(-1.0));
    CHECK(hamiltonian({1.0, 0.0}, {0.0, 2.0}, 3.0) == doctest::Approx(10.5));
}

TEST_CASE("tgo_estimate closed form") {
    CHECK(tgo_estimate({1.0, 0.0}, 3.0) == doctest::Approx(1.0));
    CHECK(tgo_estimate({1.0, kPi / 2.0}, 3.0) == doctest::Approx(1.1));
    CHECK(tgo_estimate({2.0, 0.0}, 3.0) == doctest::Approx(2.0));

    // exact at sigma = 0
    for (const double r : {0.2, 0.8, 1.7}) {
        CHECK(tgo_estimate({r, 0.0}, 3.0) == r);
    }
}

TEST_CASE("analytical_command limits and transcription oracle") {
    ItcgParams params;  // N=3, K=9, u_m=5

    // time error forced to zero: only the heading term survives
    const EngagementState s1{1.0, kPi / 6.0};
    const double tf1 = 0.0 + tgo_estimate(s1, params.N);
    CHECK(analytical_command(s1, 0.0, tf1, params) == doctest::Approx(-1.5));

    const EngagementState s2{1.0, 0.0};
    CHECK(analytical_command(s2, 0.0, tgo_estimate(s2, params.N), params) ==
          doctest::Approx(0.0));

    // step-by-step transcription with a wide bound so the clamp stays inactive
    ItcgParams wide = params;
    wide.u_m = 20.0;
    const double r = 1.0;
    const double sigma = kPi / 4.0;
    const double t = 0.0;
    const double t_f = 1.5;
    const double t_go = r * (1.0 + std::sin(sigma) * std::sin(sigma) / (2.0 * (2.0 * 3.0 - 1.0)));
    const double eps_t = t_f - (t + t_go);
    const double phi = 1.0 - std::sqrt(std::abs(2.0 * sigma / kPi));
    const double expected =
        -3.0 * std::sin(sigma) / r +
        9.0 * phi * (2.0 * 3.0 - 1.0) * eps_t / (r * t_go * std::sin(sigma));
    CHECK(analytical_command({r, sigma}, t, t_f, wide) == doctest::Approx(expected).epsilon(1e-12));

    // with the nominal bound the same case saturates
    CHECK(analytical_command({r, sigma}, t, t_f, params) == doctest::Approx(5.0));

    // bounded through the sigma = 0 singularity
    for (const double sg : {-1e-9, 0.0, 1e-9, 1e-5}) {
        const double a = analytical_command({1.0, sg}, 0.0, 1.8, params);
        CHECK(std::abs(a) <= params.u_m);
    }
}

TEST_CASE("min_terminal_time formula against the geometric construction") {
    CHECK(min_terminal_time({1.0, 0.0}, 0.2) == doctest::Approx(1.0));

    // R_min = v^2 / u_m = 0.2 at the nominal bound
    CHECK(1.0 / 5.0 == doctest::Approx(0.2));

    CHECK(min_terminal_time({1.0, kPi / 2.0}, 0.2) ==
          doctest::Approx(min_time_geometric(1.0, kPi / 2.0, 0.2)).epsilon(1e-6));

    for (double r = 0.8; r <= 1.2 + 1e-9; r += 0.1) {
        for (double sigma = 0.1; sigma <= kPi / 2.0 + 1e-9; sigma += 0.15) {
            const double formula = min_terminal_time({r, sigma}, 0.2);
            const double geometric = min_time_geometric(r, sigma, 0.2);
            CHECK(formula == doctest::Approx(geometric).epsilon(1e-6));
        }
    }

    // crosses the r sin(sigma) = 2 R_min curve without a glitch
    const double sigma_c = std::asin(0.4 / 1.0);
    const double at = min_terminal_time({1.0, sigma_c}, 0.2);
    const double below = min_terminal_time({1.0, sigma_c - 1e-6}, 0.2);
    const double above = min_terminal_time({1.0, sigma_c + 1e-6}, 0.2);
    CHECK(at == doctest::Approx(below).epsilon(1e-4));
    CHECK(at == doctest::Approx(above).epsilon(1e-4));

    // nondecreasing in sigma for fixed r
    for (const double r : {0.8, 1.0, 1.2}) {
        double prev = min_terminal_time({r, 0.0}, 0.2);
        for (double sigma = 0.05; sigma <= kPi / 2.0 + 1e-9; sigma += 0.05) {
            const double t = min_terminal_time({r, sigma}, 0.2);
            CHECK(t >= prev - 1e-9);
            prev = t;
        }
    }

    CHECK_THROWS_AS(min_terminal_time({0.1, kPi / 2.0}, 0.2), InfeasibleGeometry);
}

TEST_CASE("scaling round trip") {
    const Scales scales{10000.0, 500.0};
    CHECK(nondimensionalize({10000.0, 0.0, 0.0}, scales).r == doctest::Approx(1.0));
    CHECK(nondim_time(20.0, scales) == doctest::Approx(1.0));
    CHECK(scales.accel_ref() == doctest::Approx(25.0));

    const PhysicalState physical{7345.0, 0.21, -0.53};
    const PhysicalState round = redimensionalize(nondimensionalize(physical, scales), scales);
    CHECK(round.r == doctest::Approx(physical.r).epsilon(1e-15));
    CHECK(round.lambda == physical.lambda);
    CHECK(round.sigma == physical.sigma);
    CHECK(redim_accel(nondim_accel(3.7, scales), scales) == doctest::Approx(3.7).epsilon(1e-15));
}

TEST_CASE("mirror symmetry of the optimal flow") {
    // negating (sigma, p_sigma) maps solutions to solutions with u -> -u
    GenerationConfig cfg;
    cfg.dt = 1e-3;
    const Costate p0{-0.9, -1.4};
    const Costate p0_mirror{-0.9, +1.4};
    const auto a = integrate_backward(p0, 0.8, cfg);
    const auto b = integrate_backward(p0_mirror, 0.8, cfg);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(std::abs(a.samples[i].r - b.samples[i].r) < 1e-9);
        CHECK(std::abs(a.samples[i].sigma + b.samples[i].sigma) < 1e-9);
        CHECK(std::abs(a.samples[i].u + b.samples[i].u) < 1e-9);
    }
}
