#include "optiguide/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace optiguide {

namespace {

void require_positive_radius(double r) {
    if (!(r > 0.0)) throw NonPositiveRadius(r);
}

}  // namespace

StateDerivative reduced_rhs(const EngagementState& state, double u) {
    require_positive_radius(state.r);
    return {-std::cos(state.sigma), u + std::sin(state.sigma) / state.r};
}

FullStateDerivative full_rhs(const FullState& state, double u) {
    require_positive_radius(state.r);
    const double los_rate = -std::sin(state.sigma) / state.r;
    return {-std::cos(state.sigma), los_rate, u - los_rate};
}

CostateDerivative costate_rhs(const EngagementState& state, const Costate& costate) {
    require_positive_radius(state.r);
    const double s = std::sin(state.sigma);
    const double c = std::cos(state.sigma);
    return {costate.p_sigma * s / (state.r * state.r),
            -costate.p_r * s - costate.p_sigma * c / state.r};
}

double clip_control(double p_sigma, double u_m) {
    if (p_sigma > u_m) return u_m;
    if (p_sigma < -u_m) return -u_m;
    return p_sigma;
}

double hamiltonian(const EngagementState& state, const Costate& costate, double u) {
    require_positive_radius(state.r);
    return 0.5 * u * u - costate.p_r * std::cos(state.sigma) +
           costate.p_sigma * (u + std::sin(state.sigma) / state.r);
}

double tgo_estimate(const EngagementState& state, double N) {
    const double s = std::sin(state.sigma);
    return state.r * (1.0 + s * s / (2.0 * (2.0 * N - 1.0)));
}

double analytical_command(const EngagementState& state, double t, double t_f,
                          const ItcgParams& params) {
    require_positive_radius(state.r);
    const double t_go = tgo_estimate(state, params.N);
    if (!(t_go > 0.0)) throw NonPositiveTgo(t_go);

    const double sin_sigma = std::sin(state.sigma);
    const double heading_term = -params.N * sin_sigma / state.r;

    // Time-error feedback; the 1/sin(sigma) factor is floored near sigma = 0.
    const double eps_t = t_f - (t + t_go);
    const double phi = 1.0 - std::sqrt(std::abs(2.0 * state.sigma / std::numbers::pi));
    double sin_floored = sin_sigma;
    if (std::abs(sin_floored) < kSinSigmaFloor) {
        sin_floored = std::copysign(kSinSigmaFloor, sin_floored == 0.0 ? 1.0 : sin_floored);
    }
    const double time_term =
        params.K * phi * (2.0 * params.N - 1.0) * eps_t / (state.r * t_go * sin_floored);

    return std::clamp(heading_term + time_term, -params.u_m, params.u_m);
}

double min_terminal_time(const EngagementState& state, double R_min) {
    require_positive_radius(state.r);
    if (!(R_min > 0.0)) throw ConfigError("min_terminal_time requires R_min > 0");

    // Even in sigma by mirror symmetry about the line of sight.
    double sigma = std::abs(state.sigma);
    const double r = state.r;
    if (sigma < 1e-14) return r;  // straight-line limit, avoids 0/0 in sin(2a)

    double disc = r * r - 2.0 * r * R_min * std::sin(sigma);
    if (disc < 0.0) {
        throw InfeasibleGeometry("target inside the minimum turn circle: r^2 - 2 r R_min sin(sigma) < 0");
    }
    double num = r * std::cos(sigma) - std::sqrt(disc);
    double den = 2.0 * R_min - r * std::sin(sigma);
    // num and den share sign and vanish together on r sin(sigma) = 2 R_min;
    // nudge off that curve before forming the ratio.
    if (std::abs(num) < 1e-12 && std::abs(den) < 1e-12) {
        sigma += 1e-9;
        disc = r * r - 2.0 * r * R_min * std::sin(sigma);
        num = r * std::cos(sigma) - std::sqrt(disc);
        den = 2.0 * R_min - r * std::sin(sigma);
    }
    const double alpha = std::atan(num / den);
    return 2.0 * R_min * alpha + r * std::sin(sigma) / std::sin(2.0 * alpha) -
           R_min * std::tan(alpha);
}

FullState nondimensionalize(const PhysicalState& physical, const Scales& scales) {
    scales.validate();
    return {physical.r / scales.length_ref(), physical.lambda, physical.sigma};
}

PhysicalState redimensionalize(const FullState& state, const Scales& scales) {
    scales.validate();
    return {state.r * scales.length_ref(), state.lambda, state.sigma};
}

double nondim_time(double t_seconds, const Scales& scales) { return t_seconds / scales.time_ref(); }
double redim_time(double t, const Scales& scales) { return t * scales.time_ref(); }
double nondim_accel(double a_si, const Scales& scales) { return a_si / scales.accel_ref(); }
double redim_accel(double u, const Scales& scales) { return u * scales.accel_ref(); }

}  // namespace optiguide
