#pragma once

#include "optiguide/errors.hpp"

namespace optiguide {

// Planar engagement against a stationary target, nondimensionalized so the
// missile speed is 1 and the initial range is 1. All angles in radians.

// Reduced state (r, sigma): range and heading error.
struct EngagementState {
    double r = 1.0;
    double sigma = 0.0;
};

// Polar state including the line-of-sight angle, used for trajectory
// reconstruction in the plane. The flight path angle is sigma + lambda.
struct FullState {
    double r = 1.0;
    double lambda = 0.0;
    double sigma = 0.0;
};

// Adjoint pair of the reduced state.
struct Costate {
    double p_r = 0.0;
    double p_sigma = 0.0;
};

// Physical reference scales: length R_ref = r0, time T_ref = r0/v,
// acceleration U_ref = v^2/r0.
struct Scales {
    double r0 = 1.0;  // m
    double v = 1.0;   // m/s

    double length_ref() const { return r0; }
    double time_ref() const { return r0 / v; }
    double accel_ref() const { return v * v / r0; }

    void validate() const {
        if (r0 <= 0.0 || v <= 0.0) throw ConfigError("scales require r0 > 0 and v > 0");
    }
};

// Gains of the analytical impact-time guidance law.
struct ItcgParams {
    double N = 3.0;   // navigation gain, must exceed 1/2
    double K = 9.0;   // time-error gain
    double u_m = 5.0; // acceleration bound

    void validate() const {
        if (N <= 0.5) throw ConfigError("ItcgParams: N must exceed 1/2");
        if (K <= 0.0) throw ConfigError("ItcgParams: K must be positive");
        if (u_m <= 0.0) throw ConfigError("ItcgParams: u_m must be positive");
    }
};

// Physical engagement state in SI units, for the scaling round trip.
struct PhysicalState {
    double r = 0.0;       // m
    double lambda = 0.0;  // rad
    double sigma = 0.0;   // rad
};

struct StateDerivative {
    double dr = 0.0;
    double dsigma = 0.0;
};

struct FullStateDerivative {
    double dr = 0.0;
    double dlambda = 0.0;
    double dsigma = 0.0;
};

struct CostateDerivative {
    double dp_r = 0.0;
    double dp_sigma = 0.0;
};

// |sin sigma| floor used by the analytical law near sigma = 0.
inline constexpr double kSinSigmaFloor = 1e-3;

// Reduced dynamics: dr = -cos sigma, dsigma = u + sin(sigma)/r.
StateDerivative reduced_rhs(const EngagementState& state, double u);

// Full polar dynamics including dlambda = -sin(sigma)/r.
FullStateDerivative full_rhs(const FullState& state, double u);

// Adjoint dynamics of the reduced system.
CostateDerivative costate_rhs(const EngagementState& state, const Costate& costate);

// Command extremal: p_sigma clamped to [-u_m, u_m].
double clip_control(double p_sigma, double u_m);

// Control Hamiltonian u^2/2 - p_r cos(sigma) + p_sigma (u + sin(sigma)/r).
double hamiltonian(const EngagementState& state, const Costate& costate, double u);

// Time-to-go estimate r (1 + sin^2(sigma) / (2 (2N - 1))); equals r head-on.
double tgo_estimate(const EngagementState& state, double N);

// Analytical impact-time guidance command, clamped to [-u_m, u_m].
double analytical_command(const EngagementState& state, double t, double t_f,
                          const ItcgParams& params);

// Minimum achievable flight time with turn radius R_min (arc plus tangent).
double min_terminal_time(const EngagementState& state, double R_min);

// Scaling helpers. Round trip is the identity to machine precision.
FullState nondimensionalize(const PhysicalState& physical, const Scales& scales);
PhysicalState redimensionalize(const FullState& state, const Scales& scales);
double nondim_time(double t_seconds, const Scales& scales);
double redim_time(double t, const Scales& scales);
double nondim_accel(double a_si, const Scales& scales);
double redim_accel(double u, const Scales& scales);

}  // namespace optiguide
