#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "optiguide/dataset.hpp"
#include "optiguide/dynamics.hpp"

namespace optiguide {

// Backward generation of optimal trajectories. The parameterized system runs
// the reduced Hamiltonian flow in reverse from the terminal constraint
// (r, sigma) = (0, 0), so optimality and the terminal conditions hold by
// construction; the state transition matrix of the augmented flow steers the
// terminal costate so generated initial states land on a requested grid.

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

// Augmented variables Z = [r, sigma, p_r, p_sigma] and their transition matrix.
struct AugmentedFlow {
    Vec4 z = Vec4::Zero();
    Mat4 phi = Mat4::Identity();
};

struct GenerationConfig {
    // Desired initial-state region and terminal-time window. Terminal times
    // are multiples of the minimum flight time of each (r, sigma) node.
    double r_min = 0.8;
    double r_max = 1.2;
    double sigma_min = 0.0;
    double sigma_max = 1.5707963267948966;
    double t_min = 1.2;
    double t_max = 2.0;
    double dr = 0.05;
    double dsigma = 0.05;
    double dtf = 0.04;

    double u_m = 5.0;       // acceleration bound
    double dt = 1e-3;       // integration step
    double eps_r = 1e-3;    // terminal radius offset regularizing 1/r
    double newton_tol = 1e-6;
    int newton_max_iter = 25;

    void validate() const;

    // v = 1 in reduced units, so the minimum turn radius is 1/u_m.
    double turn_radius() const { return 1.0 / u_m; }
};

// Right-hand side of the backward (parameterized) system; the command is
// clip_control(p_sigma, u_m) throughout.
Vec4 parameterized_rhs(const Vec4& z, double u_m);

// Analytic Jacobian of parameterized_rhs. The command derivative w.r.t.
// p_sigma is 1 strictly inside the bound and 0 otherwise.
Mat4 jacobian_FZ(const Vec4& z, double u_m);

struct BackwardTrajectory {
    std::vector<Sample> samples;  // one per integration step, t_go increasing
    std::vector<Vec4> states;     // augmented state at the same instants
    Mat4 phi_final = Mat4::Identity();

    // Running cost integral u^2/2 dt over the stored path.
    double effort() const;
};

// Integrates Z and Phi' = F_Z Phi jointly with fixed-step RK4 for duration
// t_d, starting from (eps_r, 0, P0). The first 1% of backward time runs on
// dt/10 substeps to resolve the 1/r terms near the terminal point.
BackwardTrajectory integrate_backward(const Costate& p0, double t_d,
                                      const GenerationConfig& cfg);

// dX(t_d)/dP(t_0): state rows, costate columns of Phi.
Mat2 sensitivity_block(const Mat4& phi);

// One predictor update of the terminal costate for a desired change of the
// generated state and of the flight duration.
Costate costate_step(const Costate& p0_prev, const Mat2& sensitivity, const Vec2& xdot_end,
                     const Vec2& dx_desired, double dt_desired);

struct RefineResult {
    Costate p0;
    BackwardTrajectory trajectory;
    int iterations = 0;
};

// Newton corrector on the terminal costate: drives the generated initial
// state to x_target within cfg.newton_tol.
RefineResult refine_costate(const Vec2& x_target, double t_d, const Costate& p0_guess,
                            const GenerationConfig& cfg);

struct GridNode {
    double r_d = 0.0;
    double sigma_d = 0.0;
    double t_mult = 0.0;  // terminal time as a multiple of the node minimum time
};

// Boustrophedon visit order: t outermost, sigma middle, r innermost, with
// alternating directions so consecutive nodes differ by one grid step.
std::vector<GridNode> serpentine_order(const GenerationConfig& cfg);

struct NodeResult {
    GridNode node;
    double t_d = 0.0;  // absolute backward duration
    bool converged = false;
    int newton_iterations = 0;
    Costate p0;
    Vec2 achieved = Vec2::Zero();
    int traj_id = -1;
    double effort = 0.0;
    std::string failure;
};

struct GenerationReport {
    std::size_t total_nodes = 0;
    std::size_t converged_nodes = 0;
    std::size_t skipped_nodes = 0;
    double max_achieved_error = 0.0;
    double mean_newton_iterations = 0.0;
    std::vector<int> iteration_histogram;  // index = iterations used
    std::vector<NodeResult> nodes;
};

struct GenerationResult {
    Dataset dataset;
    GenerationReport report;
};

// Runs the full region generation along the serpentine route: cold start on
// the first node, then costate_step predictor + refine_costate corrector.
// Throws NoConvergence if more than 5% of nodes fail to converge.
GenerationResult generate_region(const GenerationConfig& cfg);

// Forward RK4 replay of one stored trajectory, driving the reduced dynamics
// with the recorded command history (piecewise-linear in time). Returns the
// end state, which should recover the terminal constraint.
EngagementState replay_forward(const BackwardTrajectory& trajectory);
EngagementState replay_forward(const std::vector<Sample>& trajectory_samples);

}  // namespace optiguide
