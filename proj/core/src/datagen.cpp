#include "optiguide/datagen.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>

#include "optiguide/errors.hpp"

namespace optiguide {

void GenerationConfig::validate() const {
    if (!(r_min < r_max)) throw ConfigError("generation: r_min must be below r_max");
    if (!(sigma_min < sigma_max)) throw ConfigError("generation: sigma_min must be below sigma_max");
    if (!(t_min < t_max)) throw ConfigError("generation: t_min must be below t_max");
    if (!(t_min >= 1.0)) throw ConfigError("generation: t_min below 1 is infeasible (under the minimum flight time)");
    if (!(dr > 0.0 && dsigma > 0.0 && dtf > 0.0)) throw ConfigError("generation: grid steps must be positive");
    if (!(u_m > 0.0)) throw ConfigError("generation: u_m must be positive");
    if (!(dt > 0.0)) throw ConfigError("generation: dt must be positive");
    if (!(eps_r > 0.0)) throw ConfigError("generation: eps_r must be positive");
    if (!(newton_tol > 0.0)) throw ConfigError("generation: newton_tol must be positive");
    if (newton_max_iter < 1) throw ConfigError("generation: newton_max_iter must be at least 1");
}

Vec4 parameterized_rhs(const Vec4& z, double u_m) {
    const EngagementState x{z[0], z[1]};
    const Costate p{z[2], z[3]};
    const double u = clip_control(p.p_sigma, u_m);
    // Exactly the negated forward field evaluated with the same command.
    const StateDerivative xd = reduced_rhs(x, u);
    const CostateDerivative pd = costate_rhs(x, p);
    return {-xd.dr, -xd.dsigma, -pd.dp_r, -pd.dp_sigma};
}

Mat4 jacobian_FZ(const Vec4& z, double u_m) {
    const double r = z[0];
    if (!(r > 0.0)) throw NonPositiveRadius(r);
    const double s = std::sin(z[1]);
    const double c = std::cos(z[1]);
    const double p_r = z[2];
    const double p_sigma = z[3];
    const double du = std::abs(p_sigma) < u_m ? 1.0 : 0.0;
    const double r2 = r * r;

    Mat4 J;
    // d(r') / dZ,  r' = cos(sigma)
    J(0, 0) = 0.0;
    J(0, 1) = -s;
    J(0, 2) = 0.0;
    J(0, 3) = 0.0;
    // d(sigma') / dZ,  sigma' = -(u + sin(sigma)/r)
    J(1, 0) = s / r2;
    J(1, 1) = -c / r;
    J(1, 2) = 0.0;
    J(1, 3) = -du;
    // d(p_r') / dZ,  p_r' = -p_sigma sin(sigma)/r^2
    J(2, 0) = 2.0 * p_sigma * s / (r2 * r);
    J(2, 1) = -p_sigma * c / r2;
    J(2, 2) = 0.0;
    J(2, 3) = -s / r2;
    // d(p_sigma') / dZ,  p_sigma' = p_r sin(sigma) + p_sigma cos(sigma)/r
    J(3, 0) = -p_sigma * c / r2;
    J(3, 1) = p_r * c - p_sigma * s / r;
    J(3, 2) = s;
    J(3, 3) = c / r;
    return J;
}

double BackwardTrajectory::effort() const {
    double acc = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double dt = samples[i].t_go - samples[i - 1].t_go;
        const double ua = samples[i - 1].u;
        const double ub = samples[i].u;
        acc += 0.25 * (ua * ua + ub * ub) * dt;  // trapezoid on u^2/2
    }
    return acc;
}

namespace {

struct AugmentedDerivative {
    Vec4 dz;
    Mat4 dphi;
};

AugmentedDerivative augmented_rhs(const AugmentedFlow& a, double u_m) {
    return {parameterized_rhs(a.z, u_m), jacobian_FZ(a.z, u_m) * a.phi};
}

void rk4_step(AugmentedFlow& a, double h, double u_m) {
    const AugmentedDerivative k1 = augmented_rhs(a, u_m);
    AugmentedFlow tmp{a.z + 0.5 * h * k1.dz, a.phi + 0.5 * h * k1.dphi};
    const AugmentedDerivative k2 = augmented_rhs(tmp, u_m);
    tmp = {a.z + 0.5 * h * k2.dz, a.phi + 0.5 * h * k2.dphi};
    const AugmentedDerivative k3 = augmented_rhs(tmp, u_m);
    tmp = {a.z + h * k3.dz, a.phi + h * k3.dphi};
    const AugmentedDerivative k4 = augmented_rhs(tmp, u_m);
    a.z += (h / 6.0) * (k1.dz + 2.0 * (k2.dz + k3.dz) + k4.dz);
    a.phi += (h / 6.0) * (k1.dphi + 2.0 * (k2.dphi + k3.dphi) + k4.dphi);
}

constexpr double kBlowupLimit = 1e8;

void check_flow(const AugmentedFlow& a, double t) {
    if (!(a.z[0] > 0.0)) throw NonPositiveRadius(a.z[0]);
    for (int i = 0; i < 4; ++i) {
        if (!std::isfinite(a.z[i]) || std::abs(a.z[i]) > kBlowupLimit) {
            throw NumericalBlowup("backward flow exceeded 1e8 at t=" + std::to_string(t));
        }
    }
}

}  // namespace

BackwardTrajectory integrate_backward(const Costate& p0, double t_d,
                                      const GenerationConfig& cfg) {
    if (!(t_d > 0.0)) throw ConfigError("integrate_backward requires t_d > 0");

    AugmentedFlow flow;
    flow.z = Vec4{cfg.eps_r, 0.0, p0.p_r, p0.p_sigma};
    flow.phi = Mat4::Identity();

    BackwardTrajectory traj;
    const std::size_t estimated = static_cast<std::size_t>(t_d / cfg.dt) + 128;
    traj.samples.reserve(estimated);
    traj.states.reserve(estimated);

    const auto record = [&](double t_go) {
        traj.samples.push_back(Sample{0, flow.z[0], flow.z[1], t_go,
                                      clip_control(flow.z[3], cfg.u_m)});
        traj.states.push_back(flow.z);
    };

    record(0.0);

    // Substep phase covering the stiff 1/r region next to the terminal point.
    const double fine_end = 0.01 * t_d;
    const double fine_dt = cfg.dt / 10.0;
    double t = 0.0;
    while (t < fine_end - 1e-15) {
        const double h = std::min(fine_dt, fine_end - t);
        rk4_step(flow, h, cfg.u_m);
        t += h;
        check_flow(flow, t);
        record(t);
    }
    while (t < t_d - 1e-15) {
        const double h = std::min(cfg.dt, t_d - t);
        rk4_step(flow, h, cfg.u_m);
        t += h;
        check_flow(flow, t);
        record(t);
    }

    traj.phi_final = flow.phi;
    return traj;
}

Mat2 sensitivity_block(const Mat4& phi) { return phi.block<2, 2>(0, 2); }

Costate costate_step(const Costate& p0_prev, const Mat2& sensitivity, const Vec2& xdot_end,
                     const Vec2& dx_desired, double dt_desired) {
    const double det = sensitivity.determinant();
    if (std::abs(det) <= 1e-12) throw SingularSensitivity(det);
    const Vec2 delta = sensitivity.inverse() * (dx_desired + xdot_end * dt_desired);
    return {p0_prev.p_r + delta[0], p0_prev.p_sigma + delta[1]};
}

RefineResult refine_costate(const Vec2& x_target, double t_d, const Costate& p0_guess,
                            const GenerationConfig& cfg) {
    Costate p0 = p0_guess;
    if (!std::isfinite(p0.p_r) || !std::isfinite(p0.p_sigma)) {
        throw ConfigError("refine_costate requires a finite costate guess");
    }

    BackwardTrajectory traj = integrate_backward(p0, t_d, cfg);
    Vec2 achieved{traj.samples.back().r, traj.samples.back().sigma};
    double residual = (x_target - achieved).lpNorm<Eigen::Infinity>();

    for (int iter = 0; iter < cfg.newton_max_iter; ++iter) {
        if (residual <= cfg.newton_tol) {
            return {p0, std::move(traj), iter};
        }
        const Mat2 S = sensitivity_block(traj.phi_final);
        const double det = S.determinant();
        if (std::abs(det) <= 1e-12) throw SingularSensitivity(det);
        Vec2 step = S.inverse() * (x_target - achieved);

        // Trust-region cap plus halving line search on the residual norm.
        const double step_norm = step.norm();
        constexpr double kMaxStep = 4.0;
        if (step_norm > kMaxStep) step *= kMaxStep / step_norm;

        double scale = 1.0;
        bool accepted = false;
        for (int attempt = 0; attempt < 8; ++attempt) {
            const Costate candidate{p0.p_r + scale * step[0], p0.p_sigma + scale * step[1]};
            try {
                BackwardTrajectory cand_traj = integrate_backward(candidate, t_d, cfg);
                const Vec2 cand_achieved{cand_traj.samples.back().r,
                                         cand_traj.samples.back().sigma};
                const double cand_res = (x_target - cand_achieved).lpNorm<Eigen::Infinity>();
                if (cand_res < residual || scale <= 1.0 / 128.0) {
                    p0 = candidate;
                    traj = std::move(cand_traj);
                    achieved = cand_achieved;
                    residual = cand_res;
                    accepted = true;
                    break;
                }
            } catch (const NonPositiveRadius&) {
                // fall through to a shorter step
            } catch (const NumericalBlowup&) {
            }
            scale *= 0.5;
        }
        if (!accepted) {
            throw NoConvergence("refine_costate: no productive step at residual " +
                                std::to_string(residual));
        }
    }
    if (residual <= cfg.newton_tol) {
        return {p0, std::move(traj), cfg.newton_max_iter};
    }
    throw NoConvergence("refine_costate: residual " + std::to_string(residual) + " after " +
                        std::to_string(cfg.newton_max_iter) + " iterations");
}

namespace {

std::vector<double> grid_values(double lo, double hi, double step) {
    std::vector<double> values;
    const double span = hi - lo;
    const int count = static_cast<int>(std::floor(span / step + 1e-9)) + 1;
    values.reserve(count);
    for (int i = 0; i < count; ++i) values.push_back(lo + i * step);
    return values;
}

}  // namespace

std::vector<GridNode> serpentine_order(const GenerationConfig& cfg) {
    cfg.validate();
    const auto rs = grid_values(cfg.r_min, cfg.r_max, cfg.dr);
    const auto sigmas = grid_values(cfg.sigma_min, cfg.sigma_max, cfg.dsigma);
    const auto ts = grid_values(cfg.t_min, cfg.t_max, cfg.dtf);

    std::vector<GridNode> route;
    route.reserve(rs.size() * sigmas.size() * ts.size());
    bool sigma_forward = true;
    bool r_forward = true;
    for (std::size_t it = 0; it < ts.size(); ++it) {
        for (std::size_t js = 0; js < sigmas.size(); ++js) {
            const std::size_t j = sigma_forward ? js : sigmas.size() - 1 - js;
            for (std::size_t kr = 0; kr < rs.size(); ++kr) {
                const std::size_t k = r_forward ? kr : rs.size() - 1 - kr;
                route.push_back({rs[k], sigmas[j], ts[it]});
            }
            r_forward = !r_forward;
        }
        sigma_forward = !sigma_forward;
    }
    return route;
}

namespace {

// The ballistic manifold (sigma = 0, p_sigma = 0) is invariant and its
// sensitivity block is exactly singular, so the nominal cold start needs an
// off-manifold kick before Newton can move the generated range. Terminal
// costates scale with eps_r (the flow amplifies p_sigma by roughly 1/eps_r),
// so the kicks do too.
constexpr double kColdStartKickScales[] = {0.0, -2.0, -10.0, -50.0, 2.0, 10.0, 50.0};

RefineResult cold_start(const Vec2& x_target, double t_d, const GenerationConfig& cfg) {
    std::string last_error;
    for (const double scale : kColdStartKickScales) {
        try {
            return refine_costate(x_target, t_d, Costate{-1.0, scale * cfg.eps_r}, cfg);
        } catch (const std::exception& e) {
            last_error = e.what();
        }
    }
    throw NoConvergence("cold start failed on the first grid node: " + last_error);
}

}  // namespace

GenerationResult generate_region(const GenerationConfig& cfg) {
    cfg.validate();
    const std::vector<GridNode> route = serpentine_order(cfg);

    GenerationResult result;
    result.report.total_nodes = route.size();
    result.report.nodes.reserve(route.size());

    bool have_anchor = false;
    Costate anchor_p0;
    Vec2 anchor_x = Vec2::Zero();
    double anchor_t_d = 0.0;
    Mat2 anchor_S = Mat2::Identity();
    Vec2 anchor_xdot = Vec2::Zero();

    int next_traj_id = 0;
    long total_iterations = 0;

    for (const GridNode& node : route) {
        NodeResult record;
        record.node = node;
        const double t_min_node =
            min_terminal_time(EngagementState{node.r_d, node.sigma_d}, cfg.turn_radius());
        record.t_d = node.t_mult * t_min_node;
        const Vec2 x_target{node.r_d, node.sigma_d};

        try {
            RefineResult refined;
            if (!have_anchor) {
                refined = cold_start(x_target, record.t_d, cfg);
            } else {
                Costate guess = anchor_p0;
                try {
                    guess = costate_step(anchor_p0, anchor_S, anchor_xdot, x_target - anchor_x,
                                         record.t_d - anchor_t_d);
                } catch (const SingularSensitivity&) {
                    // keep the previous costate as the guess
                }
                refined = refine_costate(x_target, record.t_d, guess, cfg);
            }

            record.converged = true;
            record.newton_iterations = refined.iterations;
            record.p0 = refined.p0;
            record.achieved = Vec2{refined.trajectory.samples.back().r,
                                   refined.trajectory.samples.back().sigma};
            record.traj_id = next_traj_id;
            record.effort = refined.trajectory.effort();
            total_iterations += refined.iterations;

            const Vec4& z_end = refined.trajectory.states.back();
            anchor_p0 = refined.p0;
            anchor_x = record.achieved;
            anchor_t_d = record.t_d;
            anchor_S = sensitivity_block(refined.trajectory.phi_final);
            anchor_xdot = parameterized_rhs(z_end, cfg.u_m).head<2>();
            have_anchor = true;

            for (Sample s : refined.trajectory.samples) {
                s.traj_id = next_traj_id;
                result.dataset.samples.push_back(s);
            }
            ++next_traj_id;

            result.report.max_achieved_error = std::max(
                result.report.max_achieved_error,
                (x_target - record.achieved).lpNorm<Eigen::Infinity>());

            const std::size_t bucket = static_cast<std::size_t>(record.newton_iterations);
            if (result.report.iteration_histogram.size() <= bucket) {
                result.report.iteration_histogram.resize(bucket + 1, 0);
            }
            ++result.report.iteration_histogram[bucket];
        } catch (const std::exception& e) {
            record.converged = false;
            record.failure = e.what();
        }

        result.report.nodes.push_back(std::move(record));
    }

    result.report.converged_nodes = 0;
    for (const auto& n : result.report.nodes) {
        if (n.converged) ++result.report.converged_nodes;
    }
    result.report.skipped_nodes = result.report.total_nodes - result.report.converged_nodes;
    if (result.report.converged_nodes > 0) {
        result.report.mean_newton_iterations =
            static_cast<double>(total_iterations) /
            static_cast<double>(result.report.converged_nodes);
    }

    if (result.report.skipped_nodes * 20 > result.report.total_nodes) {
        throw NoConvergence("generate_region: more than 5% of grid nodes failed (" +
                            std::to_string(result.report.skipped_nodes) + " of " +
                            std::to_string(result.report.total_nodes) + ")");
    }
    return result;
}

namespace {

double interp_command(const std::vector<Sample>& samples, std::size_t hint, double t_go) {
    // samples are ordered by increasing t_go; hint brackets the query
    std::size_t i = hint;
    while (i + 1 < samples.size() && samples[i + 1].t_go < t_go) ++i;
    while (i > 0 && samples[i].t_go > t_go) --i;
    if (i + 1 >= samples.size()) return samples.back().u;
    const double span = samples[i + 1].t_go - samples[i].t_go;
    if (span <= 0.0) return samples[i].u;
    const double w = std::clamp((t_go - samples[i].t_go) / span, 0.0, 1.0);
    return samples[i].u + w * (samples[i + 1].u - samples[i].u);
}

}  // namespace

EngagementState replay_forward(const std::vector<Sample>& trajectory_samples) {
    if (trajectory_samples.size() < 2) {
        throw ConfigError("replay_forward needs at least two samples");
    }
    const auto& samples = trajectory_samples;
    EngagementState state{samples.back().r, samples.back().sigma};
    // March the stored grid in reverse: forward time t = t_d - t_go.
    for (std::size_t k = samples.size() - 1; k > 0; --k) {
        const double tgo_hi = samples[k].t_go;
        const double tgo_lo = samples[k - 1].t_go;
        const double h = tgo_hi - tgo_lo;
        if (h <= 0.0) continue;
        const double u0 = interp_command(samples, k - 1, tgo_hi);
        const double um = interp_command(samples, k - 1, tgo_hi - 0.5 * h);
        const double u1 = interp_command(samples, k - 1, tgo_lo);

        const StateDerivative k1 = reduced_rhs(state, u0);
        const StateDerivative k2 =
            reduced_rhs({state.r + 0.5 * h * k1.dr, state.sigma + 0.5 * h * k1.dsigma}, um);
        const StateDerivative k3 =
            reduced_rhs({state.r + 0.5 * h * k2.dr, state.sigma + 0.5 * h * k2.dsigma}, um);
        const StateDerivative k4 =
            reduced_rhs({state.r + h * k3.dr, state.sigma + h * k3.dsigma}, u1);
        state.r += (h / 6.0) * (k1.dr + 2.0 * (k2.dr + k3.dr) + k4.dr);
        state.sigma += (h / 6.0) * (k1.dsigma + 2.0 * (k2.dsigma + k3.dsigma) + k4.dsigma);
    }
    return state;
}

EngagementState replay_forward(const BackwardTrajectory& trajectory) {
    return replay_forward(trajectory.samples);
}

}  // namespace optiguide
