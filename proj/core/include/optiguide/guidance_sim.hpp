#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "optiguide/dynamics.hpp"
#include "optiguide/gpr.hpp"

namespace optiguide {

// Closed-loop guidance: at every control step the learned command (GPR
// posterior mean) is blended with the analytical impact-time law, weighted by
// a confidence derived from the posterior spread.

enum class BlendMode { literal, variance };
enum class CommandSource { blended, gpr_only };

struct BlendConfig {
    BlendMode mode = BlendMode::variance;
    // Reference spread for variance mode; non-positive requests the
    // self-calibrated default (a fixed fraction of the model's prior spread).
    double sigma_ref = -1.0;

    static BlendMode mode_from_string(const std::string& name);
    static std::string mode_to_string(BlendMode mode);
};

struct SimConfig {
    FullState initial;
    double t_f = 0.0;  // absolute terminal-time constraint
    double dt = 1e-3;
    double u_m = 5.0;
    ItcgParams itcg;
    BlendConfig blend;
    CommandSource source = CommandSource::blended;
    double r_hit = 2e-3;
    double timeout_margin = 0.5;  // pursue until t_f + margin before declaring a miss

    void validate() const;
};

struct TraceRow {
    double t = 0.0;
    double r = 0.0;
    double lambda = 0.0;
    double sigma = 0.0;
    double u = 0.0;        // commanded acceleration a_n
    double mu_star = 0.0;
    double sigma_star = 0.0;
    double a_p = 0.0;
    double rho = 0.0;
};

struct SimResult {
    std::vector<TraceRow> trace;
    bool hit = false;
    double miss_distance = 0.0;      // range at termination
    double impact_time_error = 0.0;  // |t_hit - t_f| on hits
    double t_end = 0.0;
    double effort = 0.0;             // integral of u^2/2
    std::string outcome;             // "hit", "flyby", "timeout"
};

// Confidence exactly as printed: 1 - exp(-(a_p-mu)^2 / (2 sigma*^2)) / sqrt(2 pi sigma*),
// clamped to [0, 1]. Grows when the learned and analytical commands disagree.
double confidence_literal(double a_p, double mu_star, double sigma_star);

// Monotone-decreasing alternative: sigma_ref^2 / (sigma_ref^2 + sigma*^2).
double confidence_variance(double sigma_star, double sigma_ref);

// a_n = rho mu* + (1 - rho) a_p, clamped to the acceleration bound.
double blended_command(double rho, double mu_star, double a_p, double u_m);

// Self-calibrated confidence reference for variance mode.
double default_sigma_ref(const TrainedGpModel& model);

SimResult simulate(const TrainedGpModel& model, const SimConfig& cfg);

struct BatchRow {
    std::string label;
    SimConfig cfg;
    SimResult result;
};

struct BatchMetrics {
    std::vector<BatchRow> rows;
    std::size_t hits = 0;
    double max_miss_distance = 0.0;
    double max_impact_time_error = 0.0;
    double mean_effort = 0.0;
};

BatchMetrics evaluate_batch(const TrainedGpModel& model, const std::vector<SimConfig>& cases,
                            int jobs = 1);

// CSV with header t,r,lambda,sigma,u,mu_star,sigma_star,a_p,rho.
void write_trace_csv(const SimResult& result, const std::filesystem::path& path);

}  // namespace optiguide
