#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "optiguide/dataset.hpp"

namespace optiguide {

// Exact Gaussian-process regression psi = (r, sigma, t_go) -> u with a
// squared-exponential kernel, per-dimension lengthscales and a constant mean.
// Hyperparameters are trained by gradient ascent on the log marginal
// likelihood; prediction returns posterior mean and latent variance.

struct GpHyperparams {
    double mean_const = 0.0;
    Eigen::Vector3d log_lengthscales = Eigen::Vector3d::Zero();
    double log_signal_var = 0.0;
    double log_noise_var = std::log(1e-4);

    double signal_var() const { return std::exp(log_signal_var); }
    double noise_var() const { return std::exp(log_noise_var); }
    Eigen::Vector3d lengthscales() const { return log_lengthscales.array().exp(); }

    // Packing order: mean, log lengthscales (3), log signal var, log noise var.
    Eigen::VectorXd pack() const;
    static GpHyperparams unpack(const Eigen::VectorXd& theta);
};

struct GpTrainData {
    Eigen::MatrixXd inputs;   // n x 3, standardized
    Eigen::VectorXd targets;  // n

    Eigen::Index size() const { return targets.size(); }
};

double kernel(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const GpHyperparams& hyper);

double log_marginal_likelihood(const GpHyperparams& hyper, const GpTrainData& data);

// Analytic gradient in pack() order.
Eigen::VectorXd lml_gradient(const GpHyperparams& hyper, const GpTrainData& data);

struct FitOptions {
    int iters = 150;
    double grad_tol = 1e-6;
    int max_train_size = 4000;
    bool subsample = true;  // seeded uniform subsample when data exceeds the cap
    std::uint64_t seed = 0;

    void validate() const;
};

struct Prediction {
    double mu_star = 0.0;
    double var_star = 0.0;
};

struct TrainedGpModel {
    GpHyperparams hyper;
    Eigen::MatrixXd train_inputs;   // standardized
    Eigen::VectorXd train_targets;
    Standardizer3 standardizer;
    Eigen::MatrixXd chol_lower;     // L with L L^T = K + sigma_n^2 I + jitter
    Eigen::VectorXd alpha;          // (K + sigma_n^2 I)^{-1} (U - m)
    double jitter = 0.0;

    Eigen::Index size() const { return train_targets.size(); }
};

struct FitResult {
    TrainedGpModel model;
    std::vector<double> lml_trace;  // LML after each accepted step
    int accepted_steps = 0;
};

// Gradient ascent with an adaptive step: halve on an LML decrease, grow 1.2x
// on an increase. Data is standardized internally; scale-aware defaults seed
// the hyperparameters.
FitResult fit(const Dataset& dataset, const FitOptions& options);
FitResult fit(const GpTrainData& data, const Standardizer3& standardizer,
              const GpHyperparams& init, const FitOptions& options);

// Posterior mean and latent variance at a raw (unstandardized) query.
Prediction predict(const TrainedGpModel& model, const Eigen::Vector3d& psi_raw);

// Mean only; skips the O(n^2) variance solve for bulk evaluations.
double predict_mean(const TrainedGpModel& model, const Eigen::Vector3d& psi_raw);

// JSON persistence; the factorization is recomputed on load.
void save_model(const TrainedGpModel& model, const std::filesystem::path& path,
                std::uint64_t config_hash = 0, std::uint64_t seed = 0);
TrainedGpModel load_model(const std::filesystem::path& path);

// Scale-aware initial hyperparameters for a target vector.
GpHyperparams default_init(const Eigen::VectorXd& targets);

// Refactorizes the Gram matrix for the given hyperparameters (used after
// loading or when reusing data with fixed hyperparameters).
TrainedGpModel assemble_model(const GpTrainData& data, const Standardizer3& standardizer,
                              const GpHyperparams& hyper);

}  // namespace optiguide
