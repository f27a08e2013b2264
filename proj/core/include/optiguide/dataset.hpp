#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace optiguide {

// One supervised pair: input psi = (r, sigma, t_go) and optimal command u,
// tagged with the trajectory it came from.
struct Sample {
    int traj_id = 0;
    double r = 0.0;
    double sigma = 0.0;
    double t_go = 0.0;
    double u = 0.0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::string provenance;  // JSON snapshot of the generating configuration

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

inline Eigen::Vector3d psi_of(const Sample& s) { return {s.r, s.sigma, s.t_go}; }

// Per-dimension shift/scale for psi, fitted with the sample standard deviation.
struct Standardizer3 {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();

    static Standardizer3 fit(const std::vector<Eigen::Vector3d>& points);
    static Standardizer3 fit(const Dataset& dataset);

    Eigen::Vector3d apply(const Eigen::Vector3d& psi) const {
        return (psi - mean).cwiseQuotient(scale);
    }
    Eigen::Vector3d invert(const Eigen::Vector3d& z) const {
        return z.cwiseProduct(scale) + mean;
    }
};

// CSV format: header `traj_id,r,sigma,t_go,u`, one sample per row, doubles
// written with full round-trip precision.
void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

}  // namespace optiguide
