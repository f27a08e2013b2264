#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "optiguide/dataset.hpp"

namespace optiguide {

// Error-distribution-smoothing data filter. Input space is partitioned into
// boxes, each box is scored by its complexity-to-density ratio
// rho = g_c * g_s / |box| (max Hessian Frobenius norm times max pairwise
// squared distance over sample count), and samples are removed greedily from
// the lowest-rho boxes while the upper quantile mu + z sigma of log(rho)
// stays below the threshold epsilon.

struct Region {
    std::vector<int> indices;       // dataset sample indices, ascending
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();  // box bounds in standardized psi
    Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

struct CdrStats {
    double mu_rho = 0.0;
    double sigma_rho = 0.0;
    std::size_t k = 0;

    double upper(double z) const { return mu_rho + z * sigma_rho; }
};

struct FilterConfig {
    double z = 1.645;          // one-sided 95% coefficient
    double epsilon = 0.01;
    int n_max = 128;           // split regions larger than this
    int knn = 20;              // neighborhood for the local quadratic fit
    double cdr_floor = 1e-12;  // clamp before taking logs
    int jobs = 1;              // worker threads for curvature estimation

    void validate() const;
};

// Standardized copy of the dataset inputs used by all filter computations.
struct PsiCloud {
    std::vector<Eigen::Vector3d> psi;  // standardized coordinates
    std::vector<double> u;
    Standardizer3 standardizer;

    static PsiCloud standardize(const Dataset& dataset);
    std::size_t size() const { return psi.size(); }
};

// Recursive median splits along the widest axis until every region holds at
// most n_max samples. Regions tile the data: disjoint and covering.
std::vector<Region> partition(const PsiCloud& cloud, int n_max);

// Frobenius norm of the Hessian of a full quadratic least-squares fit over
// the knn nearest neighbors of sample `index`. Rank-deficient neighborhoods
// report zero curvature (floor-level complexity) instead of failing.
double local_hessian_frobenius(const PsiCloud& cloud, int index, int knn);

// Batch version sharing one spatial index; optionally multi-threaded.
// degenerate_count, when given, receives the number of rank-deficient fits.
std::vector<double> all_hessian_frobenius(const PsiCloud& cloud, int knn, int jobs = 1,
                                          std::size_t* degenerate_count = nullptr);

double region_cdr(const Region& region, const PsiCloud& cloud,
                  const std::vector<double>& curvature, double cdr_floor);

CdrStats log_cdr_stats(const std::vector<double>& region_cdrs);

struct FilterReport {
    std::size_t initial_size = 0;
    std::size_t final_size = 0;
    double epsilon = 0.0;
    double z = 0.0;
    CdrStats stats_before;
    CdrStats stats_after;             // recomputed from scratch on the retained set
    CdrStats stats_incremental;       // running statistics at the stop point
    std::vector<int> removals_per_region;
    std::size_t degenerate_neighborhoods = 0;
    bool epsilon_infeasible = false;  // threshold below the initial statistic
};

struct FilterResult {
    std::vector<int> retained;  // ascending dataset indices
    FilterReport report;
};

FilterResult filter(const Dataset& dataset, const FilterConfig& cfg);

// Size-versus-epsilon curve from a single greedy pass; each entry matches
// what filter() would retain at that epsilon.
struct SweepPoint {
    double epsilon = 0.0;
    std::size_t retained = 0;
};
std::vector<SweepPoint> filter_sweep(const Dataset& dataset, const FilterConfig& cfg,
                                     const std::vector<double>& epsilons);

// Retained indices at one epsilon of a sweep, identical to filter() at that
// epsilon. Convenience for harnesses that probe several thresholds.
FilterResult filter_at(const Dataset& dataset, const FilterConfig& cfg, double epsilon);

std::vector<double> default_epsilon_sweep();

}  // namespace optiguide
