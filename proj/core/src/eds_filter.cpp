#include "optiguide/eds_filter.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <thread>

#include "optiguide/errors.hpp"

namespace optiguide {

void FilterConfig::validate() const {
    if (!(z >= 0.0)) throw ConfigError("filter: z must be non-negative");
    if (!std::isfinite(epsilon)) throw ConfigError("filter: epsilon must be finite");
    if (knn < 10) throw ConfigError("filter: knn must be at least 10");
    if (n_max < 2 * knn) throw ConfigError("filter: n_max must be at least 2*knn");
    if (!(cdr_floor > 0.0)) throw ConfigError("filter: cdr_floor must be positive");
    if (jobs < 1) throw ConfigError("filter: jobs must be at least 1");
}

PsiCloud PsiCloud::standardize(const Dataset& dataset) {
    PsiCloud cloud;
    cloud.standardizer = Standardizer3::fit(dataset);
    cloud.psi.reserve(dataset.size());
    cloud.u.reserve(dataset.size());
    for (const auto& s : dataset.samples) {
        cloud.psi.push_back(cloud.standardizer.apply(psi_of(s)));
        cloud.u.push_back(s.u);
    }
    return cloud;
}

namespace {

// Static 3-d tree over the standardized points. Orderings break distance
// ties by index so queries are reproducible.
class KdTree3 {
  public:
    explicit KdTree3(const std::vector<Eigen::Vector3d>& pts) : pts_(pts) {
        if (pts.empty()) return;
        order_.resize(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) order_[i] = static_cast<int>(i);
        nodes_.reserve(pts.size());
        root_ = build(0, static_cast<int>(pts.size()));
    }

    void knn(const Eigen::Vector3d& q, int k, std::vector<int>& out) const {
        using Entry = std::pair<double, int>;  // (squared distance, index), max on top
        std::priority_queue<Entry> heap;
        search(root_, q, k, heap);
        out.resize(heap.size());
        for (std::size_t i = out.size(); i-- > 0;) {
            out[i] = heap.top().second;
            heap.pop();
        }
    }

  private:
    struct Node {
        int point = -1;
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(int lo, int hi) {
        if (lo >= hi) return -1;
        // split on the widest axis of the bounding box of this range
        Eigen::Vector3d bb_lo = pts_[order_[lo]];
        Eigen::Vector3d bb_hi = bb_lo;
        for (int i = lo + 1; i < hi; ++i) {
            bb_lo = bb_lo.cwiseMin(pts_[order_[i]]);
            bb_hi = bb_hi.cwiseMax(pts_[order_[i]]);
        }
        int axis = 0;
        (bb_hi - bb_lo).maxCoeff(&axis);

        const int mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](int a, int b) {
                             const double va = pts_[a][axis];
                             const double vb = pts_[b][axis];
                             return va < vb || (va == vb && a < b);
                         });
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{order_[mid], axis, -1, -1});
        nodes_[id].left = build(lo, mid);
        nodes_[id].right = build(mid + 1, hi);
        return id;
    }

    void search(int id, const Eigen::Vector3d& q, int k,
                std::priority_queue<std::pair<double, int>>& heap) const {
        if (id < 0) return;
        const Node& node = nodes_[id];
        const Eigen::Vector3d& p = pts_[node.point];
        const double d2 = (p - q).squaredNorm();
        const std::pair<double, int> cand{d2, node.point};
        if (static_cast<int>(heap.size()) < k) {
            heap.push(cand);
        } else if (cand < heap.top()) {
            heap.pop();
            heap.push(cand);
        }
        const double diff = q[node.axis] - p[node.axis];
        const int near = diff <= 0.0 ? node.left : node.right;
        const int far = diff <= 0.0 ? node.right : node.left;
        search(near, q, k, heap);
        if (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().first) {
            search(far, q, k, heap);
        }
    }

    const std::vector<Eigen::Vector3d>& pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

double hessian_from_neighbors(const PsiCloud& cloud, int index,
                              const std::vector<int>& neighbors, bool* degenerate) {
    const int n = static_cast<int>(neighbors.size());
    Eigen::MatrixXd design(n, 10);
    Eigen::VectorXd target(n);
    const Eigen::Vector3d center = cloud.psi[index];
    for (int row = 0; row < n; ++row) {
        const Eigen::Vector3d d = cloud.psi[neighbors[row]] - center;
        design(row, 0) = 1.0;
        design(row, 1) = d[0];
        design(row, 2) = d[1];
        design(row, 3) = d[2];
        design(row, 4) = 0.5 * d[0] * d[0];
        design(row, 5) = 0.5 * d[1] * d[1];
        design(row, 6) = 0.5 * d[2] * d[2];
        design(row, 7) = d[0] * d[1];
        design(row, 8) = d[0] * d[2];
        design(row, 9) = d[1] * d[2];
        target(row) = cloud.u[neighbors[row]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    // Trajectory data is locally one-dimensional: neighborhoods drawn from a
    // single pass are curve segments whose transverse pivots sit orders of
    // magnitude below the leading ones, and the transverse curvature they
    // imply is pure noise. Such fits count as degenerate.
    qr.setThreshold(1e-6);
    if (qr.rank() < 10) {
        if (degenerate) *degenerate = true;
        return 0.0;  // floor-level complexity for a degenerate neighborhood
    }
    const Eigen::VectorXd coef = qr.solve(target);
    const double diag = coef[4] * coef[4] + coef[5] * coef[5] + coef[6] * coef[6];
    const double off = coef[7] * coef[7] + coef[8] * coef[8] + coef[9] * coef[9];
    return std::sqrt(diag + 2.0 * off);
}

}  // namespace

double local_hessian_frobenius(const PsiCloud& cloud, int index, int knn) {
    if (cloud.size() < static_cast<std::size_t>(knn + 10)) {
        throw ConfigError("local_hessian_frobenius needs at least knn + 10 samples");
    }
    KdTree3 tree(cloud.psi);
    std::vector<int> neighbors;
    tree.knn(cloud.psi[index], knn, neighbors);
    return hessian_from_neighbors(cloud, index, neighbors, nullptr);
}

std::vector<double> all_hessian_frobenius(const PsiCloud& cloud, int knn, int jobs,
                                          std::size_t* degenerate_count) {
    if (cloud.size() < static_cast<std::size_t>(knn + 10)) {
        throw ConfigError("all_hessian_frobenius needs at least knn + 10 samples");
    }
    const KdTree3 tree(cloud.psi);
    const std::size_t n = cloud.size();
    std::vector<double> curvature(n, 0.0);
    std::vector<std::size_t> degenerate_per_worker(std::max(jobs, 1), 0);

    const auto worker = [&](std::size_t lo, std::size_t hi, std::size_t slot) {
        std::vector<int> neighbors;
        for (std::size_t i = lo; i < hi; ++i) {
            tree.knn(cloud.psi[i], knn, neighbors);
            bool degenerate = false;
            curvature[i] =
                hessian_from_neighbors(cloud, static_cast<int>(i), neighbors, &degenerate);
            if (degenerate) ++degenerate_per_worker[slot];
        }
    };

    if (jobs <= 1 || n < 1024) {
        worker(0, n, 0);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + jobs - 1) / jobs;
        for (int j = 0; j < jobs; ++j) {
            const std::size_t lo = j * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(worker, lo, hi, static_cast<std::size_t>(j));
        }
        for (auto& th : pool) th.join();
    }
    if (degenerate_count) {
        *degenerate_count = 0;
        for (const auto c : degenerate_per_worker) *degenerate_count += c;
    }
    return curvature;
}

namespace {

void split_region(const PsiCloud& cloud, std::vector<int>& indices, int lo, int hi, int n_max,
                  std::vector<Region>& out) {
    const int count = hi - lo;
    if (count <= n_max) {
        Region region;
        region.indices.assign(indices.begin() + lo, indices.begin() + hi);
        std::sort(region.indices.begin(), region.indices.end());
        region.lo = cloud.psi[region.indices.front()];
        region.hi = region.lo;
        for (const int idx : region.indices) {
            region.lo = region.lo.cwiseMin(cloud.psi[idx]);
            region.hi = region.hi.cwiseMax(cloud.psi[idx]);
        }
        out.push_back(std::move(region));
        return;
    }
    Eigen::Vector3d bb_lo = cloud.psi[indices[lo]];
    Eigen::Vector3d bb_hi = bb_lo;
    for (int i = lo + 1; i < hi; ++i) {
        bb_lo = bb_lo.cwiseMin(cloud.psi[indices[i]]);
        bb_hi = bb_hi.cwiseMax(cloud.psi[indices[i]]);
    }
    int axis = 0;
    (bb_hi - bb_lo).maxCoeff(&axis);
    const int mid = lo + count / 2;
    std::nth_element(indices.begin() + lo, indices.begin() + mid, indices.begin() + hi,
                     [&](int a, int b) {
                         const double va = cloud.psi[a][axis];
                         const double vb = cloud.psi[b][axis];
                         return va < vb || (va == vb && a < b);
                     });
    split_region(cloud, indices, lo, mid, n_max, out);
    split_region(cloud, indices, mid, hi, n_max, out);
}

}  // namespace

std::vector<Region> partition(const PsiCloud& cloud, int n_max) {
    if (cloud.size() == 0) throw ConfigError("partition requires a non-empty dataset");
    if (n_max < 1) throw ConfigError("partition requires n_max >= 1");
    std::vector<int> indices(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) indices[i] = static_cast<int>(i);
    std::vector<Region> regions;
    split_region(cloud, indices, 0, static_cast<int>(cloud.size()), n_max, regions);
    return regions;
}

namespace {

double max_pairwise_sq(const PsiCloud& cloud, const std::vector<int>& members, int* a = nullptr,
                       int* b = nullptr) {
    double best = 0.0;
    int bi = members.empty() ? -1 : members.front();
    int bj = bi;
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            const double d2 = (cloud.psi[members[i]] - cloud.psi[members[j]]).squaredNorm();
            if (d2 > best) {
                best = d2;
                bi = members[i];
                bj = members[j];
            }
        }
    }
    if (a) *a = bi;
    if (b) *b = bj;
    return best;
}

}  // namespace

double region_cdr(const Region& region, const PsiCloud& cloud,
                  const std::vector<double>& curvature, double cdr_floor) {
    if (region.indices.empty()) throw ConfigError("region_cdr requires a non-empty region");
    double g_c = 0.0;
    for (const int idx : region.indices) g_c = std::max(g_c, curvature[idx]);
    const double g_s = max_pairwise_sq(cloud, region.indices);
    const double rho = g_c * g_s / static_cast<double>(region.indices.size());
    return std::max(rho, cdr_floor);
}

CdrStats log_cdr_stats(const std::vector<double>& region_cdrs) {
    CdrStats stats;
    stats.k = region_cdrs.size();
    if (stats.k == 0) return stats;
    long double sum = 0.0L;
    for (const double rho : region_cdrs) sum += std::log(rho);
    stats.mu_rho = static_cast<double>(sum / static_cast<long double>(stats.k));
    if (stats.k < 2) return stats;
    long double ss = 0.0L;
    for (const double rho : region_cdrs) {
        const long double d = std::log(rho) - static_cast<long double>(stats.mu_rho);
        ss += d * d;
    }
    stats.sigma_rho = static_cast<double>(
        std::sqrt(static_cast<double>(ss / static_cast<long double>(stats.k - 1))));
    return stats;
}

namespace {

// Mutable per-region bookkeeping for the greedy removal loop.
struct RegionState {
    std::vector<int> members;
    std::vector<double> nn_d;  // squared distance to nearest member
    std::vector<int> nn_i;     // dataset index of that neighbor
    double g_c = 0.0;
    int g_c_holder = -1;
    double g_s = 0.0;
    int g_s_a = -1;
    int g_s_b = -1;
    double log_rho = 0.0;
    std::uint32_t version = 0;
};

struct GreedyEngine {
    const PsiCloud& cloud;
    const std::vector<double>& curvature;
    const FilterConfig& cfg;
    std::vector<RegionState> regions;
    long double sum_log = 0.0L;
    long double sum_sq = 0.0L;
    std::size_t k = 0;

    GreedyEngine(const PsiCloud& cloud_, const std::vector<double>& curvature_,
                 const FilterConfig& cfg_, const std::vector<Region>& boxes)
        : cloud(cloud_), curvature(curvature_), cfg(cfg_) {
        regions.reserve(boxes.size());
        for (const Region& box : boxes) {
            RegionState rs;
            rs.members = box.indices;
            rebuild_nn(rs);
            rebuild_maxes(rs);
            rs.log_rho = std::log(rho_of(rs.g_c, rs.g_s, rs.members.size()));
            sum_log += rs.log_rho;
            sum_sq += static_cast<long double>(rs.log_rho) * rs.log_rho;
            regions.push_back(std::move(rs));
        }
        k = regions.size();
    }

    double rho_of(double g_c, double g_s, std::size_t count) const {
        return std::max(g_c * g_s / static_cast<double>(count), cfg.cdr_floor);
    }

    void rebuild_nn(RegionState& rs) const {
        const std::size_t n = rs.members.size();
        rs.nn_d.assign(n, std::numeric_limits<double>::infinity());
        rs.nn_i.assign(n, -1);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d2 =
                    (cloud.psi[rs.members[i]] - cloud.psi[rs.members[j]]).squaredNorm();
                if (d2 < rs.nn_d[i] || (d2 == rs.nn_d[i] && rs.members[j] < rs.nn_i[i])) {
                    rs.nn_d[i] = d2;
                    rs.nn_i[i] = rs.members[j];
                }
                if (d2 < rs.nn_d[j] || (d2 == rs.nn_d[j] && rs.members[i] < rs.nn_i[j])) {
                    rs.nn_d[j] = d2;
                    rs.nn_i[j] = rs.members[i];
                }
            }
        }
    }

    void rebuild_maxes(RegionState& rs) const {
        rs.g_c = 0.0;
        rs.g_c_holder = rs.members.empty() ? -1 : rs.members.front();
        for (const int idx : rs.members) {
            if (curvature[idx] > rs.g_c) {
                rs.g_c = curvature[idx];
                rs.g_c_holder = idx;
            }
        }
        rs.g_s = max_pairwise_sq(cloud, rs.members, &rs.g_s_a, &rs.g_s_b);
    }

    CdrStats stats() const {
        CdrStats s;
        s.k = k;
        if (k == 0) return s;
        s.mu_rho = static_cast<double>(sum_log / static_cast<long double>(k));
        if (k >= 2) {
            const long double mean = sum_log / static_cast<long double>(k);
            long double var =
                (sum_sq - static_cast<long double>(k) * mean * mean) /
                static_cast<long double>(k - 1);
            if (var < 0.0L) var = 0.0L;
            s.sigma_rho = static_cast<double>(std::sqrt(static_cast<double>(var)));
        }
        return s;
    }

    // Picks the member with the smallest in-region nearest-neighbor distance.
    std::size_t most_redundant(const RegionState& rs) const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < rs.members.size(); ++i) {
            if (rs.nn_d[i] < rs.nn_d[best] ||
                (rs.nn_d[i] == rs.nn_d[best] && rs.members[i] < rs.members[best])) {
                best = i;
            }
        }
        return best;
    }
};

struct RemovalRecord {
    int sample = -1;
    int region = -1;
    CdrStats stats;           // running statistics once this removal is applied
    double stat_after = 0.0;  // stats.upper(z)
};

// Runs the greedy loop to exhaustion (every region down to knn members),
// recording the upper statistic after each removal. Thresholded results are
// prefixes of this sequence.
std::vector<RemovalRecord> run_greedy(GreedyEngine& engine) {
    using HeapEntry = std::tuple<double, int, std::uint32_t>;  // (log_rho, region, version)
    std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap;
    for (std::size_t i = 0; i < engine.regions.size(); ++i) {
        if (engine.regions[i].members.size() > static_cast<std::size_t>(engine.cfg.knn)) {
            heap.emplace(engine.regions[i].log_rho, static_cast<int>(i),
                         engine.regions[i].version);
        }
    }

    std::vector<RemovalRecord> removals;
    while (!heap.empty()) {
        const auto [log_rho, region_id, version] = heap.top();
        heap.pop();
        RegionState& rs = engine.regions[region_id];
        if (rs.version != version) continue;  // stale entry
        if (rs.members.size() <= static_cast<std::size_t>(engine.cfg.knn)) continue;

        const std::size_t pos = engine.most_redundant(rs);
        const int victim = rs.members[pos];

        // Remove and refresh bookkeeping.
        rs.members[pos] = rs.members.back();
        rs.members.pop_back();
        rs.nn_d[pos] = rs.nn_d.back();
        rs.nn_d.pop_back();
        rs.nn_i[pos] = rs.nn_i.back();
        rs.nn_i.pop_back();

        for (std::size_t i = 0; i < rs.members.size(); ++i) {
            if (rs.nn_i[i] != victim) continue;
            rs.nn_d[i] = std::numeric_limits<double>::infinity();
            rs.nn_i[i] = -1;
            for (std::size_t j = 0; j < rs.members.size(); ++j) {
                if (j == i) continue;
                const double d2 = (engine.cloud.psi[rs.members[i]] -
                                   engine.cloud.psi[rs.members[j]])
                                      .squaredNorm();
                if (d2 < rs.nn_d[i] || (d2 == rs.nn_d[i] && rs.members[j] < rs.nn_i[i])) {
                    rs.nn_d[i] = d2;
                    rs.nn_i[i] = rs.members[j];
                }
            }
        }

        if (victim == rs.g_c_holder) {
            rs.g_c = 0.0;
            rs.g_c_holder = rs.members.empty() ? -1 : rs.members.front();
            for (const int idx : rs.members) {
                if (engine.curvature[idx] > rs.g_c) {
                    rs.g_c = engine.curvature[idx];
                    rs.g_c_holder = idx;
                }
            }
        }
        if (victim == rs.g_s_a || victim == rs.g_s_b) {
            rs.g_s = max_pairwise_sq(engine.cloud, rs.members, &rs.g_s_a, &rs.g_s_b);
        }

        const double new_log = std::log(engine.rho_of(rs.g_c, rs.g_s, rs.members.size()));
        engine.sum_log += static_cast<long double>(new_log) - rs.log_rho;
        engine.sum_sq += static_cast<long double>(new_log) * new_log -
                         static_cast<long double>(rs.log_rho) * rs.log_rho;
        rs.log_rho = new_log;
        ++rs.version;

        const CdrStats s = engine.stats();
        removals.push_back({victim, region_id, s, s.upper(engine.cfg.z)});

        if (rs.members.size() > static_cast<std::size_t>(engine.cfg.knn)) {
            heap.emplace(rs.log_rho, region_id, rs.version);
        }
    }
    return removals;
}

FilterResult filter_impl(const Dataset& dataset, const FilterConfig& cfg, double epsilon) {
    cfg.validate();
    if (dataset.empty()) throw ConfigError("filter requires a non-empty dataset");

    FilterResult result;
    result.report.initial_size = dataset.size();
    result.report.epsilon = epsilon;
    result.report.z = cfg.z;

    const PsiCloud cloud = PsiCloud::standardize(dataset);
    const std::vector<Region> boxes = partition(cloud, cfg.n_max);
    const std::vector<double> curvature =
        all_hessian_frobenius(cloud, cfg.knn, cfg.jobs, &result.report.degenerate_neighborhoods);

    GreedyEngine engine(cloud, curvature, cfg, boxes);
    result.report.stats_before = engine.stats();
    result.report.removals_per_region.assign(boxes.size(), 0);

    std::vector<char> removed(dataset.size(), 0);
    result.report.stats_incremental = result.report.stats_before;
    if (result.report.stats_before.upper(cfg.z) > epsilon) {
        result.report.epsilon_infeasible = true;  // infeasible threshold: keep everything
    } else {
        const std::vector<RemovalRecord> removals = run_greedy(engine);
        for (const RemovalRecord& rec : removals) {
            if (rec.stat_after > epsilon) break;
            removed[rec.sample] = 1;
            ++result.report.removals_per_region[rec.region];
            result.report.stats_incremental = rec.stats;
        }
    }

    result.retained.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (!removed[i]) result.retained.push_back(static_cast<int>(i));
    }
    result.report.final_size = result.retained.size();

    // Recompute closing stats from scratch over the retained membership.
    {
        std::vector<double> cdrs;
        cdrs.reserve(boxes.size());
        for (const Region& box : boxes) {
            Region live;
            live.lo = box.lo;
            live.hi = box.hi;
            for (const int idx : box.indices) {
                if (!removed[idx]) live.indices.push_back(idx);
            }
            if (live.indices.empty()) continue;
            cdrs.push_back(region_cdr(live, cloud, curvature, cfg.cdr_floor));
        }
        result.report.stats_after = log_cdr_stats(cdrs);
    }
    return result;
}

}  // namespace

FilterResult filter(const Dataset& dataset, const FilterConfig& cfg) {
    return filter_impl(dataset, cfg, cfg.epsilon);
}

FilterResult filter_at(const Dataset& dataset, const FilterConfig& cfg, double epsilon) {
    return filter_impl(dataset, cfg, epsilon);
}

std::vector<SweepPoint> filter_sweep(const Dataset& dataset, const FilterConfig& cfg,
                                     const std::vector<double>& epsilons) {
    cfg.validate();
    if (dataset.empty()) throw ConfigError("filter_sweep requires a non-empty dataset");

    const PsiCloud cloud = PsiCloud::standardize(dataset);
    const std::vector<Region> boxes = partition(cloud, cfg.n_max);
    const std::vector<double> curvature = all_hessian_frobenius(cloud, cfg.knn, cfg.jobs);

    GreedyEngine engine(cloud, curvature, cfg, boxes);
    const double initial_upper = engine.stats().upper(cfg.z);
    const std::vector<RemovalRecord> removals = run_greedy(engine);

    std::vector<SweepPoint> points;
    points.reserve(epsilons.size());
    for (const double eps : epsilons) {
        SweepPoint point{eps, dataset.size()};
        if (initial_upper <= eps) {
            std::size_t applied = 0;
            for (const RemovalRecord& rec : removals) {
                if (rec.stat_after > eps) break;
                ++applied;
            }
            point.retained = dataset.size() - applied;
        }
        points.push_back(point);
    }
    return points;
}

std::vector<double> default_epsilon_sweep() {
    std::vector<double> eps;
    for (int k = 0; k <= 12; ++k) eps.push_back(std::pow(10.0, -4.0 + k / 3.0));
    return eps;
}

}  // namespace optiguide
