#include "optiguide/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "optiguide/errors.hpp"

namespace optiguide {

Standardizer3 Standardizer3::fit(const std::vector<Eigen::Vector3d>& points) {
    Standardizer3 out;
    if (points.empty()) return out;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const auto& p : points) sum += p;
    out.mean = sum / static_cast<double>(points.size());
    if (points.size() < 2) return out;
    Eigen::Vector3d ss = Eigen::Vector3d::Zero();
    for (const auto& p : points) ss += (p - out.mean).cwiseAbs2();
    out.scale = (ss / static_cast<double>(points.size() - 1)).cwiseSqrt();
    for (int d = 0; d < 3; ++d) {
        if (out.scale[d] < 1e-12) out.scale[d] = 1.0;  // constant axis
    }
    return out;
}

Standardizer3 Standardizer3::fit(const Dataset& dataset) {
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(dataset.size());
    for (const auto& s : dataset.samples) pts.push_back(psi_of(s));
    return fit(pts);
}

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "traj_id,r,sigma,t_go,u\n";
    for (const auto& s : dataset.samples) {
        out << s.traj_id << ',' << format_double(s.r) << ',' << format_double(s.sigma) << ','
            << format_double(s.t_go) << ',' << format_double(s.u) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    Dataset dataset;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty dataset file: " + path.string());
    if (line != "traj_id,r,sigma,t_go,u") {
        throw IoError("unexpected dataset header in " + path.string() + ": " + line);
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Sample s;
        const char* p = line.c_str();
        char* end = nullptr;
        s.traj_id = static_cast<int>(std::strtol(p, &end, 10));
        double* fields[4] = {&s.r, &s.sigma, &s.t_go, &s.u};
        for (double* f : fields) {
            if (*end != ',') {
                throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
            }
            p = end + 1;
            *f = std::strtod(p, &end);
        }
        if (*end != '\0') {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": trailing characters");
        }
        dataset.samples.push_back(s);
    }
    return dataset;
}

}  // namespace optiguide
