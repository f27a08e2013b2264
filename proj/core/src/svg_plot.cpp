#include "optiguide/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "optiguide/errors.hpp"

namespace optiguide {

namespace {

struct Panel {
    double x0, y0, w, h;          // pixel box
    double xmin, xmax, ymin, ymax;  // data box

    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void expand(double& lo, double& hi) {
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    } else {
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
}

std::string rho_color(double rho) {
    // red (rho = 0, analytical) to blue (rho = 1, learned)
    const int r = static_cast<int>(std::lround(220.0 * (1.0 - rho)));
    const int b = static_cast<int>(std::lround(220.0 * rho));
    std::ostringstream os;
    os << "rgb(" << r << ",40," << b << ")";
    return os.str();
}

void polyline(std::ostream& out, const Panel& p, const std::vector<double>& xs,
              const std::vector<double>& ys, const char* stroke) {
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out << p.px(xs[i]) << ',' << p.py(ys[i]) << ' ';
    }
    out << "\"/>\n";
}

void frame(std::ostream& out, const Panel& p, const std::string& title) {
    out << "<rect x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.w << "\" height=\""
        << p.h << "\" fill=\"none\" stroke=\"#888\"/>\n";
    out << "<text x=\"" << p.x0 + 4 << "\" y=\"" << p.y0 + 14
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << title << "</text>\n";
}

}  // namespace

void write_sim_svg(const SimResult& result, const std::filesystem::path& path) {
    if (result.trace.empty()) throw ConfigError("write_sim_svg: empty trace");

    std::vector<double> ts, rs, sigmas, xs, ys, rhos;
    for (const TraceRow& row : result.trace) {
        ts.push_back(row.t);
        rs.push_back(row.r);
        sigmas.push_back(row.sigma);
        xs.push_back(row.r * std::cos(row.lambda));
        ys.push_back(row.r * std::sin(row.lambda));
        rhos.push_back(row.rho);
    }
    const auto span = [](const std::vector<double>& v) {
        double lo = *std::min_element(v.begin(), v.end());
        double hi = *std::max_element(v.begin(), v.end());
        expand(lo, hi);
        return std::pair{lo, hi};
    };

    const auto [xlo, xhi] = span(xs);
    const auto [ylo, yhi] = span(ys);
    const auto [tlo, thi] = span(ts);
    const auto [rlo, rhi] = span(rs);
    const auto [slo, shi] = span(sigmas);

    Panel traj{40, 30, 340, 340, std::min(xlo, -0.05), xhi, ylo, yhi};
    Panel sig{420, 30, 340, 150, tlo, thi, slo, shi};
    Panel rng{420, 220, 340, 150, tlo, thi, std::min(rlo, 0.0), rhi};

    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" "
           "viewBox=\"0 0 800 400\">\n<rect width=\"800\" height=\"400\" fill=\"white\"/>\n";

    frame(out, traj, result.outcome == "hit" ? "trajectory (hit)" : "trajectory (" + result.outcome + ")");
    // confidence-colored segments
    for (std::size_t i = 1; i < xs.size(); ++i) {
        out << "<line x1=\"" << traj.px(xs[i - 1]) << "\" y1=\"" << traj.py(ys[i - 1])
            << "\" x2=\"" << traj.px(xs[i]) << "\" y2=\"" << traj.py(ys[i]) << "\" stroke=\""
            << rho_color(rhos[i]) << "\" stroke-width=\"1.5\"/>\n";
    }
    // target marker at the origin
    out << "<circle cx=\"" << traj.px(0.0) << "\" cy=\"" << traj.py(0.0)
        << "\" r=\"4\" fill=\"black\"/>\n";

    frame(out, sig, "heading error sigma(t)");
    polyline(out, sig, ts, sigmas, "#1f77b4");
    frame(out, rng, "range r(t)");
    polyline(out, rng, ts, rs, "#2ca02c");

    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace optiguide
