#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "optiguide/datagen.hpp"
#include "optiguide/guidance_sim.hpp"

using namespace optiguide;

namespace {

// One small end-to-end fixture shared by the closed-loop cases: a 3x3x3
// grid of optimal trajectories and a model trained on a subsample.
struct Fixture {
    GenerationConfig gen_cfg;
    GenerationResult generated;
    TrainedGpModel model;

    Fixture() {
        gen_cfg.r_min = 0.9;
        gen_cfg.r_max = 1.1;
        gen_cfg.dr = 0.1;
        gen_cfg.sigma_min = 0.2;
        gen_cfg.sigma_max = 0.6;
        gen_cfg.dsigma = 0.2;
        gen_cfg.t_min = 1.3;
        gen_cfg.t_max = 1.7;
        gen_cfg.dtf = 0.2;
        generated = generate_region(gen_cfg);

        FitOptions options;
        options.iters = 60;
        options.max_train_size = 500;
        options.seed = 17;
        model = fit(generated.dataset, options).model;
    }
};

const Fixture& fixture() {
    static Fixture fx;
    return fx;
}

SimConfig base_case(double r0, double sigma0, double t_mult) {
    SimConfig cfg;
    cfg.initial = FullState{r0, 0.0, sigma0};
    cfg.t_f = t_mult * min_terminal_time(EngagementState{r0, sigma0}, 0.2);
    cfg.u_m = 5.0;
    return cfg;
}

}  // namespace

TEST_CASE("confidence_literal follows the printed formula") {
    CHECK(confidence_literal(100.0, 0.0, 0.5) == doctest::Approx(1.0));

    const double inv_two_pi = 1.0 / (2.0 * 3.14159265358979323846);
    CHECK(confidence_literal(1.0, 1.0, inv_two_pi) == doctest::Approx(0.0));

    // agreement with a sharp posterior clamps at zero
    CHECK(confidence_literal(1.0, 1.0, 0.01) == 0.0);

    CHECK_THROWS_AS(confidence_literal(0.0, 0.0, 0.0), NonPositiveSigma);
    CHECK_THROWS_AS(confidence_literal(0.0, 0.0, -1.0), NonPositiveSigma);
}

TEST_CASE("confidence_variance is a monotone falloff") {
    CHECK(confidence_variance(0.0, 0.3) == doctest::Approx(1.0));
    CHECK(confidence_variance(0.3, 0.3) == doctest::Approx(0.5));
    CHECK(confidence_variance(1e9, 0.3) == doctest::Approx(0.0));

    double prev = 1.1;
    for (double s = 0.0; s < 3.0; s += 0.1) {
        const double rho = confidence_variance(s, 0.3);
        CHECK(rho < prev);
        CHECK(rho >= 0.0);
        CHECK(rho <= 1.0);
        prev = rho;
    }
}

TEST_CASE("blended_command mixes and clamps") {
    CHECK(blended_command(1.0, 2.0, -1.0, 5.0) == doctest::Approx(2.0));
    CHECK(blended_command(0.0, 2.0, -1.0, 5.0) == doctest::Approx(-1.0));
    CHECK(blended_command(0.5, 2.0, 0.0, 5.0) == doctest::Approx(1.0));
    CHECK(blended_command(0.5, 20.0, 20.0, 5.0) == 5.0);
    CHECK(blended_command(0.5, -20.0, -20.0, 5.0) == -5.0);

    // variance-mode limits: certain -> learned command, diffuse -> analytical
    CHECK(blended_command(confidence_variance(0.0, 0.3), 2.0, -1.0, 5.0) ==
          doctest::Approx(2.0));
    CHECK(blended_command(confidence_variance(1e12, 0.3), 2.0, -1.0, 5.0) ==
          doctest::Approx(-1.0));
}

TEST_CASE("closed loop hits inside the training region") {
    const Fixture& fx = fixture();
    SimConfig cfg = base_case(1.0, 0.4, 1.5);
    const SimResult result = simulate(fx.model, cfg);

    CHECK(result.hit);
    CHECK(result.miss_distance <= 1e-2);
    CHECK(result.impact_time_error <= 0.01 * cfg.t_f);

    SUBCASE("trace invariants") {
        double prev_t = -1.0;
        for (const TraceRow& row : result.trace) {
            CHECK(row.t > prev_t);
            prev_t = row.t;
            CHECK(std::abs(row.u) <= cfg.u_m + 1e-12);
            CHECK(row.rho >= 0.0);
            CHECK(row.rho <= 1.0);
        }
        // range strictly decreasing over the final 10% of flight
        const double t_cut = 0.9 * result.t_end;
        double prev_r = -1.0;
        bool started = false;
        for (const TraceRow& row : result.trace) {
            if (row.t < t_cut) continue;
            if (started) CHECK(row.r < prev_r);
            prev_r = row.r;
            started = true;
        }
    }

    SUBCASE("closed-loop effort stays near the generated optimum") {
        // the matched grid node (r=1.0, sigma=0.4, 1.5x minimum time)
        double node_effort = -1.0;
        for (const auto& node : fx.generated.report.nodes) {
            if (std::abs(node.node.r_d - 1.0) < 1e-9 &&
                std::abs(node.node.sigma_d - 0.4) < 1e-9 &&
                std::abs(node.node.t_mult - 1.5) < 1e-9) {
                node_effort = node.effort;
            }
        }
        REQUIRE(node_effort > 0.0);
        CHECK(result.effort <= 1.1 * node_effort);
        CHECK(result.effort >= 0.9 * node_effort);
    }
}

TEST_CASE("pure learned command fails far outside the data") {
    const Fixture& fx = fixture();
    SimConfig cfg = base_case(2.5, 1.8, 1.25);
    cfg.source = CommandSource::gpr_only;
    cfg.timeout_margin = 1.0;
    const SimResult result = simulate(fx.model, cfg);
    CHECK(!result.hit);

    // blending against the analytical law recovers the intercept; the
    // approach runs a high navigation gain with weak time feedback so it
    // banks slack and hands the endgame to the model inside its own
    // terminal-time family
    SimConfig blended = base_case(2.5, 1.8, 1.25);
    blended.itcg.N = 15.0;
    blended.itcg.K = 0.5;
    const SimResult ok = simulate(fx.model, blended);
    CHECK(ok.hit);
    CHECK(ok.miss_distance <= 1e-2);
    CHECK(ok.impact_time_error <= 0.05 * blended.t_f);
}

TEST_CASE("evaluate_batch aggregates and reproduces") {
    const Fixture& fx = fixture();

    SUBCASE("empty grid gives an empty table") {
        const BatchMetrics metrics = evaluate_batch(fx.model, {});
        CHECK(metrics.rows.empty());
        CHECK(metrics.hits == 0);
    }

    SUBCASE("small in-distribution grid hits everywhere, deterministically") {
        std::vector<SimConfig> cases;
        for (const double r0 : {0.95, 1.05}) {
            for (const double sigma0 : {0.3, 0.5}) {
                cases.push_back(base_case(r0, sigma0, 1.5));
            }
        }
        const BatchMetrics a = evaluate_batch(fx.model, cases, 2);
        CHECK(a.hits == cases.size());

        const BatchMetrics b = evaluate_batch(fx.model, cases, 1);
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i].result.miss_distance == b.rows[i].result.miss_distance);
            CHECK(a.rows[i].result.impact_time_error == b.rows[i].result.impact_time_error);
            CHECK(a.rows[i].result.effort == b.rows[i].result.effort);
        }
    }
}

TEST_CASE("trace CSV carries the full header") {
    const Fixture& fx = fixture();
    const SimResult result = simulate(fx.model, base_case(1.0, 0.3, 1.4));
    const auto path = std::filesystem::temp_directory_path() / "optiguide_trace_test.csv";
    write_trace_csv(result, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,r,lambda,sigma,u,mu_star,sigma_star,a_p,rho");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == result.trace.size());
    std::filesystem::remove(path);
}
