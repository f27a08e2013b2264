#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "optiguide/errors.hpp"
#include "optiguide/gpr.hpp"

using namespace optiguide;

namespace {

GpTrainData make_train_data(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.5, 1.5);
    GpTrainData data;
    data.inputs.resize(n, 3);
    data.targets.resize(n);
    for (int i = 0; i < n; ++i) {
        const double a = unif(rng);
        const double b = unif(rng);
        const double c = unif(rng);
        data.inputs.row(i) << a, b, c;
        data.targets[i] = std::sin(2.0 * a) + 0.5 * b * b + 0.3 * c + 0.05 * unif(rng);
    }
    return data;
}

GpHyperparams test_hyper() {
    GpHyperparams h;
    h.mean_const = 0.2;
    h.log_lengthscales << std::log(0.8), std::log(1.1), std::log(1.7);
    h.log_signal_var = std::log(1.5);
    h.log_noise_var = std::log(1e-3);
    return h;
}

// Explicit-inverse evaluation of the marginal likelihood and the posterior.
struct DenseOracle {
    Eigen::MatrixXd K;
    Eigen::MatrixXd Kinv;
    Eigen::VectorXd resid;
    double lml;

    DenseOracle(const GpHyperparams& hyper, const GpTrainData& data) {
        const Eigen::Index n = data.size();
        K.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                K(i, j) = kernel(data.inputs.row(i).transpose(),
                                 data.inputs.row(j).transpose(), hyper);
            }
        }
        K.diagonal().array() += hyper.noise_var();
        Kinv = K.inverse();
        resid = data.targets - Eigen::VectorXd::Constant(n, hyper.mean_const);
        // log-determinant through the spectrum, an independent route
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
        const double log_det = eig.eigenvalues().array().log().sum();
        lml = -0.5 * resid.dot(Kinv * resid) - 0.5 * log_det -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    }

    Prediction predict_at(const GpHyperparams& hyper, const GpTrainData& data,
                          const Eigen::Vector3d& x) const {
        const Eigen::Index n = data.size();
        Eigen::VectorXd k_star(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k_star[i] = kernel(data.inputs.row(i).transpose(), x, hyper);
        }
        Prediction out;
        out.mu_star = hyper.mean_const + k_star.dot(Kinv * resid);
        out.var_star = kernel(x, x, hyper) - k_star.dot(Kinv * k_star);
        return out;
    }
};

}  // namespace

TEST_CASE("kernel basics") {
    const GpHyperparams hyper = test_hyper();
    const Eigen::Vector3d a{0.3, -0.2, 1.0};
    const Eigen::Vector3d b{-0.6, 0.4, 0.2};

    CHECK(kernel(a, a, hyper) == doctest::Approx(hyper.signal_var()));
    CHECK(kernel(a, b, hyper) == doctest::Approx(kernel(b, a, hyper)));

    double prev = kernel(a, a, hyper);
    for (double step = 0.5; step < 30.0; step *= 1.7) {
        const double k = kernel(a, a + Eigen::Vector3d{step, 0, 0}, hyper);
        CHECK(k < prev);
        prev = k;
    }
    CHECK(prev < 1e-10);
}

TEST_CASE("log marginal likelihood scalar cases") {
    GpTrainData data;
    data.inputs.resize(1, 3);
    data.inputs.row(0) << 0.0, 0.0, 0.0;
    data.targets.resize(1);

    GpHyperparams hyper;
    hyper.mean_const = 0.0;
    hyper.log_lengthscales.setZero();
    hyper.log_signal_var = std::log1p(-1e-10);  // signal + noise = 1 exactly
    hyper.log_noise_var = std::log(1e-10);

    data.targets[0] = 0.0;
    CHECK(log_marginal_likelihood(hyper, data) ==
          doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-9));

    data.targets[0] = 2.0;
    CHECK(log_marginal_likelihood(hyper, data) ==
          doctest::Approx(-2.0 - 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-9));
}

TEST_CASE("factorized computations match the dense oracle") {
    const GpHyperparams hyper = test_hyper();
    for (const int n : {50, 200}) {
        const GpTrainData data = make_train_data(n, 1234 + n);
        const DenseOracle oracle(hyper, data);

        CHECK(log_marginal_likelihood(hyper, data) == doctest::Approx(oracle.lml).epsilon(1e-8));

        const TrainedGpModel model = assemble_model(data, Standardizer3{}, hyper);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> unif(-1.5, 1.5);
        for (int q = 0; q < 10; ++q) {
            const Eigen::Vector3d x{unif(rng), unif(rng), unif(rng)};
            const Prediction fast = predict(model, x);
            const Prediction slow = oracle.predict_at(hyper, data, x);
            CHECK(fast.mu_star == doctest::Approx(slow.mu_star).epsilon(1e-8));
            CHECK(fast.var_star == doctest::Approx(slow.var_star).epsilon(1e-8));
        }
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    const GpTrainData data = make_train_data(30, 99);
    const GpHyperparams hyper = test_hyper();
    const Eigen::VectorXd grad = lml_gradient(hyper, data);

    const double h = 1e-6;
    Eigen::VectorXd theta = hyper.pack();
    for (int i = 0; i < 6; ++i) {
        Eigen::VectorXd tp = theta;
        Eigen::VectorXd tm = theta;
        tp[i] += h;
        tm[i] -= h;
        const double fd = (log_marginal_likelihood(GpHyperparams::unpack(tp), data) -
                           log_marginal_likelihood(GpHyperparams::unpack(tm), data)) /
                          (2.0 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("mean gradient vanishes at the generalized least squares mean") {
    const GpTrainData data = make_train_data(40, 321);
    GpHyperparams hyper = test_hyper();
    const DenseOracle oracle(hyper, data);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());
    const double gls_mean =
        ones.dot(oracle.Kinv * data.targets) / ones.dot(oracle.Kinv * ones);
    hyper.mean_const = gls_mean;
    const Eigen::VectorXd grad = lml_gradient(hyper, data);
    CHECK(std::abs(grad[0]) < 1e-8);
}

TEST_CASE("single observation at the mean has zero data-fit gradient") {
    GpTrainData data;
    data.inputs.resize(1, 3);
    data.inputs.row(0) << 0.4, -0.1, 0.9;
    data.targets.resize(1);
    data.targets[0] = 0.7;
    GpHyperparams hyper = test_hyper();
    hyper.mean_const = 0.7;
    const Eigen::VectorXd grad = lml_gradient(hyper, data);
    CHECK(grad[0] == doctest::Approx(0.0));
}

TEST_CASE("fit recovers prior hyperparameters within 30 percent") {
    GpHyperparams truth;
    truth.mean_const = 0.3;
    truth.log_lengthscales << std::log(0.6), std::log(1.0), std::log(1.8);
    truth.log_signal_var = std::log(2.0);
    truth.log_noise_var = std::log(2e-4);

    const int n = 500;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unif(-2.5, 2.5);
    GpTrainData data;
    data.inputs.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        data.inputs.row(i) << unif(rng), unif(rng), unif(rng);
    }
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            K(i, j) =
                kernel(data.inputs.row(i).transpose(), data.inputs.row(j).transpose(), truth);
        }
    }
    K.diagonal().array() += truth.noise_var();
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(K).matrixL();
    std::normal_distribution<double> gauss;
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = gauss(rng);
    data.targets = Eigen::VectorXd::Constant(n, truth.mean_const) + L * z;

    FitOptions options;
    options.iters = 200;
    options.max_train_size = n;
    const FitResult result = fit(data, Standardizer3{}, default_init(data.targets), options);

    for (int d = 0; d < 3; ++d) {
        const double ratio = std::abs(result.model.hyper.log_lengthscales[d] -
                                      truth.log_lengthscales[d]);
        CHECK(ratio <= std::log(1.3));
    }

    // accepted-step trace is monotone non-decreasing
    for (std::size_t i = 1; i < result.lml_trace.size(); ++i) {
        CHECK(result.lml_trace[i] >= result.lml_trace[i - 1]);
    }
}

TEST_CASE("fit beats the constant-mean predictor by 10x on held-out data") {
    Dataset dataset;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int i = 0; i < 660; ++i) {
        Sample s;
        s.r = 1.0 + 0.3 * unif(rng);
        s.sigma = 0.8 * unif(rng);
        s.t_go = 1.2 + 0.5 * unif(rng);
        s.u = std::sin(2.0 * s.sigma) * s.r + 0.4 * s.t_go * s.t_go;
        dataset.samples.push_back(s);
    }
    Dataset train;
    Dataset test;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (i % 11 == 0 ? test : train).samples.push_back(dataset.samples[i]);
    }

    FitOptions options;
    options.iters = 80;
    options.max_train_size = 600;
    const FitResult result = fit(train, options);

    double target_mean = 0.0;
    for (const auto& s : train.samples) target_mean += s.u;
    target_mean /= static_cast<double>(train.samples.size());

    double mse_gp = 0.0;
    double mse_const = 0.0;
    for (const auto& s : test.samples) {
        const double mu = predict(result.model, psi_of(s)).mu_star;
        mse_gp += (mu - s.u) * (mu - s.u);
        mse_const += (target_mean - s.u) * (target_mean - s.u);
    }
    CHECK(mse_gp * 10.0 <= mse_const);
}

TEST_CASE("posterior behavior at and away from the data") {
    GpTrainData data = make_train_data(60, 4321);
    GpHyperparams hyper = test_hyper();
    hyper.log_noise_var = std::log(1e-10);  // nearly noise-free
    const TrainedGpModel model = assemble_model(data, Standardizer3{}, hyper);

    SUBCASE("near interpolation at a training point") {
        const Eigen::Vector3d x = data.inputs.row(7).transpose();
        const Prediction p = predict(model, x);
        CHECK(p.mu_star == doctest::Approx(data.targets[7]).epsilon(1e-5));
        CHECK(p.var_star <= 1e-6);
    }

    SUBCASE("prior reversion far away") {
        const Prediction p = predict(model, {250.0, -300.0, 400.0});
        CHECK(p.mu_star == doctest::Approx(hyper.mean_const));
        CHECK(p.var_star == doctest::Approx(hyper.signal_var()));
    }

    SUBCASE("posterior variance never exceeds the prior variance") {
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> unif(-3.0, 3.0);
        for (int q = 0; q < 50; ++q) {
            const Prediction p = predict(model, {unif(rng), unif(rng), unif(rng)});
            CHECK(p.var_star <= hyper.signal_var() + 1e-10);
            CHECK(p.var_star >= 0.0);
        }
    }

    SUBCASE("conditioning on one more point cannot raise the variance") {
        GpTrainData smaller;
        smaller.inputs = data.inputs.topRows(59);
        smaller.targets = data.targets.head(59);
        const TrainedGpModel before = assemble_model(smaller, Standardizer3{}, hyper);
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> unif(-2.0, 2.0);
        for (int q = 0; q < 10; ++q) {
            const Eigen::Vector3d x{unif(rng), unif(rng), unif(rng)};
            CHECK(predict(model, x).var_star <= predict(before, x).var_star + 1e-10);
        }
    }
}

TEST_CASE("model persistence and determinism") {
    Dataset dataset;
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int i = 0; i < 120; ++i) {
        Sample s;
        s.r = 1.0 + 0.2 * unif(rng);
        s.sigma = 0.5 * unif(rng);
        s.t_go = 1.0 + 0.3 * unif(rng);
        s.u = s.r * s.sigma + 0.1 * s.t_go;
        dataset.samples.push_back(s);
    }
    FitOptions options;
    options.iters = 40;
    options.max_train_size = 100;  // forces the seeded subsample
    options.seed = 9;

    const FitResult a = fit(dataset, options);
    const FitResult b = fit(dataset, options);

    const auto dir = std::filesystem::temp_directory_path();
    const auto path_a = dir / "optiguide_model_a.json";
    const auto path_b = dir / "optiguide_model_b.json";
    save_model(a.model, path_a, 42, 9);
    save_model(b.model, path_b, 42, 9);

    std::ifstream fa(path_a, std::ios::binary);
    std::ifstream fb(path_b, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
    CHECK(bytes_a == bytes_b);
    CHECK(!bytes_a.empty());

    const TrainedGpModel loaded = load_model(path_a);
    const Eigen::Vector3d q{1.05, 0.2, 1.1};
    const Prediction p_orig = predict(a.model, q);
    const Prediction p_load = predict(loaded, q);
    CHECK(p_orig.mu_star == p_load.mu_star);
    CHECK(p_orig.var_star == p_load.var_star);

    // disabling the subsample makes oversize data an error
    options.subsample = false;
    CHECK_THROWS_AS(fit(dataset, options), DataTooLarge);

    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
}
