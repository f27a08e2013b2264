#include "optiguide/gpr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "optiguide/errors.hpp"

namespace optiguide {

using json = nlohmann::ordered_json;

Eigen::VectorXd GpHyperparams::pack() const {
    Eigen::VectorXd theta(6);
    theta << mean_const, log_lengthscales[0], log_lengthscales[1], log_lengthscales[2],
        log_signal_var, log_noise_var;
    return theta;
}

GpHyperparams GpHyperparams::unpack(const Eigen::VectorXd& theta) {
    GpHyperparams h;
    h.mean_const = theta[0];
    h.log_lengthscales = theta.segment<3>(1);
    h.log_signal_var = theta[4];
    h.log_noise_var = theta[5];
    return h;
}

void FitOptions::validate() const {
    if (iters < 1) throw ConfigError("gp: iters must be at least 1");
    if (!(grad_tol > 0.0)) throw ConfigError("gp: grad_tol must be positive");
    if (max_train_size < 1) throw ConfigError("gp: max_train_size must be at least 1");
}

double kernel(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const GpHyperparams& hyper) {
    const Eigen::Vector3d inv_ls = (-hyper.log_lengthscales).array().exp();
    const double q = ((a - b).cwiseProduct(inv_ls)).squaredNorm();
    return hyper.signal_var() * std::exp(-0.5 * q);
}

namespace {

Eigen::MatrixXd gram_matrix(const GpHyperparams& hyper, const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    const Eigen::Vector3d inv_ls = (-hyper.log_lengthscales).array().exp();
    const Eigen::MatrixXd S = X * inv_ls.asDiagonal();
    const double sf2 = hyper.signal_var();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = sf2;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double q = (S.row(i) - S.row(j)).squaredNorm();
            const double v = sf2 * std::exp(-0.5 * q);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd alpha;  // K^{-1} (y - m)
    double jitter = 0.0;
    double log_det_half = 0.0;  // sum log L_ii
};

// Cholesky with escalating jitter: 1e-10 sigma_f^2 up to 1e-4 sigma_f^2.
Factorization factorize(const GpHyperparams& hyper, const GpTrainData& data) {
    const Eigen::Index n = data.size();
    if (n < 1) throw ConfigError("gpr: empty training set");
    const Eigen::MatrixXd Kf = gram_matrix(hyper, data.inputs);
    const double sn2 = hyper.noise_var();
    const double sf2 = hyper.signal_var();

    Factorization out;
    double jitter = 0.0;
    for (int attempt = 0; attempt <= 7; ++attempt) {
        Eigen::MatrixXd K = Kf;
        K.diagonal().array() += sn2 + jitter;
        out.llt.compute(K);
        if (out.llt.info() == Eigen::Success) {
            out.jitter = jitter;
            const Eigen::VectorXd resid =
                data.targets - Eigen::VectorXd::Constant(n, hyper.mean_const);
            out.alpha = out.llt.solve(resid);
            out.log_det_half = out.llt.matrixLLT().diagonal().array().log().sum();
            return out;
        }
        jitter = jitter == 0.0 ? 1e-10 * sf2 : jitter * 10.0;
        if (jitter > 1e-4 * sf2) break;
    }
    throw NotPositiveDefinite("gram matrix not positive definite after jitter escalation");
}

double lml_from_factorization(const Factorization& fac, const GpHyperparams& hyper,
                              const GpTrainData& data) {
    const Eigen::Index n = data.size();
    const Eigen::VectorXd resid =
        data.targets - Eigen::VectorXd::Constant(n, hyper.mean_const);
    return -0.5 * resid.dot(fac.alpha) - fac.log_det_half -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

double log_marginal_likelihood(const GpHyperparams& hyper, const GpTrainData& data) {
    const Factorization fac = factorize(hyper, data);
    return lml_from_factorization(fac, hyper, data);
}

Eigen::VectorXd lml_gradient(const GpHyperparams& hyper, const GpTrainData& data) {
    const Eigen::Index n = data.size();
    const Factorization fac = factorize(hyper, data);
    const Eigen::MatrixXd Kinv =
        fac.llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::VectorXd& alpha = fac.alpha;
    // d/dtheta = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta) for kernel params.
    const Eigen::MatrixXd A = alpha * alpha.transpose() - Kinv;

    const Eigen::MatrixXd Kf = gram_matrix(hyper, data.inputs);
    Eigen::VectorXd grad(6);
    grad[0] = alpha.sum();  // constant mean

    const Eigen::Vector3d ls = hyper.lengthscales();
    for (int d = 0; d < 3; ++d) {
        const Eigen::VectorXd col = data.inputs.col(d);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double diff = (col[i] - col[j]) / ls[d];
                acc += A(i, j) * Kf(i, j) * diff * diff;
            }
        }
        grad[1 + d] = 0.5 * acc;
    }
    grad[4] = 0.5 * (A.array() * Kf.array()).sum();
    grad[5] = 0.5 * hyper.noise_var() * A.trace();
    return grad;
}

GpHyperparams default_init(const Eigen::VectorXd& targets) {
    GpHyperparams h;
    const Eigen::Index n = targets.size();
    h.mean_const = n > 0 ? targets.mean() : 0.0;
    double var = 1.0;
    if (n > 1) {
        var = (targets.array() - targets.mean()).square().sum() / static_cast<double>(n - 1);
        if (var < 1e-12) var = 1e-12;
    }
    h.log_lengthscales.setZero();  // unit lengthscales in standardized inputs
    h.log_signal_var = std::log(var);
    h.log_noise_var = std::log(1e-4 * var);
    return h;
}

TrainedGpModel assemble_model(const GpTrainData& data, const Standardizer3& standardizer,
                              const GpHyperparams& hyper) {
    const Factorization fac = factorize(hyper, data);
    TrainedGpModel model;
    model.hyper = hyper;
    model.train_inputs = data.inputs;
    model.train_targets = data.targets;
    model.standardizer = standardizer;
    model.chol_lower = fac.llt.matrixL();
    model.alpha = fac.alpha;
    model.jitter = fac.jitter;
    return model;
}

namespace {

// Box bounds for the hyperparameter ascent. Noiseless smooth targets push
// the likelihood along a ridge of ever-growing signal variance whose
// extrapolated means swing wildly just off the data manifold; the cap keeps
// the fitted prior commensurate with the target spread.
struct ThetaBounds {
    Eigen::VectorXd lo{6};
    Eigen::VectorXd hi{6};

    explicit ThetaBounds(const Eigen::VectorXd& targets) {
        double var = 1.0;
        if (targets.size() > 1) {
            var = (targets.array() - targets.mean()).square().sum() /
                  static_cast<double>(targets.size() - 1);
            var = std::max(var, 1e-12);
        }
        const double spread = std::sqrt(var);
        const double mean = targets.size() > 0 ? targets.mean() : 0.0;
        lo[0] = mean - 10.0 * spread;
        hi[0] = mean + 10.0 * spread;
        for (int d = 1; d <= 3; ++d) {
            lo[d] = std::log(0.03);
            hi[d] = std::log(30.0);
        }
        lo[4] = std::log(1e-6 * var);
        hi[4] = std::log(50.0 * var);
        lo[5] = std::log(1e-12 * var);
        hi[5] = std::log(4.0 * var);
    }

    Eigen::VectorXd project(Eigen::VectorXd theta) const {
        for (int i = 0; i < 6; ++i) theta[i] = std::clamp(theta[i], lo[i], hi[i]);
        return theta;
    }
};

}  // namespace

FitResult fit(const GpTrainData& data, const Standardizer3& standardizer,
              const GpHyperparams& init, const FitOptions& options) {
    options.validate();
    if (data.size() > options.max_train_size) {
        throw DataTooLarge("gp fit: " + std::to_string(data.size()) + " samples exceed cap " +
                           std::to_string(options.max_train_size));
    }

    const ThetaBounds bounds(data.targets);
    Eigen::VectorXd theta = bounds.project(init.pack());
    double lml = log_marginal_likelihood(GpHyperparams::unpack(theta), data);

    FitResult result;
    result.lml_trace.push_back(lml);

    double step = 0.1;
    constexpr double kMinStep = 1e-12;
    constexpr double kMaxStep = 0.5;

    for (int iter = 0; iter < options.iters; ++iter) {
        const Eigen::VectorXd grad = lml_gradient(GpHyperparams::unpack(theta), data);
        const double gnorm = grad.lpNorm<Eigen::Infinity>();
        if (gnorm < options.grad_tol) break;

        bool accepted = false;
        while (step >= kMinStep) {
            const Eigen::VectorXd candidate = bounds.project(theta + (step / gnorm) * grad);
            double cand_lml;
            try {
                cand_lml = log_marginal_likelihood(GpHyperparams::unpack(candidate), data);
            } catch (const NotPositiveDefinite&) {
                step *= 0.5;
                continue;
            }
            if (cand_lml > lml) {
                theta = candidate;
                lml = cand_lml;
                result.lml_trace.push_back(lml);
                ++result.accepted_steps;
                step = std::min(step * 1.2, kMaxStep);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no ascent direction at the smallest step
    }

    result.model = assemble_model(data, standardizer, GpHyperparams::unpack(theta));
    return result;
}

FitResult fit(const Dataset& dataset, const FitOptions& options) {
    options.validate();
    if (dataset.empty()) throw ConfigError("gp fit: empty dataset");

    std::vector<int> chosen(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) chosen[i] = static_cast<int>(i);
    if (dataset.size() > static_cast<std::size_t>(options.max_train_size)) {
        if (!options.subsample) {
            throw DataTooLarge("gp fit: dataset exceeds max_train_size and subsampling is off");
        }
        std::mt19937_64 rng(options.seed);
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(options.max_train_size);
        std::sort(chosen.begin(), chosen.end());
    }

    const Standardizer3 standardizer = Standardizer3::fit(dataset);
    GpTrainData data;
    data.inputs.resize(static_cast<Eigen::Index>(chosen.size()), 3);
    data.targets.resize(static_cast<Eigen::Index>(chosen.size()));
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const Sample& s = dataset.samples[chosen[i]];
        data.inputs.row(static_cast<Eigen::Index>(i)) =
            standardizer.apply(psi_of(s)).transpose();
        data.targets[static_cast<Eigen::Index>(i)] = s.u;
    }
    return fit(data, standardizer, default_init(data.targets), options);
}

Prediction predict(const TrainedGpModel& model, const Eigen::Vector3d& psi_raw) {
    const Eigen::Index n = model.size();
    const Eigen::Vector3d x = model.standardizer.apply(psi_raw);
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k_star[i] = kernel(model.train_inputs.row(i).transpose(), x, model.hyper);
    }
    Prediction out;
    out.mu_star = model.hyper.mean_const + k_star.dot(model.alpha);
    const Eigen::VectorXd v =
        model.chol_lower.triangularView<Eigen::Lower>().solve(k_star);
    out.var_star = std::max(model.hyper.signal_var() - v.squaredNorm(), 0.0);
    return out;
}

double predict_mean(const TrainedGpModel& model, const Eigen::Vector3d& psi_raw) {
    const Eigen::Index n = model.size();
    const Eigen::Vector3d x = model.standardizer.apply(psi_raw);
    double acc = model.hyper.mean_const;
    for (Eigen::Index i = 0; i < n; ++i) {
        acc += kernel(model.train_inputs.row(i).transpose(), x, model.hyper) * model.alpha[i];
    }
    return acc;
}

namespace {

json standardizer_to_json(const Standardizer3& s) {
    return json{{"mean", {s.mean[0], s.mean[1], s.mean[2]}},
                {"scale", {s.scale[0], s.scale[1], s.scale[2]}}};
}

Standardizer3 standardizer_from_json(const json& j) {
    Standardizer3 s;
    for (int d = 0; d < 3; ++d) {
        s.mean[d] = j.at("mean").at(d).get<double>();
        s.scale[d] = j.at("scale").at(d).get<double>();
    }
    return s;
}

}  // namespace

void save_model(const TrainedGpModel& model, const std::filesystem::path& path,
                std::uint64_t config_hash, std::uint64_t seed) {
    json doc;
    doc["schema_version"] = 1;
    doc["config_hash"] = config_hash;
    doc["seed"] = seed;
    doc["hyper"] = {
        {"mean_const", model.hyper.mean_const},
        {"log_lengthscales",
         {model.hyper.log_lengthscales[0], model.hyper.log_lengthscales[1],
          model.hyper.log_lengthscales[2]}},
        {"log_signal_var", model.hyper.log_signal_var},
        {"log_noise_var", model.hyper.log_noise_var},
    };
    doc["standardizer"] = standardizer_to_json(model.standardizer);
    json inputs = json::array();
    for (Eigen::Index i = 0; i < model.size(); ++i) {
        inputs.push_back({model.train_inputs(i, 0), model.train_inputs(i, 1),
                          model.train_inputs(i, 2)});
    }
    doc["train_inputs"] = std::move(inputs);
    json targets = json::array();
    for (Eigen::Index i = 0; i < model.size(); ++i) targets.push_back(model.train_targets[i]);
    doc["train_targets"] = std::move(targets);

    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

TrainedGpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    json doc = json::parse(in);
    if (doc.at("schema_version").get<int>() != 1) {
        throw IoError("unsupported model schema_version in " + path.string());
    }
    GpHyperparams hyper;
    hyper.mean_const = doc.at("hyper").at("mean_const").get<double>();
    for (int d = 0; d < 3; ++d) {
        hyper.log_lengthscales[d] = doc.at("hyper").at("log_lengthscales").at(d).get<double>();
    }
    hyper.log_signal_var = doc.at("hyper").at("log_signal_var").get<double>();
    hyper.log_noise_var = doc.at("hyper").at("log_noise_var").get<double>();

    const auto& inputs = doc.at("train_inputs");
    const auto& targets = doc.at("train_targets");
    GpTrainData data;
    data.inputs.resize(static_cast<Eigen::Index>(inputs.size()), 3);
    data.targets.resize(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (int d = 0; d < 3; ++d) {
            data.inputs(static_cast<Eigen::Index>(i), d) = inputs.at(i).at(d).get<double>();
        }
        data.targets[static_cast<Eigen::Index>(i)] = targets.at(i).get<double>();
    }
    return assemble_model(data, standardizer_from_json(doc.at("standardizer")), hyper);
}

}  // namespace optiguide
