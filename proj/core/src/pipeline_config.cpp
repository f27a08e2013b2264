#include "optiguide/pipeline_config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "optiguide/errors.hpp"

namespace optiguide {

using json = nlohmann::ordered_json;

SimConfig SimDefaults::make_case(double r0, double sigma0, double t_mult) const {
    SimConfig cfg;
    cfg.initial = FullState{r0, initial.lambda, sigma0};
    const double t_min = min_terminal_time(EngagementState{r0, sigma0}, 1.0 / u_m);
    cfg.t_f = t_mult * t_min;
    cfg.dt = dt;
    cfg.u_m = u_m;
    cfg.itcg = itcg;
    cfg.blend = blend;
    cfg.source = source;
    return cfg;
}

SimConfig SimDefaults::make_default_case() const {
    return make_case(initial.r, initial.sigma, t_f_mult);
}

std::vector<SimConfig> SimDefaults::make_sweep_cases() const {
    std::vector<SimConfig> cases;
    for (const double r0 : sweep_r0) {
        for (const double sigma0 : sweep_sigma0) {
            for (const double t_mult : sweep_t_mult) {
                cases.push_back(make_case(r0, sigma0, t_mult));
            }
        }
    }
    return cases;
}

void PipelinePaths::apply_defaults() {
    if (dataset.empty()) dataset = out_dir / "dataset.csv";
    if (filtered.empty()) filtered = out_dir / "filtered.csv";
    if (model.empty()) model = out_dir / "model.json";
}

void PipelineConfig::validate() const {
    generation.validate();
    filter.validate();
    gp.validate();
    sim.itcg.validate();
}

namespace {

void read_if(const json& j, const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
}
void read_if(const json& j, const char* key, int& out) {
    if (j.contains(key)) out = j.at(key).get<int>();
}
void read_if(const json& j, const char* key, bool& out) {
    if (j.contains(key)) out = j.at(key).get<bool>();
}
void read_if(const json& j, const char* key, std::uint64_t& out) {
    if (j.contains(key)) out = j.at(key).get<std::uint64_t>();
}
void read_if(const json& j, const char* key, std::vector<double>& out) {
    if (j.contains(key)) out = j.at(key).get<std::vector<double>>();
}

GenerationConfig generation_from_json(const json& j) {
    GenerationConfig g;
    read_if(j, "r_min", g.r_min);
    read_if(j, "r_max", g.r_max);
    read_if(j, "sigma_min", g.sigma_min);
    read_if(j, "sigma_max", g.sigma_max);
    read_if(j, "t_min", g.t_min);
    read_if(j, "t_max", g.t_max);
    read_if(j, "dr", g.dr);
    read_if(j, "dsigma", g.dsigma);
    read_if(j, "dtf", g.dtf);
    read_if(j, "u_m", g.u_m);
    read_if(j, "dt", g.dt);
    read_if(j, "eps_r", g.eps_r);
    read_if(j, "newton_tol", g.newton_tol);
    read_if(j, "newton_max_iter", g.newton_max_iter);
    return g;
}

json generation_to_json(const GenerationConfig& g) {
    return json{{"r_min", g.r_min},
                {"r_max", g.r_max},
                {"sigma_min", g.sigma_min},
                {"sigma_max", g.sigma_max},
                {"t_min", g.t_min},
                {"t_max", g.t_max},
                {"dr", g.dr},
                {"dsigma", g.dsigma},
                {"dtf", g.dtf},
                {"u_m", g.u_m},
                {"dt", g.dt},
                {"eps_r", g.eps_r},
                {"newton_tol", g.newton_tol},
                {"newton_max_iter", g.newton_max_iter}};
}

FilterConfig filter_from_json(const json& j) {
    FilterConfig f;
    read_if(j, "z", f.z);
    read_if(j, "epsilon", f.epsilon);
    read_if(j, "n_max", f.n_max);
    read_if(j, "knn", f.knn);
    read_if(j, "cdr_floor", f.cdr_floor);
    read_if(j, "jobs", f.jobs);
    return f;
}

json filter_to_json(const FilterConfig& f) {
    return json{{"z", f.z},       {"epsilon", f.epsilon},     {"n_max", f.n_max},
                {"knn", f.knn},   {"cdr_floor", f.cdr_floor}, {"jobs", f.jobs}};
}

FitOptions gp_from_json(const json& j) {
    FitOptions o;
    read_if(j, "iters", o.iters);
    read_if(j, "grad_tol", o.grad_tol);
    read_if(j, "max_train_size", o.max_train_size);
    read_if(j, "subsample", o.subsample);
    read_if(j, "seed", o.seed);
    return o;
}

json gp_to_json(const FitOptions& o) {
    return json{{"iters", o.iters},
                {"grad_tol", o.grad_tol},
                {"max_train_size", o.max_train_size},
                {"subsample", o.subsample},
                {"seed", o.seed}};
}

SimDefaults sim_from_json(const json& j) {
    SimDefaults s;
    if (j.contains("initial")) {
        const json& i = j.at("initial");
        read_if(i, "r", s.initial.r);
        read_if(i, "lambda", s.initial.lambda);
        read_if(i, "sigma", s.initial.sigma);
    }
    read_if(j, "t_f_mult", s.t_f_mult);
    read_if(j, "dt", s.dt);
    read_if(j, "u_m", s.u_m);
    if (j.contains("itcg")) {
        const json& i = j.at("itcg");
        read_if(i, "N", s.itcg.N);
        read_if(i, "K", s.itcg.K);
        s.itcg.u_m = s.u_m;
    }
    if (j.contains("blend")) {
        const json& b = j.at("blend");
        if (b.contains("mode")) {
            s.blend.mode = BlendConfig::mode_from_string(b.at("mode").get<std::string>());
        }
        read_if(b, "sigma_ref", s.blend.sigma_ref);
    }
    if (j.contains("source")) {
        const std::string src = j.at("source").get<std::string>();
        if (src == "blended") {
            s.source = CommandSource::blended;
        } else if (src == "gpr_only") {
            s.source = CommandSource::gpr_only;
        } else {
            throw ConfigError("unknown command source: " + src);
        }
    }
    if (j.contains("sweep")) {
        const json& w = j.at("sweep");
        read_if(w, "r0", s.sweep_r0);
        read_if(w, "sigma0", s.sweep_sigma0);
        read_if(w, "t_f_mult", s.sweep_t_mult);
    }
    return s;
}

json sim_to_json(const SimDefaults& s) {
    return json{
        {"initial", {{"r", s.initial.r}, {"lambda", s.initial.lambda}, {"sigma", s.initial.sigma}}},
        {"t_f_mult", s.t_f_mult},
        {"dt", s.dt},
        {"u_m", s.u_m},
        {"itcg", {{"N", s.itcg.N}, {"K", s.itcg.K}}},
        {"blend",
         {{"mode", BlendConfig::mode_to_string(s.blend.mode)}, {"sigma_ref", s.blend.sigma_ref}}},
        {"source", s.source == CommandSource::blended ? "blended" : "gpr_only"},
        {"sweep",
         {{"r0", s.sweep_r0}, {"sigma0", s.sweep_sigma0}, {"t_f_mult", s.sweep_t_mult}}}};
}

json paths_to_json(const PipelinePaths& p) {
    return json{{"out_dir", p.out_dir.string()},
                {"dataset", p.dataset.string()},
                {"filtered", p.filtered.string()},
                {"model", p.model.string()}};
}

json config_to_json_doc(const PipelineConfig& cfg) {
    return json{{"generation", generation_to_json(cfg.generation)},
                {"filter", filter_to_json(cfg.filter)},
                {"gp", gp_to_json(cfg.gp)},
                {"sim", sim_to_json(cfg.sim)},
                {"paths", paths_to_json(cfg.paths)},
                {"seed", cfg.seed}};
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }

    PipelineConfig cfg;
    if (doc.contains("generation")) cfg.generation = generation_from_json(doc.at("generation"));
    if (doc.contains("filter")) cfg.filter = filter_from_json(doc.at("filter"));
    if (doc.contains("gp")) cfg.gp = gp_from_json(doc.at("gp"));
    if (doc.contains("sim")) cfg.sim = sim_from_json(doc.at("sim"));
    if (doc.contains("paths")) {
        const json& p = doc.at("paths");
        if (p.contains("out_dir")) cfg.paths.out_dir = p.at("out_dir").get<std::string>();
        if (p.contains("dataset")) cfg.paths.dataset = p.at("dataset").get<std::string>();
        if (p.contains("filtered")) cfg.paths.filtered = p.at("filtered").get<std::string>();
        if (p.contains("model")) cfg.paths.model = p.at("model").get<std::string>();
    }
    read_if(doc, "seed", cfg.seed);
    cfg.paths.apply_defaults();
    cfg.validate();
    return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
    return config_to_json_doc(cfg).dump(2);
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
    // hash the semantic payload only; output locations do not change what
    // the pipeline computes
    json doc = config_to_json_doc(cfg);
    doc.erase("paths");
    const std::string canonical = doc.dump();
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (const unsigned char c : canonical) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

void dump_to(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

json provenance_json(const PipelineConfig& cfg) {
    return json{{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}};
}

}  // namespace

void write_generation_report(const GenerationReport& report, const PipelineConfig& cfg,
                             const std::filesystem::path& path) {
    json skipped = json::array();
    for (const NodeResult& n : report.nodes) {
        if (n.converged) continue;
        skipped.push_back({{"r_d", n.node.r_d},
                           {"sigma_d", n.node.sigma_d},
                           {"t_mult", n.node.t_mult},
                           {"t_d", n.t_d},
                           {"reason", n.failure}});
    }
    json doc{{"provenance", provenance_json(cfg)},
             {"config", json::parse(pipeline_config_to_json(cfg)).at("generation")},
             {"total_nodes", report.total_nodes},
             {"converged_nodes", report.converged_nodes},
             {"skipped_nodes", report.skipped_nodes},
             {"max_achieved_error", report.max_achieved_error},
             {"mean_newton_iterations", report.mean_newton_iterations},
             {"iteration_histogram", report.iteration_histogram},
             {"skipped", std::move(skipped)}};
    dump_to(doc, path);
}

void write_filter_report(const FilterReport& report, const PipelineConfig& cfg,
                         const std::filesystem::path& path) {
    json doc{{"provenance", provenance_json(cfg)},
             {"initial_size", report.initial_size},
             {"final_size", report.final_size},
             {"epsilon", report.epsilon},
             {"z", report.z},
             {"epsilon_infeasible", report.epsilon_infeasible},
             {"degenerate_neighborhoods", report.degenerate_neighborhoods},
             {"stats_before",
              {{"mu_rho", report.stats_before.mu_rho},
               {"sigma_rho", report.stats_before.sigma_rho},
               {"k", report.stats_before.k}}},
             {"stats_after",
              {{"mu_rho", report.stats_after.mu_rho},
               {"sigma_rho", report.stats_after.sigma_rho},
               {"k", report.stats_after.k}}},
             {"removals_per_region", report.removals_per_region}};
    dump_to(doc, path);
}

void write_training_log(const FitResult& fit_result, const PipelineConfig& cfg,
                        const std::filesystem::path& path) {
    json doc{{"provenance", provenance_json(cfg)},
             {"accepted_steps", fit_result.accepted_steps},
             {"train_size", fit_result.model.size()},
             {"jitter", fit_result.model.jitter},
             {"lml_trace", fit_result.lml_trace},
             {"hyper",
              {{"mean_const", fit_result.model.hyper.mean_const},
               {"log_lengthscales",
                {fit_result.model.hyper.log_lengthscales[0],
                 fit_result.model.hyper.log_lengthscales[1],
                 fit_result.model.hyper.log_lengthscales[2]}},
               {"log_signal_var", fit_result.model.hyper.log_signal_var},
               {"log_noise_var", fit_result.model.hyper.log_noise_var}}}};
    dump_to(doc, path);
}

void write_batch_metrics_csv(const BatchMetrics& metrics, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "label,r0,sigma0,t_f,hit,outcome,miss_distance,impact_time_error,effort\n";
    for (const BatchRow& row : metrics.rows) {
        out << row.label << ',' << format_double(row.cfg.initial.r) << ','
            << format_double(row.cfg.initial.sigma) << ',' << format_double(row.cfg.t_f) << ','
            << (row.result.hit ? 1 : 0) << ',' << row.result.outcome << ','
            << format_double(row.result.miss_distance) << ','
            << format_double(row.result.impact_time_error) << ','
            << format_double(row.result.effort) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_batch_summary(const BatchMetrics& metrics, const PipelineConfig& cfg,
                         const std::filesystem::path& path) {
    json doc{{"provenance", provenance_json(cfg)},
             {"cases", metrics.rows.size()},
             {"hits", metrics.hits},
             {"max_miss_distance", metrics.max_miss_distance},
             {"max_impact_time_error", metrics.max_impact_time_error},
             {"mean_effort", metrics.mean_effort}};
    dump_to(doc, path);
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "epsilon,retained\n";
    for (const SweepPoint& p : points) {
        out << format_double(p.epsilon) << ',' << p.retained << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace optiguide
