// Command-line front end for the guidance learning pipeline:
// generate -> filter -> train -> simulate/sweep -> report.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "optiguide/dataset.hpp"
#include "optiguide/errors.hpp"
#include "optiguide/pipeline_config.hpp"
#include "optiguide/svg_plot.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace optiguide;

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("OPTIGUIDE_LOG");
    if (!env) return LogLevel::info;
    const std::string value(env);
    if (value == "quiet") return LogLevel::quiet;
    if (value == "debug") return LogLevel::debug;
    return LogLevel::info;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::cerr << "[optiguide] " << msg << '\n';
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::cerr << "[optiguide] " << msg << '\n';
}

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitCaseFailure = 3;

struct CommonArgs {
    std::string config_path;
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool emit_svg = false;
};

PipelineConfig load_config(const CommonArgs& args) {
    PipelineConfig cfg = load_pipeline_config(args.config_path);
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.gp.seed = args.seed;
    }
    if (args.jobs > 1) cfg.filter.jobs = args.jobs;
    return cfg;
}

void require_input(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("input does not exist: " + path.string());
}

int cmd_generate(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    fs::create_directories(cfg.paths.out_dir);

    log_info("generating over " + std::to_string(serpentine_order(cfg.generation).size()) +
             " grid nodes");
    GenerationResult gen = generate_region(cfg.generation);
    gen.dataset.provenance = pipeline_config_to_json(cfg);

    write_dataset_csv(gen.dataset, cfg.paths.dataset);
    write_generation_report(gen.report, cfg, cfg.paths.out_dir / "generation_report.json");
    log_info("dataset: " + std::to_string(gen.dataset.size()) + " samples from " +
             std::to_string(gen.report.converged_nodes) + "/" +
             std::to_string(gen.report.total_nodes) + " nodes -> " +
             cfg.paths.dataset.string());
    return kExitOk;
}

int cmd_filter(const CommonArgs& args, bool run_sweep) {
    PipelineConfig cfg = load_config(args);
    require_input(cfg.paths.dataset);
    fs::create_directories(cfg.paths.out_dir);

    const Dataset dataset = read_dataset_csv(cfg.paths.dataset);
    log_info("filtering " + std::to_string(dataset.size()) + " samples at epsilon=" +
             std::to_string(cfg.filter.epsilon));
    const FilterResult result = filter(dataset, cfg.filter);
    if (result.report.epsilon_infeasible) {
        std::cerr << "[optiguide] warning: epsilon below the initial log-CDR statistic; "
                     "returning the full dataset\n";
    }

    Dataset retained;
    retained.provenance = dataset.provenance;
    retained.samples.reserve(result.retained.size());
    for (const int idx : result.retained) retained.samples.push_back(dataset.samples[idx]);
    write_dataset_csv(retained, cfg.paths.filtered);
    write_filter_report(result.report, cfg, cfg.paths.out_dir / "filter_report.json");
    log_info("retained " + std::to_string(result.report.final_size) + "/" +
             std::to_string(result.report.initial_size) + " -> " + cfg.paths.filtered.string());

    if (run_sweep) {
        std::vector<double> epsilons = default_epsilon_sweep();
        epsilons.push_back(cfg.filter.epsilon);
        std::sort(epsilons.begin(), epsilons.end());
        const auto points = filter_sweep(dataset, cfg.filter, epsilons);
        write_sweep_csv(points, cfg.paths.out_dir / "filter_sweep.csv");
        log_info("sweep curve -> " + (cfg.paths.out_dir / "filter_sweep.csv").string());
    }
    return kExitOk;
}

int cmd_train(const CommonArgs& args, const std::string& input_override) {
    PipelineConfig cfg = load_config(args);
    fs::path input = input_override.empty()
                         ? (fs::exists(cfg.paths.filtered) ? cfg.paths.filtered
                                                           : cfg.paths.dataset)
                         : fs::path(input_override);
    require_input(input);
    fs::create_directories(cfg.paths.out_dir);

    const Dataset dataset = read_dataset_csv(input);
    log_info("training on " + input.string() + " (" + std::to_string(dataset.size()) +
             " samples, cap " + std::to_string(cfg.gp.max_train_size) + ")");
    const FitResult result = fit(dataset, cfg.gp);
    save_model(result.model, cfg.paths.model, config_hash(cfg), cfg.seed);
    write_training_log(result, cfg, cfg.paths.out_dir / "training_log.json");
    log_info("model (" + std::to_string(result.model.size()) + " points, " +
             std::to_string(result.accepted_steps) + " accepted steps) -> " +
             cfg.paths.model.string());
    return kExitOk;
}

int run_cases(const PipelineConfig& cfg, const std::vector<SimConfig>& cases,
              const CommonArgs& args, const std::string& tag) {
    const TrainedGpModel model = load_model(cfg.paths.model);
    const BatchMetrics metrics = evaluate_batch(model, cases, args.jobs);

    const fs::path trace_dir = cfg.paths.out_dir / (tag + "_traces");
    fs::create_directories(trace_dir);
    for (std::size_t i = 0; i < metrics.rows.size(); ++i) {
        const auto& row = metrics.rows[i];
        const fs::path trace_path = trace_dir / (row.label + ".csv");
        write_trace_csv(row.result, trace_path);
        if (args.emit_svg) {
            write_sim_svg(row.result, trace_dir / (row.label + ".svg"));
        }
        log_debug(row.label + ": " + row.result.outcome +
                  " miss=" + std::to_string(row.result.miss_distance) +
                  " dt_f=" + std::to_string(row.result.impact_time_error));
    }
    write_batch_metrics_csv(metrics, cfg.paths.out_dir / (tag + "_metrics.csv"));
    write_batch_summary(metrics, cfg, cfg.paths.out_dir / (tag + "_summary.json"));
    log_info(tag + ": " + std::to_string(metrics.hits) + "/" +
             std::to_string(metrics.rows.size()) + " hits, max miss " +
             std::to_string(metrics.max_miss_distance));

    if (metrics.hits != metrics.rows.size()) {
        std::cerr << "[optiguide] failed cases:\n";
        for (const auto& row : metrics.rows) {
            if (!row.result.hit) {
                std::cerr << "  " << row.label << " r0=" << row.cfg.initial.r
                          << " sigma0=" << row.cfg.initial.sigma << " t_f=" << row.cfg.t_f
                          << " outcome=" << row.result.outcome << '\n';
            }
        }
        return kExitCaseFailure;
    }
    return kExitOk;
}

int cmd_simulate(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    require_input(cfg.paths.model);
    fs::create_directories(cfg.paths.out_dir);
    return run_cases(cfg, {cfg.sim.make_default_case()}, args, "simulate");
}

int cmd_sweep(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    require_input(cfg.paths.model);
    fs::create_directories(cfg.paths.out_dir);
    const std::vector<SimConfig> cases = cfg.sim.make_sweep_cases();
    if (cases.empty()) throw ConfigError("sweep: empty case grid (sim.sweep lists)");
    return run_cases(cfg, cases, args, "sweep");
}

int cmd_report(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    json combined;
    combined["config_hash"] = config_hash(cfg);
    combined["seed"] = cfg.seed;
    for (const char* name : {"generation_report.json", "filter_report.json",
                             "training_log.json", "simulate_summary.json",
                             "sweep_summary.json"}) {
        const fs::path path = cfg.paths.out_dir / name;
        if (!fs::exists(path)) continue;
        std::ifstream in(path);
        combined[name] = json::parse(in);
    }
    std::cout << combined.dump(2) << '\n';
    fs::create_directories(cfg.paths.out_dir);
    std::ofstream out(cfg.paths.out_dir / "report.json");
    out << combined.dump(2) << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"optiguide: energy-optimal impact-time guidance learning pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string train_input;
    bool filter_with_sweep = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "pipeline config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--jobs", args.jobs, "worker threads")->check(CLI::PositiveNumber);
        cmd->add_option("--seed", args.seed, "seed recorded in artifacts")
            ->each([&](const std::string&) { args.seed_set = true; });
        cmd->add_flag("--emit-svg", args.emit_svg, "write quick-look SVG plots");
    };

    CLI::App* generate = app.add_subcommand("generate", "generate the optimal dataset");
    add_common(generate);
    CLI::App* filter_cmd = app.add_subcommand("filter", "filter the dataset");
    add_common(filter_cmd);
    filter_cmd->add_flag("--sweep", filter_with_sweep, "emit a size-vs-epsilon curve");
    CLI::App* train = app.add_subcommand("train", "train the regression model");
    add_common(train);
    train->add_option("--input", train_input, "dataset to train on (default: filtered)");
    CLI::App* simulate_cmd = app.add_subcommand("simulate", "run one closed-loop case");
    add_common(simulate_cmd);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run the closed-loop case grid");
    add_common(sweep_cmd);
    CLI::App* report = app.add_subcommand("report", "consolidate pipeline reports");
    add_common(report);

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(args);
        if (filter_cmd->parsed()) return cmd_filter(args, filter_with_sweep);
        if (train->parsed()) return cmd_train(args, train_input);
        if (simulate_cmd->parsed()) return cmd_simulate(args);
        if (sweep_cmd->parsed()) return cmd_sweep(args);
        if (report->parsed()) return cmd_report(args);
    } catch (const ConfigError& e) {
        std::cerr << "[optiguide] config error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "[optiguide] io error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "[optiguide] invalid argument: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "[optiguide] numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitValidation;
}
