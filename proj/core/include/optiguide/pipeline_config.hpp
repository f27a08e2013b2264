#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "optiguide/datagen.hpp"
#include "optiguide/eds_filter.hpp"
#include "optiguide/gpr.hpp"
#include "optiguide/guidance_sim.hpp"

namespace optiguide {

// File-based pipeline configuration shared by the command-line front end and
// the test harnesses. One JSON document mirrors the per-module configs.

struct SimDefaults {
    FullState initial{1.0, 0.0, 0.5};
    double t_f_mult = 1.6;  // terminal time as a multiple of the case minimum time
    double dt = 1e-3;
    double u_m = 5.0;
    ItcgParams itcg;
    BlendConfig blend;
    CommandSource source = CommandSource::blended;

    std::vector<double> sweep_r0;
    std::vector<double> sweep_sigma0;
    std::vector<double> sweep_t_mult;

    // Resolves the absolute terminal time of one case.
    SimConfig make_case(double r0, double sigma0, double t_mult) const;
    SimConfig make_default_case() const;
    std::vector<SimConfig> make_sweep_cases() const;
};

struct PipelinePaths {
    std::filesystem::path out_dir = "out";
    std::filesystem::path dataset;   // defaults to out_dir/dataset.csv
    std::filesystem::path filtered;  // defaults to out_dir/filtered.csv
    std::filesystem::path model;     // defaults to out_dir/model.json

    void apply_defaults();
};

struct PipelineConfig {
    GenerationConfig generation;
    FilterConfig filter;
    FitOptions gp;
    SimDefaults sim;
    PipelinePaths paths;
    std::uint64_t seed = 0;

    void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

// FNV-1a hash of the canonical JSON form; embedded in every artifact.
std::uint64_t config_hash(const PipelineConfig& cfg);

// Report writers (JSON sidecars next to the CSV artifacts).
void write_generation_report(const GenerationReport& report, const PipelineConfig& cfg,
                             const std::filesystem::path& path);
void write_filter_report(const FilterReport& report, const PipelineConfig& cfg,
                         const std::filesystem::path& path);
void write_training_log(const FitResult& fit_result, const PipelineConfig& cfg,
                        const std::filesystem::path& path);
void write_batch_metrics_csv(const BatchMetrics& metrics, const std::filesystem::path& path);
void write_batch_summary(const BatchMetrics& metrics, const PipelineConfig& cfg,
                         const std::filesystem::path& path);
void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path);

}  // namespace optiguide
