#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfdiff/engine.hpp"
#include "cfdiff/metrics.hpp"
#include "cfdiff/serialize.hpp"

namespace cfdiff::cli {

constexpr int kSchemaVersion = 1;

struct WorldSpec {
    std::string preset = "two-moons-gauss";
    std::string file;  // overrides preset when set
};

/// ambient_dim 0 means "same as the latent dimension".
struct CodecSpec {
    bool identity = true;
    int ambient_dim = 0;
    std::uint64_t seed = 0;
};

struct ClassifierSpec {
    std::string preset;  // "linear-default", "overfit-mlp" or empty
    ModelType type = ModelType::Linear;
    int hidden = 64;
    int epochs = 50;
    double lr = 0.1;
    int batch = 32;
    int train_samples = 1000;
    std::uint64_t seed = 1;
    std::string checkpoint;  // load instead of training when set
};

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::LinearBeta;
    int base_steps = 1000;
    int respace_factor = 2;
    double ddim_eta = 0.0;
};

struct TargetSpec {
    TargetMode mode = TargetMode::PosteriorTopK;
    int k = 1;
    std::optional<int> cls;  // fixed mode
};

struct SweepSpec {
    std::vector<double> gamma{45.0};
    std::vector<double> lambda_c{3.0};
    std::vector<double> lambda_d{1.0};
};

struct ExperimentConfig {
    WorldSpec world;
    CodecSpec codec;
    ClassifierSpec classifier;
    ScheduleSpec schedule;
    std::string guidance_preset = "desk";
    GuidanceConfig guidance;
    double t_start_fraction = 0.5;
    TargetSpec target;
    std::size_t n = 100;
    std::uint64_t seed = 0;
    std::string out = "out";
    bool record_trajectories = false;
    bool emit_plots = false;
    EvaluationOptions evaluation;
    SweepSpec sweep;
};

/// Applies a named classifier preset onto spec (keeps checkpoint and seed).
void apply_classifier_preset(ClassifierSpec& spec, const std::string& name);

/// Applies a guidance preset: config and t_start_fraction.
void apply_guidance_preset(ExperimentConfig& cfg, const std::string& name);

/// Strict parse: requires "schema": 1 and rejects unknown keys at every level.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace cfdiff::cli
