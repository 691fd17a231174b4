#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cfdiff/cli/config.hpp"

namespace cfdiff::cli {

/// Everything a command needs, built once from a config.
struct Experiment {
    ExperimentConfig cfg;
    MixtureWorld world;
    AffineCodec codec;
    Classifier classifier;
    NoiseSchedule schedule;

    GenerationContext context() const { return {world, codec, classifier, schedule}; }
};

struct TrainedClassifier {
    Classifier model;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double bayes_accuracy = 0.0;  // Bayes oracle on the same test set
};

MixtureWorld load_world(const WorldSpec& spec);
AffineCodec build_codec(const CodecSpec& spec, int latent_dim);
NoiseSchedule build_schedule(const ScheduleSpec& spec);
/// Training data and shuffles derive from spec.seed only, so the master
/// seed never changes the target model.
TrainedClassifier train_classifier(const ClassifierSpec& spec, const MixtureWorld& world, const AffineCodec& codec);
Experiment prepare(const ExperimentConfig& cfg);

/// On-manifold factuals: world samples decoded to ambient space.
LabeledSamples sample_factuals(const Experiment& exp, std::size_t n);

/// Target selection and generation for cfg.n factuals under `guidance`.
/// Results are in factual order whatever the worker count.
std::vector<CounterfactualRecord> run_generation(const Experiment& exp, const GuidanceConfig& guidance,
                                                 bool record_trajectories, const StepObserver& observer = {});

/// Collects (cls_score, eps_c - eps_uc) at every guided step of a run.
AngleStats run_angles(const Experiment& exp, double threshold_deg = 60.0);

std::string records_to_jsonl(const std::vector<CounterfactualRecord>& records);
std::string trajectories_to_jsonl(const std::vector<CounterfactualRecord>& records);
std::vector<CounterfactualRecord> read_records(const std::string& path);
std::vector<std::pair<std::size_t, Trajectory>> read_trajectories(const std::string& path);

// Each command writes its files under cfg.out and throws on failure.
void cmd_world(const ExperimentConfig& cfg, std::ostream& log);
void cmd_train(const ExperimentConfig& cfg, std::ostream& log);
void cmd_generate(const ExperimentConfig& cfg, std::ostream& log);
void cmd_evaluate(const ExperimentConfig& cfg, const std::string& records_path, std::ostream& log);
void cmd_angles(const ExperimentConfig& cfg, std::ostream& log);
void cmd_plot(const ExperimentConfig& cfg, const std::string& records_path, const std::string& trajectories_path,
              const std::string& angles_path, std::ostream& log);
void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);

/// Full command-line entry point. Returns the process exit code:
/// 0 on success, 2 for invalid arguments or configs, 1 for other failures.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace cfdiff::cli
