#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfdiff/classifiers.hpp"
#include "cfdiff/guidance.hpp"
#include "cfdiff/latent.hpp"
#include "cfdiff/schedule.hpp"
#include "cfdiff/world.hpp"

namespace cfdiff {

struct TrajectoryStep {
    int t = 0;  // ladder position
    Vec z_t;
    Vec x0_hat;  // decoded clean estimate seen by the classifier
    Vec logits;
    double consensus_pass_fraction = 1.0;
};

/// Steps ordered by decreasing ladder position.
struct Trajectory {
    std::vector<TrajectoryStep> steps;
};

/// Per-sample metric slots, filled by the metrics module.
struct SampleMetrics {
    std::optional<bool> flipped;
    std::optional<double> cout;
    std::optional<double> l1;
    std::optional<double> l2;
    std::optional<double> feat_sim;
    std::optional<double> bayes_target_posterior;
};

struct CounterfactualRecord {
    std::size_t id = 0;
    Vec x_factual;
    int y_factual = 0;           // classifier prediction at x_factual
    std::optional<int> y_true;   // world label when the factual was sampled
    int y_target = 0;
    Vec x_counterfactual;
    std::uint64_t seed = 0;
    GuidanceConfig config;
    double t_start_fraction = 0.5;
    int t_start = 0;  // ladder position actually used
    std::optional<Trajectory> trajectory;
    SampleMetrics metrics;
};

/// The fixed parts of an experiment, shared read-only by all episodes.
struct GenerationContext {
    const MixtureWorld& world;
    const AffineCodec& codec;
    const Classifier& classifier;
    const NoiseSchedule& schedule;
};

/// sqrt(ab) E(x_F) + sqrt(1 - ab) eps at ladder position `position`.
Vec abduct(const Vec& x_factual, const NoiseSchedule& schedule, std::size_t position, const AffineCodec& codec,
           std::uint64_t seed);

/// One DDIM transition. `noise` is required when sigma > 0.
Vec ddim_step(const Vec& z_t, const Vec& eps_hat, double alpha_bar_t, double alpha_bar_prev, double sigma,
              const std::optional<Vec>& noise = std::nullopt);

/// Ladder position nearest fraction * ladder length, clamped to the ladder.
std::size_t start_position(const NoiseSchedule& schedule, double t_start_fraction);

/// Sees (ladder position, cls_score, eps_c - eps_uc) at every guided step.
using StepObserver = std::function<void(std::size_t, const Vec&, const Vec&)>;

/// Guided reverse diffusion from the abducted factual. y_target need not
/// differ from the classifier's prediction; callers decide.
CounterfactualRecord generate(const GenerationContext& ctx, const Vec& x_factual, int y_target,
                              const GuidanceConfig& config, double t_start_fraction, std::uint64_t seed,
                              bool record_trajectory = false, const StepObserver& observer = {});

std::vector<CounterfactualRecord> generate_diverse(const GenerationContext& ctx, const Vec& x_factual, int y_target,
                                                   const GuidanceConfig& config, double t_start_fraction,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   bool record_trajectory = false);

/// posterior-topk: classifier softmax at x_F. feature-topk: cosine between
/// oracle features of x_F and of each class mean. mean-distance-topk: nearest
/// class means to the factual class mean. fixed: the supplied class.
enum class TargetMode { PosteriorTopK, FeatureTopK, MeanDistanceTopK, Fixed };

std::string to_string(TargetMode mode);
TargetMode target_mode_from_string(const std::string& name);

int select_target_class(const Vec& x_factual, int y_factual, const MixtureWorld& world, const AffineCodec& codec,
                        const Classifier& classifier, TargetMode mode, int k, std::uint64_t seed,
                        std::optional<int> fixed_class = std::nullopt);

struct AdversarialOptions {
    int steps = 100;
    double step_size = 0.05;
    double budget_l2 = 1.0;
    bool stop_on_flip = false;  // stop at the first iterate classified as the target
};

/// L2 projected gradient descent on ce_loss toward y_target, in ambient space.
Vec adversarial_baseline(const Vec& x_factual, int y_target, const Classifier& classifier,
                         const AdversarialOptions& options);

/// Worker count: CFDIFF_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(0..n-1) across workers. The first failing index (lowest) rethrows.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cfdiff
