#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfdiff/types.hpp"

namespace cfdiff {

/// Isotropic Gaussian component N(mean, variance * I) with a class label and
/// ground-truth binary-attribute probabilities.
struct MixtureComponent {
    Vec mean;
    double variance = 1.0;
    double weight = 1.0;
    int class_label = 0;
    std::vector<double> attributes;
};

/// Class-labeled isotropic Gaussian mixture in latent space. Immutable once
/// constructed; the constructor validates all invariants.
class MixtureWorld {
public:
    MixtureWorld(std::vector<MixtureComponent> components, int latent_dim);

    const std::vector<MixtureComponent>& components() const { return components_; }
    int latent_dim() const { return latent_dim_; }
    int class_count() const { return class_count_; }
    int attribute_count() const { return attribute_count_; }
    std::size_t component_count() const { return components_.size(); }

    /// Weighted mean of the clean class-c sub-mixture.
    Vec class_mean(int c) const;

private:
    std::vector<MixtureComponent> components_;
    int latent_dim_;
    int class_count_ = 0;
    int attribute_count_ = 0;
};

struct LabeledSamples {
    std::vector<Vec> points;
    std::vector<int> labels;
};

LabeledSamples sample(const MixtureWorld& world, std::optional<int> cls, std::size_t n, std::uint64_t seed);

/// Component parameters of the forward-noised marginal at level alpha_bar:
/// means scale by sqrt(alpha_bar), variances become alpha_bar*v + 1 - alpha_bar.
/// With a class, only that class's components are kept, weights renormalized.
std::vector<MixtureComponent> noisy_marginal(const MixtureWorld& world, std::optional<int> cls, double alpha_bar);

double log_density(const MixtureWorld& world, std::optional<int> cls, const Vec& z, double alpha_bar);

/// Exact unconditional noise prediction: -sqrt(1 - alpha_bar) * grad log p_t(z).
Vec epsilon_uncond(const MixtureWorld& world, const Vec& z, double alpha_bar);

/// Noise prediction of the class-c sub-mixture.
Vec epsilon_cond(const MixtureWorld& world, const Vec& z, double alpha_bar, int c);

/// Jacobian of epsilon_uncond with respect to z (symmetric m x m).
Mat epsilon_uncond_jacobian(const MixtureWorld& world, const Vec& z, double alpha_bar);

/// p(c | z) under the noisy marginal; alpha_bar omitted means clean data.
double bayes_class_posterior(const MixtureWorld& world, const Vec& z, std::optional<double> alpha_bar, int c);

/// Full class posterior vector at noise level alpha_bar (1 = clean).
Vec bayes_class_posteriors(const MixtureWorld& world, const Vec& z, double alpha_bar = 1.0);

int bayes_predict(const MixtureWorld& world, const Vec& z);

/// grad_z log p(c | z) at level alpha_bar, from full-mixture responsibilities.
Vec bayes_log_posterior_grad(const MixtureWorld& world, const Vec& z, double alpha_bar, int c);

/// Clean-data component responsibilities; entries sum to 1.
Vec oracle_features(const MixtureWorld& world, const Vec& x);

/// Responsibility-weighted component attribute probabilities.
Vec attribute_probs(const MixtureWorld& world, const Vec& x);

/// Shipped presets: "two-moons-gauss", "triad", "hyper8".
std::vector<std::string> world_preset_names();
MixtureWorld make_world_preset(const std::string& name);

}  // namespace cfdiff
