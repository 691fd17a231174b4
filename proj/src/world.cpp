#include "cfdiff/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cfdiff/rng.hpp"

namespace cfdiff {

namespace {

constexpr double kResponsibilityFloor = 1e-300;

double log_sum_exp(const Vec& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

// Per-component log(w_k N_k(z)) and scores at noise level alpha_bar, over the
// components selected by `cls` (all when empty).
struct MixtureEval {
    std::vector<std::size_t> index;
    Vec log_joint;
    std::vector<Vec> scores;
    std::vector<double> variances;
    double log_norm = 0.0;

    Vec responsibilities() const { return (log_joint.array() - log_norm).exp(); }
};

MixtureEval evaluate(const MixtureWorld& world, std::optional<int> cls, const Vec& z, double alpha_bar) {
    detail::require_dim(z, world.latent_dim(), "mixture state");
    const double sa = std::sqrt(alpha_bar);
    const double m = world.latent_dim();
    MixtureEval ev;
    const auto& comps = world.components();
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if (!cls || comps[k].class_label == *cls) ev.index.push_back(k);
    }
    ev.log_joint.resize(static_cast<Eigen::Index>(ev.index.size()));
    for (std::size_t j = 0; j < ev.index.size(); ++j) {
        const auto& comp = comps[ev.index[j]];
        const double s = alpha_bar * comp.variance + (1.0 - alpha_bar);
        Vec diff = z - sa * comp.mean;
        ev.log_joint[j] = std::log(comp.weight) - 0.5 * m * std::log(2.0 * std::numbers::pi * s) -
                          diff.squaredNorm() / (2.0 * s);
        ev.scores.push_back(-diff / s);
        ev.variances.push_back(s);
    }
    ev.log_norm = log_sum_exp(ev.log_joint);
    return ev;
}

Vec mixture_score(const MixtureEval& ev) {
    const Vec r = ev.responsibilities();
    Vec g = Vec::Zero(ev.scores.front().size());
    for (std::size_t j = 0; j < ev.scores.size(); ++j) g += r[j] * ev.scores[j];
    return g;
}

void require_noise_level(double alpha_bar, bool allow_one, const char* where) {
    const bool ok = alpha_bar > 0.0 && (allow_one ? alpha_bar <= 1.0 : alpha_bar < 1.0);
    if (!ok) {
        throw std::invalid_argument(std::string(where) + ": alpha_bar out of range (" + std::to_string(alpha_bar) + ")");
    }
}

void require_class(const MixtureWorld& world, int c) {
    if (c < 0 || c >= world.class_count()) {
        throw std::invalid_argument("invalid class " + std::to_string(c));
    }
}

}  // namespace

MixtureWorld::MixtureWorld(std::vector<MixtureComponent> components, int latent_dim)
    : components_(std::move(components)), latent_dim_(latent_dim) {
    detail::require(latent_dim_ >= 1, "world: latent_dim must be >= 1");
    detail::require(!components_.empty(), "world: at least one component required");
    double total = 0.0;
    attribute_count_ = static_cast<int>(components_.front().attributes.size());
    for (const auto& c : components_) {
        detail::require_dim(c.mean, latent_dim_, "component mean");
        detail::require(c.variance > 0.0, "world: component variance must be > 0");
        detail::require(c.weight > 0.0, "world: component weight must be > 0");
        detail::require(c.class_label >= 0, "world: negative class label");
        detail::require(static_cast<int>(c.attributes.size()) == attribute_count_,
                        "world: all components must carry the same attribute count");
        for (double a : c.attributes) detail::require(a >= 0.0 && a <= 1.0, "world: attributes must lie in [0,1]");
        class_count_ = std::max(class_count_, c.class_label + 1);
        total += c.weight;
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, "world: component weights must sum to 1");
    for (int k = 0; k < class_count_; ++k) {
        const bool owned = std::any_of(components_.begin(), components_.end(),
                                       [k](const MixtureComponent& c) { return c.class_label == k; });
        detail::require(owned, "world: class " + std::to_string(k) + " owns no component");
    }
}

Vec MixtureWorld::class_mean(int c) const {
    require_class(*this, c);
    Vec mean = Vec::Zero(latent_dim_);
    double w = 0.0;
    for (const auto& comp : components_) {
        if (comp.class_label != c) continue;
        mean += comp.weight * comp.mean;
        w += comp.weight;
    }
    return mean / w;
}

LabeledSamples sample(const MixtureWorld& world, std::optional<int> cls, std::size_t n, std::uint64_t seed) {
    detail::require(n >= 1, "sample: n must be >= 1");
    if (cls) require_class(world, *cls);
    const auto& comps = world.components();
    std::vector<double> weights;
    std::vector<std::size_t> index;
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if (cls && comps[k].class_label != *cls) continue;
        weights.push_back(comps[k].weight);
        index.push_back(k);
    }
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    Rng rng(seed);
    LabeledSamples out;
    out.points.reserve(n);
    out.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& comp = comps[index[pick(rng.engine())]];
        out.points.push_back(comp.mean + std::sqrt(comp.variance) * rng.normal_vec(world.latent_dim()));
        out.labels.push_back(comp.class_label);
    }
    return out;
}

std::vector<MixtureComponent> noisy_marginal(const MixtureWorld& world, std::optional<int> cls, double alpha_bar) {
    require_noise_level(alpha_bar, true, "noisy_marginal");
    if (cls) require_class(world, *cls);
    std::vector<MixtureComponent> out;
    double total = 0.0;
    for (const auto& comp : world.components()) {
        if (cls && comp.class_label != *cls) continue;
        MixtureComponent noisy = comp;
        if (alpha_bar != 1.0) {
            noisy.mean = std::sqrt(alpha_bar) * comp.mean;
            noisy.variance = alpha_bar * comp.variance + (1.0 - alpha_bar);
        }
        total += comp.weight;
        out.push_back(std::move(noisy));
    }
    if (cls) {
        for (auto& comp : out) comp.weight /= total;
    }
    return out;
}

double log_density(const MixtureWorld& world, std::optional<int> cls, const Vec& z, double alpha_bar) {
    require_noise_level(alpha_bar, true, "log_density");
    if (cls) require_class(world, *cls);
    const MixtureEval ev = evaluate(world, cls, z, alpha_bar);
    if (!cls) return ev.log_norm;
    double class_weight = 0.0;
    for (std::size_t k : ev.index) class_weight += world.components()[k].weight;
    return ev.log_norm - std::log(class_weight);
}

Vec epsilon_uncond(const MixtureWorld& world, const Vec& z, double alpha_bar) {
    require_noise_level(alpha_bar, false, "epsilon_uncond");
    return -std::sqrt(1.0 - alpha_bar) * mixture_score(evaluate(world, std::nullopt, z, alpha_bar));
}

Vec epsilon_cond(const MixtureWorld& world, const Vec& z, double alpha_bar, int c) {
    require_noise_level(alpha_bar, false, "epsilon_cond");
    require_class(world, c);
    return -std::sqrt(1.0 - alpha_bar) * mixture_score(evaluate(world, c, z, alpha_bar));
}

Mat epsilon_uncond_jacobian(const MixtureWorld& world, const Vec& z, double alpha_bar) {
    require_noise_level(alpha_bar, false, "epsilon_uncond_jacobian");
    const MixtureEval ev = evaluate(world, std::nullopt, z, alpha_bar);
    const Vec r = ev.responsibilities();
    const Eigen::Index m = z.size();
    // Hessian of log p = sum_k r_k (-I / s_k + s_k s_k^T) - g g^T, with s_k the
    // component scores and g their responsibility-weighted mean.
    Mat hess = Mat::Zero(m, m);
    Vec g = Vec::Zero(m);
    for (std::size_t j = 0; j < ev.scores.size(); ++j) {
        hess.diagonal().array() -= r[j] / ev.variances[j];
        hess.noalias() += r[j] * ev.scores[j] * ev.scores[j].transpose();
        g += r[j] * ev.scores[j];
    }
    hess.noalias() -= g * g.transpose();
    return -std::sqrt(1.0 - alpha_bar) * hess;
}

Vec bayes_class_posteriors(const MixtureWorld& world, const Vec& z, double alpha_bar) {
    require_noise_level(alpha_bar, true, "bayes_class_posteriors");
    const MixtureEval ev = evaluate(world, std::nullopt, z, alpha_bar);
    const Vec r = ev.responsibilities();
    Vec post = Vec::Zero(world.class_count());
    for (std::size_t j = 0; j < ev.index.size(); ++j) post[world.components()[ev.index[j]].class_label] += r[j];
    return post;
}

double bayes_class_posterior(const MixtureWorld& world, const Vec& z, std::optional<double> alpha_bar, int c) {
    require_class(world, c);
    const double ab = alpha_bar.value_or(1.0);
    require_noise_level(ab, true, "bayes_class_posterior");
    const MixtureEval ev = evaluate(world, std::nullopt, z, ab);
    std::vector<double> in_class;
    for (std::size_t j = 0; j < ev.index.size(); ++j) {
        if (world.components()[ev.index[j]].class_label == c) in_class.push_back(ev.log_joint[j]);
    }
    const double lse_c = log_sum_exp(Eigen::Map<const Vec>(in_class.data(), static_cast<Eigen::Index>(in_class.size())));
    return std::exp(lse_c - ev.log_norm);
}

int bayes_predict(const MixtureWorld& world, const Vec& z) {
    const Vec post = bayes_class_posteriors(world, z, 1.0);
    Eigen::Index best = 0;
    post.maxCoeff(&best);
    return static_cast<int>(best);
}

Vec bayes_log_posterior_grad(const MixtureWorld& world, const Vec& z, double alpha_bar, int c) {
    require_class(world, c);
    require_noise_level(alpha_bar, true, "bayes_log_posterior_grad");
    const MixtureEval ev = evaluate(world, std::nullopt, z, alpha_bar);
    const Vec r = ev.responsibilities().cwiseMax(kResponsibilityFloor);
    double class_mass = 0.0;
    for (std::size_t j = 0; j < ev.index.size(); ++j) {
        if (world.components()[ev.index[j]].class_label == c) class_mass += r[j];
    }
    // grad log p(c|z) = sum_k (1{k in c} r_k / p(c|z) - r_k) * score_k
    Vec g = Vec::Zero(z.size());
    for (std::size_t j = 0; j < ev.index.size(); ++j) {
        const bool in_class = world.components()[ev.index[j]].class_label == c;
        const double coef = (in_class ? r[j] / class_mass : 0.0) - r[j];
        g += coef * ev.scores[j];
    }
    return g;
}

Vec oracle_features(const MixtureWorld& world, const Vec& x) {
    return evaluate(world, std::nullopt, x, 1.0).responsibilities();
}

Vec attribute_probs(const MixtureWorld& world, const Vec& x) {
    const Vec r = oracle_features(world, x);
    Vec out = Vec::Zero(world.attribute_count());
    const auto& comps = world.components();
    for (std::size_t k = 0; k < comps.size(); ++k) {
        for (int a = 0; a < world.attribute_count(); ++a) out[a] += r[static_cast<Eigen::Index>(k)] * comps[k].attributes[a];
    }
    return out.cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<std::string> world_preset_names() { return {"two-moons-gauss", "triad", "hyper8"}; }

MixtureWorld make_world_preset(const std::string& name) {
    std::vector<MixtureComponent> comps;
    auto add = [&](std::initializer_list<double> mean, double var, double w, int cls, std::vector<double> attrs) {
        Vec m(static_cast<Eigen::Index>(mean.size()));
        std::copy(mean.begin(), mean.end(), m.data());
        comps.push_back({std::move(m), var, w, cls, std::move(attrs)});
    };
    if (name == "two-moons-gauss") {
        // Two interleaved arcs, each approximated by two Gaussians.
        const double r = std::numbers::sqrt2;
        add({r - 1.0, r - 0.5}, 0.1, 0.25, 0, {0.9, 0.8, 0.1});
        add({-r - 1.0, r - 0.5}, 0.1, 0.25, 0, {0.9, 0.1, 0.9});
        add({1.0 - r, 0.5 - r}, 0.1, 0.25, 1, {0.1, 0.2, 0.1});
        add({1.0 + r, 0.5 - r}, 0.1, 0.25, 1, {0.1, 0.9, 0.9});
        return MixtureWorld(std::move(comps), 2);
    }
    if (name == "triad") {
        for (int k = 0; k < 3; ++k) {
            const double angle = std::numbers::pi / 2.0 + k * 2.0 * std::numbers::pi / 3.0;
            std::vector<double> attrs(3, 0.1);
            attrs[k] = 0.9;
            add({2.0 * std::cos(angle), 2.0 * std::sin(angle)}, 0.25, 1.0 / 3.0, k, attrs);
        }
        return MixtureWorld(std::move(comps), 2);
    }
    if (name == "hyper8") {
        constexpr int m = 16;
        for (int c = 0; c < 8; ++c) {
            for (int sign : {+1, -1}) {
                Vec mean = Vec::Zero(m);
                mean[c] = 3.0;
                mean[8 + c] = 1.5 * sign;
                std::vector<double> attrs(4);
                for (int b = 0; b < 3; ++b) attrs[b] = ((c >> b) & 1) ? 0.85 : 0.15;
                attrs[3] = sign > 0 ? 0.8 : 0.2;
                comps.push_back({std::move(mean), 0.5, 1.0 / 16.0, c, std::move(attrs)});
            }
        }
        return MixtureWorld(std::move(comps), m);
    }
    throw std::invalid_argument("unknown world preset '" + name + "'");
}

}  // namespace cfdiff
