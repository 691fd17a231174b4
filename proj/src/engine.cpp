#include "cfdiff/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "cfdiff/rng.hpp"

namespace cfdiff {

namespace {

// Stream indices under an episode seed.
constexpr std::uint64_t kAbductionStream = 0;
constexpr std::uint64_t kStepNoiseStream = 1;

Vec unit_or_zero(const Vec& v) {
    const double n = v.norm();
    return n > 0.0 ? Vec(v / n) : Vec::Zero(v.size());
}

// Top-k pick among candidates already sorted best-first.
int pick_top_k(const std::vector<int>& ranked, int k, std::uint64_t seed) {
    Rng rng(seed);
    return ranked[rng.index(static_cast<std::size_t>(k))];
}

// Stable ranking of non-factual classes by descending score.
std::vector<int> rank_classes(const std::vector<double>& score, int exclude) {
    std::vector<int> out;
    for (int c = 0; c < static_cast<int>(score.size()); ++c) {
        if (c != exclude) out.push_back(c);
    }
    std::stable_sort(out.begin(), out.end(), [&](int a, int b) { return score[a] > score[b]; });
    return out;
}

double cosine(const Vec& a, const Vec& b) {
    const double d = a.norm() * b.norm();
    return d > 0.0 ? a.dot(b) / d : 0.0;
}

}  // namespace

Vec abduct(const Vec& x_factual, const NoiseSchedule& schedule, std::size_t position, const AffineCodec& codec,
           std::uint64_t seed) {
    if (position >= schedule.ladder_size()) throw std::invalid_argument("abduct: ladder position out of range");
    const Vec z0 = codec.encode(x_factual);
    const double ab = schedule.alpha_bar_at(position);
    if (ab == 1.0) return z0;
    Rng rng(derive_seed(seed, kAbductionStream));
    return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * rng.normal_vec(z0.size());
}

Vec ddim_step(const Vec& z_t, const Vec& eps_hat, double alpha_bar_t, double alpha_bar_prev, double sigma,
              const std::optional<Vec>& noise) {
    detail::require(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0 && alpha_bar_prev > 0.0 && alpha_bar_prev <= 1.0,
                    "ddim_step: alpha_bar values must lie in (0,1]");
    detail::require(sigma >= 0.0, "ddim_step: sigma must be >= 0");
    const double rest = 1.0 - alpha_bar_prev - sigma * sigma;
    detail::require(rest >= -1e-15, "ddim_step: sigma^2 exceeds 1 - alpha_bar_prev");
    Vec out = std::sqrt(alpha_bar_prev) * predict_x0(z_t, eps_hat, alpha_bar_t) +
              std::sqrt(std::max(rest, 0.0)) * eps_hat;
    if (sigma > 0.0) {
        detail::require(noise.has_value(), "ddim_step: sigma > 0 needs a noise draw");
        detail::require_dim(*noise, z_t.size(), "ddim_step noise");
        out += sigma * *noise;
    }
    return out;
}

std::size_t start_position(const NoiseSchedule& schedule, double t_start_fraction) {
    detail::require(t_start_fraction >= 0.0 && t_start_fraction <= 1.0, "t_start_fraction must lie in [0,1]");
    const auto L = static_cast<double>(schedule.ladder_size());
    const auto pos = static_cast<std::size_t>(std::llround(t_start_fraction * L));
    return std::min(pos, schedule.ladder_size() - 1);
}

CounterfactualRecord generate(const GenerationContext& ctx, const Vec& x_factual, int y_target,
                              const GuidanceConfig& config, double t_start_fraction, std::uint64_t seed,
                              bool record_trajectory, const StepObserver& observer) {
    config.validate();
    detail::require(y_target >= 0 && y_target < ctx.world.class_count(), "generate: invalid target class");
    detail::require(ctx.codec.latent_dim() == ctx.world.latent_dim(), "generate: codec and world dimensions differ");
    detail::require(ctx.classifier.input_dim() == ctx.codec.ambient_dim(),
                    "generate: classifier input does not match the ambient dimension");
    detail::require_dim(x_factual, ctx.codec.ambient_dim(), "generate factual");

    const NoiseSchedule& sched = ctx.schedule;
    const std::size_t start = start_position(sched, t_start_fraction);
    const Vec overwrite = config.overwrite_vector(ctx.world.latent_dim());

    CounterfactualRecord rec;
    rec.x_factual = x_factual;
    rec.y_factual = predict(ctx.classifier, x_factual);
    rec.y_target = y_target;
    rec.seed = seed;
    rec.config = config;
    rec.t_start_fraction = t_start_fraction;
    rec.t_start = static_cast<int>(start);
    if (record_trajectory) rec.trajectory.emplace();

    Vec z = abduct(x_factual, sched, start, ctx.codec, seed);
    Rng step_rng(derive_seed(seed, kStepNoiseStream));

    for (std::size_t i = start; i >= 1; --i) {
        const double ab = sched.alpha_bar_at(i);
        const double ab_prev = sched.alpha_bar_at(i - 1);
        const Vec eps_uc = epsilon_uncond(ctx.world, z, ab);
        const ScoreInputs in{z, eps_uc, ab};

        Vec eps_hat = eps_uc;
        double pass = 0.0;
        if (config.mode != GuidanceMode::UncondOnly) {
            const Vec eps_c = epsilon_cond(ctx.world, z, ab, y_target);
            const Vec cls = cls_score(in, y_target, ctx.classifier, ctx.codec, ctx.world, config.grad_through_score);
            const Vec dist =
                dist_score(in, x_factual, ctx.codec, ctx.world, config.distance, config.grad_through_score);
            if (observer) observer(i, cls, eps_c - eps_uc);
            Vec consensus;
            switch (config.mode) {
                case GuidanceMode::Consensus: {
                    ConsensusResult r =
                        consensus_filter(cls, eps_c - eps_uc, config.gamma_deg, config.block_size, overwrite);
                    consensus = std::move(r.values);
                    pass = r.pass_fraction();
                    break;
                }
                case GuidanceMode::Cone: {
                    // The Bayes-oracle gradient stands in for a robust model,
                    // signed like cls_score (a loss gradient).
                    const Vec w = unit_or_zero(-bayes_log_posterior_grad(ctx.world, z, ab, y_target));
                    const double cn = cls.norm();
                    if (cn > 0.0 && w.norm() > 0.0) {
                        consensus = cone_project(cls / cn, w, config.cone_alpha_deg, config.cone_aligned_returns_w) * cn;
                    } else {
                        consensus = cls;
                    }
                    pass = 1.0;
                    break;
                }
                default:
                    consensus = cls;
                    pass = 1.0;
                    break;
            }
            eps_hat = assemble_epsilon(eps_uc, eps_c, consensus, dist, config.eta, config.lambda_c, config.lambda_d);
        }

        if (rec.trajectory) {
            TrajectoryStep step;
            step.t = static_cast<int>(i);
            step.z_t = z;
            step.x0_hat = ctx.codec.decode(predict_x0(z, eps_uc, ab));
            step.logits = logits(ctx.classifier, step.x0_hat);
            step.consensus_pass_fraction = pass;
            rec.trajectory->steps.push_back(std::move(step));
        }

        const double sigma = sched.sigma(ab, ab_prev);
        std::optional<Vec> noise;
        if (sigma > 0.0) noise = step_rng.normal_vec(z.size());
        z = ddim_step(z, eps_hat, ab, ab_prev, sigma, noise);
        if (!z.allFinite()) {
            throw NumericalFailure("generate: non-finite state after ladder position " + std::to_string(i));
        }
    }

    rec.x_counterfactual = ctx.codec.decode(z);
    return rec;
}

std::vector<CounterfactualRecord> generate_diverse(const GenerationContext& ctx, const Vec& x_factual, int y_target,
                                                   const GuidanceConfig& config, double t_start_fraction,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   bool record_trajectory) {
    detail::require(!seeds.empty(), "generate_diverse: no seeds");
    std::vector<CounterfactualRecord> out(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) {
        out[i] = generate(ctx, x_factual, y_target, config, t_start_fraction, seeds[i], record_trajectory);
        out[i].id = i;
    });
    return out;
}

std::string to_string(TargetMode mode) {
    switch (mode) {
        case TargetMode::PosteriorTopK: return "posterior-topk";
        case TargetMode::FeatureTopK: return "feature-topk";
        case TargetMode::MeanDistanceTopK: return "mean-distance-topk";
        case TargetMode::Fixed: return "fixed";
    }
    return "posterior-topk";
}

TargetMode target_mode_from_string(const std::string& name) {
    if (name == "posterior-topk") return TargetMode::PosteriorTopK;
    if (name == "feature-topk") return TargetMode::FeatureTopK;
    if (name == "mean-distance-topk") return TargetMode::MeanDistanceTopK;
    if (name == "fixed") return TargetMode::Fixed;
    throw std::invalid_argument("unknown target mode '" + name + "'");
}

int select_target_class(const Vec& x_factual, int y_factual, const MixtureWorld& world, const AffineCodec& codec,
                        const Classifier& classifier, TargetMode mode, int k, std::uint64_t seed,
                        std::optional<int> fixed_class) {
    const int K = world.class_count();
    detail::require(y_factual >= 0 && y_factual < K, "select_target_class: invalid factual class");
    if (mode == TargetMode::Fixed) {
        detail::require(fixed_class.has_value(), "select_target_class: fixed mode needs a class");
        detail::require(*fixed_class >= 0 && *fixed_class < K, "select_target_class: invalid fixed class");
        detail::require(*fixed_class != y_factual, "select_target_class: fixed class equals the factual class");
        return *fixed_class;
    }
    if (k < 1 || k >= K) throw std::invalid_argument("select_target_class: k must lie in [1, class_count)");

    std::vector<double> score(static_cast<std::size_t>(K));
    if (mode == TargetMode::PosteriorTopK) {
        const Vec p = probabilities(classifier, x_factual);
        for (int c = 0; c < K; ++c) score[c] = p[c];
    } else if (mode == TargetMode::FeatureTopK) {
        const Vec f = oracle_features(world, codec.encode(x_factual));
        for (int c = 0; c < K; ++c) score[c] = cosine(f, oracle_features(world, world.class_mean(c)));
    } else {
        const Vec home = world.class_mean(y_factual);
        for (int c = 0; c < K; ++c) score[c] = -(world.class_mean(c) - home).norm();
    }
    return pick_top_k(rank_classes(score, y_factual), k, seed);
}

Vec adversarial_baseline(const Vec& x_factual, int y_target, const Classifier& classifier,
                         const AdversarialOptions& options) {
    detail::require(options.budget_l2 >= 0.0, "adversarial_baseline: budget must be >= 0");
    detail::require(options.steps >= 0 && options.step_size >= 0.0, "adversarial_baseline: bad step settings");
    Vec x = x_factual;
    if (options.budget_l2 == 0.0) return x;
    for (int s = 0; s < options.steps; ++s) {
        if (options.stop_on_flip && predict(classifier, x) == y_target) break;
        const Vec g = input_grad(classifier, x, y_target);
        const double gn = g.norm();
        if (gn == 0.0) break;
        x -= options.step_size * g / gn;
        const Vec d = x - x_factual;
        const double dn = d.norm();
        if (dn > options.budget_l2) x = x_factual + d * (options.budget_l2 / dn);
    }
    return x;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("CFDIFF_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_index = n;
    std::exception_ptr failure;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace cfdiff
