#include "cfdiff/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cfdiff {

namespace {

constexpr double kZeroNorm = 1e-12;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Direction of v with an inf-norm prescale, so one-element blocks map to
// exactly +1 or -1.
Vec unit_direction(const Vec& v) {
    const double scale = v.cwiseAbs().maxCoeff();
    Vec u = v / scale;
    return u / u.norm();
}

// Kahan's angle formula on pre-normalized directions; exact at 0 and 180.
double angle_rad_nonzero(const Vec& a, const Vec& b) {
    const Vec ua = unit_direction(a);
    const Vec ub = unit_direction(b);
    return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm());
}

void require_open_noise(double alpha_bar, const char* where) {
    if (!(alpha_bar > 0.0 && alpha_bar < 1.0)) {
        throw std::invalid_argument(std::string(where) + ": alpha_bar must lie in (0,1)");
    }
}

// Latent gradient of an ambient objective evaluated at D(x0_hat), chained
// through x0_hat(z) and scaled by sqrt(1 - alpha_bar).
Vec chain_to_latent(const Vec& g_ambient, const ScoreInputs& in, const AffineCodec& codec, const MixtureWorld& world,
                    bool grad_through_score) {
    const Vec g_x0 = codec.pullback_grad(g_ambient);
    const double sa = std::sqrt(in.alpha_bar);
    const double sn = std::sqrt(1.0 - in.alpha_bar);
    Vec g_z;
    if (grad_through_score) {
        // d x0_hat / dz = (I - sn * J_eps) / sa, with J_eps symmetric.
        const Mat J = epsilon_uncond_jacobian(world, in.z_t, in.alpha_bar);
        g_z = (g_x0 - sn * (J * g_x0)) / sa;
    } else {
        g_z = g_x0 / sa;
    }
    return sn * g_z;
}

}  // namespace

std::string to_string(DistanceKind kind) { return kind == DistanceKind::L1 ? "L1" : "L2"; }

std::string to_string(GuidanceMode mode) {
    switch (mode) {
        case GuidanceMode::Consensus: return "consensus";
        case GuidanceMode::None: return "none";
        case GuidanceMode::Cone: return "cone";
        case GuidanceMode::UncondOnly: return "uncond-only";
    }
    return "consensus";
}

DistanceKind distance_kind_from_string(const std::string& name) {
    if (name == "L1") return DistanceKind::L1;
    if (name == "L2") return DistanceKind::L2;
    throw std::invalid_argument("unknown distance '" + name + "'");
}

GuidanceMode guidance_mode_from_string(const std::string& name) {
    if (name == "consensus") return GuidanceMode::Consensus;
    if (name == "none") return GuidanceMode::None;
    if (name == "cone") return GuidanceMode::Cone;
    if (name == "uncond-only") return GuidanceMode::UncondOnly;
    throw std::invalid_argument("unknown guidance mode '" + name + "'");
}

void GuidanceConfig::validate() const {
    detail::require(eta >= 0.0, "guidance: eta must be >= 0");
    detail::require(lambda_c >= 0.0 && lambda_d >= 0.0, "guidance: lambda_c and lambda_d must be >= 0");
    detail::require(gamma_deg >= 0.0 && gamma_deg <= 180.0, "guidance: gamma_deg must lie in [0,180]");
    detail::require(block_size >= 1, "guidance: block_size must be >= 1");
    detail::require(cone_alpha_deg >= 0.0 && cone_alpha_deg <= 180.0, "guidance: cone_alpha_deg must lie in [0,180]");
}

Vec GuidanceConfig::overwrite_vector(Eigen::Index dim) const {
    if (overwrite.empty()) return Vec::Zero(dim);
    if (overwrite.size() == 1) return Vec::Constant(dim, overwrite.front());
    detail::require(static_cast<Eigen::Index>(overwrite.size()) == dim,
                    "guidance: overwrite length must be 1 or the latent dimension");
    return Eigen::Map<const Vec>(overwrite.data(), dim);
}

const std::map<std::string, GuidancePreset>& guidance_presets() {
    static const std::map<std::string, GuidancePreset> presets = [] {
        std::map<std::string, GuidancePreset> out;
        auto row = [&](const std::string& name, double gamma, int start, double lc, double ld) {
            GuidancePreset p;
            p.name = name;
            p.config.gamma_deg = gamma;
            p.config.lambda_c = lc;
            p.config.lambda_d = ld;
            p.start_timestep = start;
            p.t_start_fraction = start / 500.0;
            out.emplace(name, p);
        };
        row("desk", 45.0, 250, 3.0, 1.0);
        row("imagenet-cls", 45.0, 191, 2.3, 0.3);
        row("imagenet-txt", 50.0, 191, 3.95, 1.2);
        row("celeba-hq-txt", 55.0, 200, 4.0, 3.3);
        row("flowers-txt", 45.0, 250, 3.4, 1.2);
        row("oxford-pets-txt", 45.0, 191, 4.2, 2.4);
        return out;
    }();
    return presets;
}

const GuidancePreset& guidance_preset(const std::string& name) {
    const auto& all = guidance_presets();
    const auto it = all.find(name);
    if (it == all.end()) throw std::invalid_argument("unknown guidance preset '" + name + "'");
    return it->second;
}

Vec predict_x0(const Vec& z_t, const Vec& eps, double alpha_bar) {
    detail::require(alpha_bar > 0.0 && alpha_bar <= 1.0, "predict_x0: alpha_bar must lie in (0,1]");
    detail::require_dim(eps, z_t.size(), "predict_x0 eps");
    return (z_t - std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha_bar);
}

Vec cls_score(const ScoreInputs& in, int c, const Classifier& classifier, const AffineCodec& codec,
              const MixtureWorld& world, bool grad_through_score) {
    require_open_noise(in.alpha_bar, "cls_score");
    const Vec x0 = codec.decode(predict_x0(in.z_t, in.eps_uc, in.alpha_bar));
    return chain_to_latent(input_grad(classifier, x0, c), in, codec, world, grad_through_score);
}

Vec cls_score(const Vec& z_t, double alpha_bar, int c, const Classifier& classifier, const AffineCodec& codec,
              const MixtureWorld& world, bool grad_through_score) {
    const Vec eps_uc = epsilon_uncond(world, z_t, alpha_bar);
    return cls_score(ScoreInputs{z_t, eps_uc, alpha_bar}, c, classifier, codec, world, grad_through_score);
}

Vec dist_score(const ScoreInputs& in, const Vec& x_factual, const AffineCodec& codec, const MixtureWorld& world,
               DistanceKind distance, bool grad_through_score) {
    require_open_noise(in.alpha_bar, "dist_score");
    detail::require_dim(x_factual, codec.ambient_dim(), "dist_score factual");
    const Vec diff = codec.decode(predict_x0(in.z_t, in.eps_uc, in.alpha_bar)) - x_factual;
    Vec g;
    if (distance == DistanceKind::L1) {
        g = diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
    } else {
        g = diff / std::max(diff.norm(), kZeroNorm);
    }
    return chain_to_latent(g, in, codec, world, grad_through_score);
}

Vec dist_score(const Vec& z_t, double alpha_bar, const Vec& x_factual, const AffineCodec& codec,
               const MixtureWorld& world, DistanceKind distance, bool grad_through_score) {
    const Vec eps_uc = epsilon_uncond(world, z_t, alpha_bar);
    return dist_score(ScoreInputs{z_t, eps_uc, alpha_bar}, x_factual, codec, world, distance, grad_through_score);
}

ConsensusResult consensus_filter(const Vec& cls, const Vec& implicit, double gamma_deg, int block_size,
                                 const Vec& overwrite) {
    detail::require(cls.size() == implicit.size(), "consensus_filter: cls and implicit differ in length");
    detail::require(cls.size() == overwrite.size(), "consensus_filter: overwrite length mismatch");
    detail::require(block_size >= 1, "consensus_filter: block_size must be >= 1");
    const Eigen::Index n = cls.size();
    ConsensusResult out;
    out.values = cls;
    for (Eigen::Index start = 0; start < n; start += block_size) {
        const Eigen::Index len = std::min<Eigen::Index>(block_size, n - start);
        const auto u = cls.segment(start, len);
        const auto v = implicit.segment(start, len);
        ++out.total_blocks;
        bool keep = true;
        if (u.cwiseAbs().maxCoeff() == 0.0 || gamma_deg >= 180.0) {
            keep = true;
        } else if (v.cwiseAbs().maxCoeff() == 0.0) {
            keep = false;
        } else {
            keep = angle_rad_nonzero(u, v) * kRadToDeg <= gamma_deg;
        }
        if (keep) {
            ++out.kept_blocks;
        } else {
            out.values.segment(start, len) = overwrite.segment(start, len);
        }
    }
    return out;
}

Vec assemble_epsilon(const Vec& eps_uc, const Vec& eps_c, const Vec& consensus, const Vec& dist, double eta,
                     double lambda_c, double lambda_d) {
    const Eigen::Index n = eps_uc.size();
    detail::require(eps_c.size() == n && consensus.size() == n && dist.size() == n,
                    "assemble_epsilon: vectors differ in length");
    Vec direction = Vec::Zero(n);
    const double cn = consensus.norm();
    const double dn = dist.norm();
    if (cn >= kZeroNorm) direction += lambda_c * consensus / cn;
    if (dn >= kZeroNorm) direction += lambda_d * dist / dn;
    return eps_uc + eta * direction * eps_c.norm();
}

double angle_deg(const Vec& a, const Vec& b) {
    detail::require(a.size() == b.size(), "angle_deg: length mismatch");
    if (a.cwiseAbs().maxCoeff() == 0.0 || b.cwiseAbs().maxCoeff() == 0.0) {
        throw DegenerateInputError("angle_deg: zero vector");
    }
    return angle_rad_nonzero(a, b) * kRadToDeg;
}

Vec cone_project(const Vec& v, const Vec& w, double alpha_deg, bool aligned_returns_w) {
    detail::require(v.size() == w.size(), "cone_project: length mismatch");
    if (std::abs(v.norm() - 1.0) > 1e-8 || std::abs(w.norm() - 1.0) > 1e-8) {
        throw std::invalid_argument("cone_project: v and w must be unit vectors");
    }
    const double alpha = alpha_deg / kRadToDeg;
    if (angle_deg(w, v) <= alpha_deg) return aligned_returns_w ? w : v;
    const Vec perp = w - (w.dot(v) / v.dot(v)) * v;
    const double pn = perp.norm();
    if (pn < kZeroNorm) throw DegenerateInputError("cone_project: w is collinear with v outside the cone");
    const Vec u = std::sin(alpha) * perp / pn + std::cos(alpha) * v / v.norm();
    return u.dot(w) * u;
}

AngleStats angle_stats(const std::vector<std::pair<Vec, Vec>>& pairs, double threshold_deg) {
    detail::require(!pairs.empty(), "angle_stats: no pairs");
    AngleStats out;
    out.threshold_deg = threshold_deg;
    out.histogram.assign(kAngleBins, 0);
    std::size_t above = 0;
    for (const auto& [a, b] : pairs) {
        detail::require(a.size() == b.size(), "angle_stats: pair dimension mismatch");
        if (a.cwiseAbs().maxCoeff() == 0.0 || b.cwiseAbs().maxCoeff() == 0.0) {
            ++out.degenerate;
            continue;
        }
        const double deg = angle_rad_nonzero(a, b) * kRadToDeg;
        out.angles.push_back(deg);
        const int bin = std::clamp(static_cast<int>(deg / 5.0), 0, kAngleBins - 1);
        ++out.histogram[static_cast<std::size_t>(bin)];
        if (deg > threshold_deg) ++above;
    }
    out.fraction_above = out.angles.empty() ? 0.0 : double(above) / double(out.angles.size());
    return out;
}

}  // namespace cfdiff
