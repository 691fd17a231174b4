#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfdiff/classifiers.hpp"
#include "cfdiff/latent.hpp"
#include "cfdiff/types.hpp"
#include "cfdiff/world.hpp"

namespace cfdiff {

enum class DistanceKind { L1, L2 };

/// consensus: angular filter against the implicit classifier.
/// none: classifier score used unfiltered.
/// cone: classifier score projected toward the Bayes-oracle gradient.
/// uncond_only: no guidance at all.
enum class GuidanceMode { Consensus, None, Cone, UncondOnly };

std::string to_string(DistanceKind kind);
std::string to_string(GuidanceMode mode);
DistanceKind distance_kind_from_string(const std::string& name);
GuidanceMode guidance_mode_from_string(const std::string& name);

struct GuidanceConfig {
    double eta = 2.0;
    double lambda_c = 3.0;
    double lambda_d = 1.0;
    double gamma_deg = 45.0;
    int block_size = 1;
    /// Per-coordinate overwrite values; empty means zeros, one entry broadcasts.
    std::vector<double> overwrite;
    DistanceKind distance = DistanceKind::L1;
    GuidanceMode mode = GuidanceMode::Consensus;
    double cone_alpha_deg = 30.0;
    bool cone_aligned_returns_w = false;
    bool grad_through_score = false;

    void validate() const;
    Vec overwrite_vector(Eigen::Index dim) const;
};

/// A named hyperparameter row. t_start_fraction is the start step expressed
/// as a fraction of a 500-step respaced ladder.
struct GuidancePreset {
    std::string name;
    GuidanceConfig config;
    int start_timestep = 0;
    double t_start_fraction = 0.5;
};

const std::map<std::string, GuidancePreset>& guidance_presets();
const GuidancePreset& guidance_preset(const std::string& name);

/// (z_t - sqrt(1 - alpha_bar) * eps) / sqrt(alpha_bar)
Vec predict_x0(const Vec& z_t, const Vec& eps, double alpha_bar);

/// Everything a score term needs about the current state.
struct ScoreInputs {
    const Vec& z_t;
    const Vec& eps_uc;  // epsilon_uncond(world, z_t, alpha_bar)
    double alpha_bar;
};

/// sqrt(1 - alpha_bar) * grad_z L(f(D(x0_hat)), c), x0_hat predicted with eps_uc.
/// Without grad_through_score, eps_uc is held fixed when differentiating x0_hat.
Vec cls_score(const ScoreInputs& in, int c, const Classifier& classifier, const AffineCodec& codec,
              const MixtureWorld& world, bool grad_through_score = false);
Vec cls_score(const Vec& z_t, double alpha_bar, int c, const Classifier& classifier, const AffineCodec& codec,
              const MixtureWorld& world, bool grad_through_score = false);

/// sqrt(1 - alpha_bar) * grad_z d(D(x0_hat), x_F); L1 uses sign with sign(0) = 0.
Vec dist_score(const ScoreInputs& in, const Vec& x_factual, const AffineCodec& codec, const MixtureWorld& world,
               DistanceKind distance, bool grad_through_score = false);
Vec dist_score(const Vec& z_t, double alpha_bar, const Vec& x_factual, const AffineCodec& codec,
               const MixtureWorld& world, DistanceKind distance, bool grad_through_score = false);

struct ConsensusResult {
    Vec values;
    int kept_blocks = 0;
    int total_blocks = 0;

    double pass_fraction() const { return total_blocks == 0 ? 1.0 : double(kept_blocks) / double(total_blocks); }
};

/// Keeps a block of `cls` where its angle to the same block of `implicit` is
/// at most gamma_deg, otherwise writes the overwrite block. Zero cls blocks
/// stay zero; a zero implicit block counts as misaligned unless gamma >= 180.
ConsensusResult consensus_filter(const Vec& cls, const Vec& implicit, double gamma_deg, int block_size,
                                 const Vec& overwrite);

/// eps_uc + eta * (lambda_c * unit(consensus) + lambda_d * unit(dist)) * |eps_c|.
/// Terms with norm below 1e-12 contribute nothing.
Vec assemble_epsilon(const Vec& eps_uc, const Vec& eps_c, const Vec& consensus, const Vec& dist, double eta,
                     double lambda_c, double lambda_d);

/// Cone projection of unit vector w around unit vector v with half-angle
/// alpha_deg. Inside the cone the result is v (or w when aligned_returns_w).
Vec cone_project(const Vec& v, const Vec& w, double alpha_deg, bool aligned_returns_w = false);

double angle_deg(const Vec& a, const Vec& b);

struct AngleStats {
    std::vector<double> angles;     // degrees, degenerate pairs excluded
    std::vector<std::size_t> histogram;  // 36 bins of 5 degrees over [0, 180]
    std::size_t degenerate = 0;
    double threshold_deg = 60.0;
    double fraction_above = 0.0;  // over non-degenerate pairs
};

constexpr int kAngleBins = 36;

AngleStats angle_stats(const std::vector<std::pair<Vec, Vec>>& pairs, double threshold_deg = 60.0);

}  // namespace cfdiff
