#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfdiff/classifiers.hpp"
#include "cfdiff/engine.hpp"
#include "cfdiff/latent.hpp"
#include "cfdiff/world.hpp"

namespace cfdiff {

using PointPairs = std::vector<std::pair<Vec, Vec>>;  // (factual, counterfactual)

/// Fraction of records whose counterfactual is classified as the target.
double flip_ratio(const std::vector<CounterfactualRecord>& records, const Classifier& classifier);

/// Insertion curve from x_F to x_CF. probs_target[t] and probs_factual[t] are
/// softmax values at x^(t), t = 0..n_steps.
struct CoutCurve {
    std::vector<double> probs_target;
    std::vector<double> probs_factual;
    double aupc_target = 0.0;
    double aupc_factual = 0.0;
    double value = 0.0;  // aupc_target - aupc_factual
};

CoutCurve cout_curve(const Vec& x_factual, const Vec& x_counterfactual, const Classifier& classifier, int y_factual,
                     int y_target, int n_steps);
double cout(const Vec& x_factual, const Vec& x_counterfactual, const Classifier& classifier, int y_factual,
            int y_target, int n_steps);

/// p is 1 or 2.
double lp_norm(const Vec& x_factual, const Vec& x_counterfactual, int p);

double cosine_similarity(const Vec& a, const Vec& b);
double feature_similarity(const Vec& x_factual, const Vec& x_counterfactual,
                          const std::function<Vec(const Vec&)>& feature_fn);

struct Moments {
    Vec mean;
    Mat cov;  // unbiased
};

Moments fit_moments(const std::vector<Vec>& samples);
double frechet_from_moments(const Moments& a, const Moments& b);
/// Both sets need at least dim + 1 samples.
double frechet(const std::vector<Vec>& a, const std::vector<Vec>& b);
/// Even/odd split: mean of frechet(CF_even, F_odd) and frechet(CF_odd, F_even).
double split_frechet(const std::vector<Vec>& factuals, const std::vector<Vec>& counterfactuals);

/// Pairs are world-space points. Mean count of attributes whose thresholded
/// oracle prediction changes.
double mnac(const PointPairs& pairs, const MixtureWorld& world, double beta = 0.5);

/// Pearson correlation; 0 when either side is constant.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Correlation difference for query attribute q over world-space pairs.
double cd(const PointPairs& pairs, const MixtureWorld& world, int q);

struct MetricReport {
    std::size_t n = 0;
    double flip_ratio = 0.0;
    double cout_mean = 0.0;
    double l1_mean = 0.0;
    double l2_mean = 0.0;
    double feat_sim_mean = 0.0;
    std::optional<double> frechet;        // factuals vs counterfactuals
    std::optional<double> split_frechet;
    std::optional<double> mnac_mean;
    std::optional<double> cd_mean;
};

enum class FrechetSpace { Ambient, Features };

struct EvaluationOptions {
    int cout_steps = 0;  // 0 means one step per ambient coordinate
    double beta = 0.5;
    int cd_query = 0;
    FrechetSpace frechet_space = FrechetSpace::Ambient;
};

/// Fills each record's metric slots and returns the aggregate report.
/// Set-level metrics are left empty when the sample count is too small or
/// the attribute deltas are degenerate.
MetricReport evaluate(std::vector<CounterfactualRecord>& records, const MixtureWorld& world,
                      const AffineCodec& codec, const Classifier& classifier, const EvaluationOptions& options);

/// Fixed column order: n, flip_ratio, cout_mean, l1_mean, l2_mean,
/// feat_sim_mean, frechet, split_frechet, mnac_mean, cd_mean.
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& report);

}  // namespace cfdiff
