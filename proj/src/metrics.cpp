#include "cfdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace cfdiff {

namespace {

// Symmetric PSD square root with negative eigenvalues clamped to zero.
Mat psd_sqrt(const Mat& m) {
    const Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    if (es.info() != Eigen::Success) throw NumericalFailure("frechet: eigen-decomposition failed");
    const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

std::vector<Vec> every_other(const std::vector<Vec>& v, std::size_t first) {
    std::vector<Vec> out;
    for (std::size_t i = first; i < v.size(); i += 2) out.push_back(v[i]);
    return out;
}

// All ordered-pair deltas of every attribute: out[a] has N(N-1) entries.
std::vector<std::vector<double>> attribute_deltas(const std::vector<Vec>& probs, int attributes) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(attributes));
    for (std::size_t i = 0; i < probs.size(); ++i) {
        for (std::size_t j = 0; j < probs.size(); ++j) {
            if (i == j) continue;
            for (int a = 0; a < attributes; ++a) out[a].push_back(probs[i][a] - probs[j][a]);
        }
    }
    return out;
}

bool is_constant(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Attribute probabilities live in [0,1]; deltas below this are rounding noise
// from the responsibility average, not signal.
constexpr double kFlatDelta = 1e-12;

bool is_flat(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return std::abs(x - v.front()) <= kFlatDelta; });
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

double flip_ratio(const std::vector<CounterfactualRecord>& records, const Classifier& classifier) {
    detail::require(!records.empty(), "flip_ratio: no records");
    std::size_t hits = 0;
    for (const auto& r : records) hits += predict(classifier, r.x_counterfactual) == r.y_target ? 1 : 0;
    return double(hits) / double(records.size());
}

CoutCurve cout_curve(const Vec& x_factual, const Vec& x_counterfactual, const Classifier& classifier, int y_factual,
                     int y_target, int n_steps) {
    detail::require(n_steps >= 1, "cout: n_steps must be >= 1");
    detail::require(x_factual.size() == x_counterfactual.size(), "cout: dimension mismatch");
    const Eigen::Index d = x_factual.size();

    Vec mask = (x_factual - x_counterfactual).cwiseAbs();
    const double lo = mask.minCoeff();
    const double hi = mask.maxCoeff();
    mask = hi > lo ? Vec((mask.array() - lo) / (hi - lo)) : Vec::Zero(d);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return mask[a] > mask[b]; });

    CoutCurve curve;
    Vec x = x_factual;
    auto record = [&] {
        const Vec p = probabilities(classifier, x);
        curve.probs_target.push_back(p[y_target]);
        curve.probs_factual.push_back(p[y_factual]);
    };
    record();
    const auto T = static_cast<std::size_t>(n_steps);
    const auto D = static_cast<std::size_t>(d);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = t * D / T; k < (t + 1) * D / T; ++k) x[order[k]] = x_counterfactual[order[k]];
        record();
    }
    for (std::size_t t = 0; t < T; ++t) {
        curve.aupc_target += 0.5 * (curve.probs_target[t] + curve.probs_target[t + 1]);
        curve.aupc_factual += 0.5 * (curve.probs_factual[t] + curve.probs_factual[t + 1]);
    }
    curve.aupc_target /= double(T);
    curve.aupc_factual /= double(T);
    curve.value = curve.aupc_target - curve.aupc_factual;
    return curve;
}

double cout(const Vec& x_factual, const Vec& x_counterfactual, const Classifier& classifier, int y_factual,
            int y_target, int n_steps) {
    return cout_curve(x_factual, x_counterfactual, classifier, y_factual, y_target, n_steps).value;
}

double lp_norm(const Vec& x_factual, const Vec& x_counterfactual, int p) {
    detail::require(x_factual.size() == x_counterfactual.size(), "lp_norm: dimension mismatch");
    const Vec d = x_factual - x_counterfactual;
    if (p == 1) return d.lpNorm<1>();
    if (p == 2) return d.norm();
    throw std::invalid_argument("lp_norm: p must be 1 or 2");
}

double cosine_similarity(const Vec& a, const Vec& b) {
    detail::require(a.size() == b.size(), "cosine_similarity: dimension mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_similarity: zero feature vector");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double feature_similarity(const Vec& x_factual, const Vec& x_counterfactual,
                          const std::function<Vec(const Vec&)>& feature_fn) {
    return cosine_similarity(feature_fn(x_factual), feature_fn(x_counterfactual));
}

Moments fit_moments(const std::vector<Vec>& samples) {
    detail::require(samples.size() >= 2, "fit_moments: need at least two samples");
    const Eigen::Index d = samples.front().size();
    Mat X(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        detail::require_dim(samples[i], d, "fit_moments sample");
        X.row(static_cast<Eigen::Index>(i)) = samples[i].transpose();
    }
    Moments m;
    m.mean = X.colwise().mean().transpose();
    const Mat centered = X.rowwise() - m.mean.transpose();
    m.cov = centered.transpose() * centered / double(samples.size() - 1);
    return m;
}

double frechet_from_moments(const Moments& a, const Moments& b) {
    detail::require(a.mean.size() == b.mean.size(), "frechet: dimension mismatch");
    const Mat s1 = psd_sqrt(a.cov);
    const Mat inner = s1 * b.cov * s1;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalFailure("frechet: eigen-decomposition failed");
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    return std::max(d, 0.0);
}

double frechet(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    detail::require(!a.empty() && !b.empty(), "frechet: empty sample set");
    const auto need = static_cast<std::size_t>(a.front().size()) + 1;
    detail::require(a.size() >= need && b.size() >= need, "frechet: each set needs at least dim + 1 samples");
    return frechet_from_moments(fit_moments(a), fit_moments(b));
}

double split_frechet(const std::vector<Vec>& factuals, const std::vector<Vec>& counterfactuals) {
    detail::require(factuals.size() == counterfactuals.size(), "split_frechet: sets differ in size");
    const auto f_even = every_other(factuals, 0);
    const auto f_odd = every_other(factuals, 1);
    const auto cf_even = every_other(counterfactuals, 0);
    const auto cf_odd = every_other(counterfactuals, 1);
    return 0.5 * (frechet(cf_even, f_odd) + frechet(cf_odd, f_even));
}

double mnac(const PointPairs& pairs, const MixtureWorld& world, double beta) {
    detail::require(!pairs.empty(), "mnac: no pairs");
    detail::require(world.attribute_count() >= 1, "mnac: world has no attributes");
    double total = 0.0;
    for (const auto& [xf, xcf] : pairs) {
        const Vec pf = attribute_probs(world, xf);
        const Vec pcf = attribute_probs(world, xcf);
        for (Eigen::Index a = 0; a < pf.size(); ++a) total += ((pf[a] > beta) != (pcf[a] > beta)) ? 1.0 : 0.0;
    }
    return total / double(pairs.size());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    detail::require(a.size() == b.size() && !a.empty(), "pearson: length mismatch");
    if (is_constant(a) || is_constant(b)) return 0.0;
    const double n = double(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double cd(const PointPairs& pairs, const MixtureWorld& world, int q) {
    detail::require(pairs.size() >= 3, "cd: need at least three pairs");
    const int A = world.attribute_count();
    detail::require(A >= 2, "cd: world needs at least two attributes");
    detail::require(q >= 0 && q < A, "cd: invalid query attribute");

    std::vector<Vec> pf, pcf;
    for (const auto& [xf, xcf] : pairs) {
        pf.push_back(attribute_probs(world, xf));
        pcf.push_back(attribute_probs(world, xcf));
    }
    const auto df = attribute_deltas(pf, A);
    const auto dcf = attribute_deltas(pcf, A);
    bool informative = false;
    for (int a = 0; a < A; ++a) informative = informative || !is_flat(df[a]) || !is_flat(dcf[a]);
    if (!informative) throw DegenerateInputError("cd: every attribute delta is constant");
    auto corr = [](const std::vector<std::vector<double>>& d, int q, int a) {
        return is_flat(d[q]) || is_flat(d[a]) ? 0.0 : pearson(d[q], d[a]);
    };

    // One correlation per attribute over all pairs, so the sample mean of the
    // per-sample sums is that single sum.
    double total = 0.0;
    for (int a = 0; a < A; ++a) total += std::abs(corr(dcf, q, a) - corr(df, q, a));
    return total;
}

MetricReport evaluate(std::vector<CounterfactualRecord>& records, const MixtureWorld& world,
                      const AffineCodec& codec, const Classifier& classifier, const EvaluationOptions& options) {
    detail::require(!records.empty(), "evaluate: no records");
    const int steps = options.cout_steps > 0 ? options.cout_steps : codec.ambient_dim();
    auto features = [&](const Vec& x) { return oracle_features(world, codec.encode(x)); };

    MetricReport rep;
    rep.n = records.size();
    std::vector<Vec> fs, cfs;
    PointPairs latent_pairs;
    for (auto& r : records) {
        SampleMetrics& m = r.metrics;
        m.flipped = predict(classifier, r.x_counterfactual) == r.y_target;
        m.cout = cout(r.x_factual, r.x_counterfactual, classifier, r.y_factual, r.y_target, steps);
        m.l1 = lp_norm(r.x_factual, r.x_counterfactual, 1);
        m.l2 = lp_norm(r.x_factual, r.x_counterfactual, 2);
        m.feat_sim = feature_similarity(r.x_factual, r.x_counterfactual, features);
        const Vec zcf = codec.encode(r.x_counterfactual);
        m.bayes_target_posterior = bayes_class_posterior(world, zcf, std::nullopt, r.y_target);

        rep.flip_ratio += *m.flipped ? 1.0 : 0.0;
        rep.cout_mean += *m.cout;
        rep.l1_mean += *m.l1;
        rep.l2_mean += *m.l2;
        rep.feat_sim_mean += *m.feat_sim;

        if (options.frechet_space == FrechetSpace::Ambient) {
            fs.push_back(r.x_factual);
            cfs.push_back(r.x_counterfactual);
        } else {
            fs.push_back(features(r.x_factual));
            cfs.push_back(features(r.x_counterfactual));
        }
        latent_pairs.emplace_back(codec.encode(r.x_factual), zcf);
    }
    const double n = double(records.size());
    rep.flip_ratio /= n;
    rep.cout_mean /= n;
    rep.l1_mean /= n;
    rep.l2_mean /= n;
    rep.feat_sim_mean /= n;

    const auto dim = static_cast<std::size_t>(fs.front().size());
    if (fs.size() >= dim + 1) rep.frechet = frechet(fs, cfs);
    if (fs.size() / 2 >= dim + 1) rep.split_frechet = split_frechet(fs, cfs);
    if (world.attribute_count() >= 1) rep.mnac_mean = mnac(latent_pairs, world, options.beta);
    if (latent_pairs.size() >= 3 && world.attribute_count() >= 2) {
        try {
            rep.cd_mean = cd(latent_pairs, world, options.cd_query);
        } catch (const DegenerateInputError&) {
            rep.cd_mean.reset();
        }
    }
    return rep;
}

std::string metric_csv_header() {
    return "n,flip_ratio,cout_mean,l1_mean,l2_mean,feat_sim_mean,frechet,split_frechet,mnac_mean,cd_mean";
}

std::string metric_csv_row(const MetricReport& r) {
    return std::to_string(r.n) + "," + fmt(r.flip_ratio) + "," + fmt(r.cout_mean) + "," + fmt(r.l1_mean) + "," +
           fmt(r.l2_mean) + "," + fmt(r.feat_sim_mean) + "," + fmt(r.frechet) + "," + fmt(r.split_frechet) + "," +
           fmt(r.mnac_mean) + "," + fmt(r.cd_mean);
}

}  // namespace cfdiff
