// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

#include "cfdiff/cli/commands.hpp"
#include "cfdiff/rng.hpp"

using namespace cfdiff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Vec central_diff(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2 * h);
    }
    return g;
}

double rel_err(const Vec& got, const Vec& ref) { return (got - ref).norm() / std::max(ref.norm(), 1e-12); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void set_threads(const char* value) {
    if (value) ::setenv("CFDIFF_THREADS", value, 1);
    else ::unsetenv("CFDIFF_THREADS");
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cfdiff_acceptance_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// 1
Outcome implicit_identity() {
    const MixtureWorld w = make_world_preset("triad");
    Rng rng(101);
    double worst = 0;
    const double levels[] = {0.9, 0.5, 0.1};
    for (int i = 0; i < 100; ++i) {
        const double ab = levels[i % 3];
        const Vec z = 3.0 * rng.normal_vec(w.latent_dim());
        const int c = static_cast<int>(rng.index(static_cast<std::size_t>(w.class_count())));
        const Vec ec = epsilon_cond(w, z, ab, c);
        const Vec resid = (ec - epsilon_uncond(w, z, ab)) + std::sqrt(1 - ab) * bayes_log_posterior_grad(w, z, ab, c);
        worst = std::max(worst, resid.norm() / (1 + ec.norm()));
    }
    return {worst <= 1e-6, fmt("max |residual|/(1+|eps_c|) = %.3g (tol 1e-6)", worst)};
}

// 2
Outcome gradient_fidelity() {
    struct Setup {
        std::string name;
        MixtureWorld world;
        AffineCodec codec;
    };
    std::vector<Setup> setups;
    setups.push_back({"triad/identity", make_world_preset("triad"), AffineCodec::identity(2)});
    setups.push_back({"hyper8/codec20", make_world_preset("hyper8"), AffineCodec::make(20, 16, 5)});

    double worst_input = 0, worst_dist = 0, worst_cls = 0;
    Rng rng(202);
    const double levels[] = {0.9, 0.5, 0.1};
    for (const auto& s : setups) {
        const int n = s.codec.ambient_dim();
        const int k = s.world.class_count();
        for (ModelType type : {ModelType::Linear, ModelType::Mlp}) {
            // Scale up the init so gradients are not vanishingly small.
            Classifier base = init_model(ModelSpec{type, n, k, 16, 7});
            Classifier::Model m = base.model();
            if (auto* lin = std::get_if<LinearSoftmax>(&m)) {
                lin->weights *= 8;
            } else {
                auto& mlp = std::get<Mlp1>(m);
                mlp.W1 *= 6;
                mlp.W2 *= 6;
            }
            const Classifier clf(m);
            for (int i = 0; i < 50; ++i) {
                const Vec x = 2.0 * rng.normal_vec(n);
                const int c = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
                const Vec fd = central_diff([&](const Vec& p) { return ce_loss(clf, p, c); }, x);
                worst_input = std::max(worst_input, rel_err(input_grad(clf, x, c), fd));
            }
            for (int i = 0; i < 50; ++i) {
                const double ab = levels[i % 3];
                const Vec z = 2.0 * rng.normal_vec(s.world.latent_dim());
                const int c = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
                const Vec eps = epsilon_uncond(s.world, z, ab);
                const double sa = std::sqrt(ab), sn = std::sqrt(1 - ab);
                auto x0 = [&](const Vec& zz) { return s.codec.decode((zz - sn * eps) / sa); };
                const Vec fd = sn * central_diff([&](const Vec& zz) { return ce_loss(clf, x0(zz), c); }, z);
                worst_cls = std::max(worst_cls, rel_err(cls_score(ScoreInputs{z, eps, ab}, c, clf, s.codec, s.world), fd));
            }
        }
        for (DistanceKind dk : {DistanceKind::L1, DistanceKind::L2}) {
            for (bool through : {false, true}) {
                for (int i = 0; i < 50; ++i) {
                    const double ab = levels[i % 3];
                    const Vec z = 2.0 * rng.normal_vec(s.world.latent_dim());
                    const Vec xf = s.codec.decode(rng.normal_vec(s.world.latent_dim()));
                    const Vec eps = epsilon_uncond(s.world, z, ab);
                    const double sa = std::sqrt(ab), sn = std::sqrt(1 - ab);
                    auto dist = [&](const Vec& zz) {
                        const Vec e = through ? epsilon_uncond(s.world, zz, ab) : eps;
                        const Vec d = s.codec.decode((zz - sn * e) / sa) - xf;
                        return dk == DistanceKind::L1 ? d.lpNorm<1>() : d.norm();
                    };
                    const Vec fd = sn * central_diff(dist, z);
                    const Vec got = dist_score(ScoreInputs{z, eps, ab}, xf, s.codec, s.world, dk, through);
                    worst_dist = std::max(worst_dist, rel_err(got, fd));
                }
            }
        }
    }
    const double tol = 1e-4;
    return {worst_input <= tol && worst_dist <= tol && worst_cls <= tol,
            fmt("max rel err input_grad %.3g, dist_score %.3g, cls_score %.3g (tol 1e-4)", worst_input, worst_dist,
                worst_cls)};
}

// 3
Outcome clean_inversion() {
    Rng rng(303);
    double worst = 0;
    std::size_t checked = 0;
    for (ScheduleKind kind : {ScheduleKind::LinearBeta, ScheduleKind::Cosine}) {
        for (int factor : {1, 2}) {
            const NoiseSchedule s = respace(make_schedule(kind, 1000), factor);
            for (std::size_t pos = 0; pos < s.ladder_size(); ++pos) {
                const double ab = s.alpha_bar_at(pos);
                const Vec z0 = rng.normal_vec(4), eps = rng.normal_vec(4);
                const Vec zt = std::sqrt(ab) * z0 + std::sqrt(1 - ab) * eps;
                worst = std::max(worst, (predict_x0(zt, eps, ab) - z0).cwiseAbs().maxCoeff());
                ++checked;
            }
        }
    }
    return {worst <= 1e-10, fmt("max |z0_hat - z0| = %.3g over %.0f ladder positions (tol 1e-10)", worst, double(checked))};
}

// 4
Outcome manifold_regularization() {
    cli::ExperimentConfig cfg;
    cfg.schedule.respace_factor = 20;
    cfg.guidance.mode = GuidanceMode::UncondOnly;
    cfg.t_start_fraction = 1.0;
    cfg.n = 1000;
    cfg.seed = 1;
    const cli::Experiment exp = cli::prepare(cfg);
    const auto recs = cli::run_generation(exp, cfg.guidance, false);
    std::vector<Vec> gen;
    for (const auto& r : recs) gen.push_back(r.x_counterfactual);
    const LabeledSamples fresh = sample(exp.world, std::nullopt, 1000, derive_seed(404, 0));
    const double fd = frechet(gen, fresh.points);
    return {fd < 0.1, fmt("ladder %.0f steps, Frechet %.4g (tol < 0.1)", double(exp.schedule.ladder_size()), fd)};
}

// 5
Outcome validity() {
    cli::ExperimentConfig cfg;
    cfg.n = 200;
    const cli::Experiment exp = cli::prepare(cfg);
    const auto recs = cli::run_generation(exp, cfg.guidance, false);
    const double fr = flip_ratio(recs, exp.classifier);
    return {fr >= 0.9, fmt("flip ratio %.3f (tol >= 0.9)", fr)};
}

// 6
Outcome versus_adversarial() {
    cli::ExperimentConfig cfg;
    cfg.n = 200;
    cli::apply_classifier_preset(cfg.classifier, "overfit-mlp");
    const cli::Experiment exp = cli::prepare(cfg);
    const auto recs = cli::run_generation(exp, cfg.guidance, false);
    const double budget = 0.75 * (exp.world.class_mean(0) - exp.world.class_mean(1)).norm();

    std::vector<double> post_cf, post_adv;
    int flip_cf = 0, flip_adv = 0;
    for (const auto& r : recs) {
        if (predict(exp.classifier, r.x_counterfactual) == r.y_target) {
            ++flip_cf;
            post_cf.push_back(bayes_class_posterior(exp.world, exp.codec.encode(r.x_counterfactual), std::nullopt, r.y_target));
        }
        const Vec adv = adversarial_baseline(r.x_factual, r.y_target, exp.classifier,
                                             AdversarialOptions{200, 0.05, budget, true});
        if (predict(exp.classifier, adv) == r.y_target) {
            ++flip_adv;
            post_adv.push_back(bayes_class_posterior(exp.world, exp.codec.encode(adv), std::nullopt, r.y_target));
        }
    }
    const double fr_cf = flip_cf / 200.0, fr_adv = flip_adv / 200.0;
    const double m_cf = median(post_cf), m_adv = median(post_adv);
    const bool matched = std::abs(fr_cf - fr_adv) <= 0.05;
    return {matched && m_cf - m_adv >= 0.3,
            fmt("FR cf %.3f adv %.3f (match tol 0.05); median Bayes posterior cf %.4f adv %.4f (gap tol >= 0.3)", fr_cf,
                fr_adv, m_cf, m_adv)};
}

// 7
Outcome consensus_degeneracies() {
    cli::ExperimentConfig cfg;
    cfg.n = 50;
    const cli::Experiment exp = cli::prepare(cfg);
    GuidanceConfig wide = cfg.guidance;
    wide.gamma_deg = 180;
    GuidanceConfig none = cfg.guidance;
    none.mode = GuidanceMode::None;
    const auto a = cli::run_generation(exp, wide, false);
    const auto b = cli::run_generation(exp, none, false);
    bool identical = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        identical = identical && a[i].x_counterfactual.size() == b[i].x_counterfactual.size() &&
                    std::memcmp(a[i].x_counterfactual.data(), b[i].x_counterfactual.data(),
                                sizeof(double) * std::size_t(a[i].x_counterfactual.size())) == 0;
    }

    Rng rng(707);
    std::size_t mismatches = 0, cases = 0;
    for (int len = 1; len <= 16; ++len) {
        for (int trial = 0; trial < 200; ++trial) {
            Vec cls(len), imp(len), ow(len);
            for (int i = 0; i < len; ++i) {
                cls[i] = double(static_cast<int>(rng.index(5)) - 2);
                imp[i] = double(static_cast<int>(rng.index(5)) - 2);
                ow[i] = 100.0 + i;
            }
            const ConsensusResult got = consensus_filter(cls, imp, 0.0, 1, ow);
            int kept = 0;
            for (int i = 0; i < len; ++i) {
                const bool keep = cls[i] == 0 || cls[i] * imp[i] > 0;
                kept += keep;
                if (got.values[i] != (keep ? cls[i] : ow[i])) ++mismatches;
            }
            if (got.kept_blocks != kept) ++mismatches;
            ++cases;
        }
    }
    return {identical && mismatches == 0,
            std::string("gamma=180 vs none bit-identical: ") + (identical ? "yes" : "no") +
                fmt("; gamma=0 filter mismatches %.0f over %.0f vectors (tol 0)", double(mismatches), double(cases))};
}

// 8
Outcome cone_geometry() {
    Rng rng(808);
    double worst = 0;
    int projected = 0, aligned = 0, aligned_bad = 0;
    while (projected < 100) {
        const int d = 2 + static_cast<int>(rng.index(7));
        const Vec v = rng.normal_vec(d).normalized(), w = rng.normal_vec(d).normalized();
        const double alpha = rng.uniform(1.0, 89.0);
        const double vw = std::acos(std::clamp(v.dot(w), -1.0, 1.0)) * 180 / std::numbers::pi;
        const Vec p = cone_project(v, w, alpha);
        if (vw <= alpha) {
            ++aligned;
            aligned_bad += p != v;
            continue;
        }
        // The result is <u,w> u; since <u,v> = cos(alpha) > 0, sign(<p,v>) recovers u's orientation.
        const Vec u = (p.dot(v) >= 0 ? 1.0 : -1.0) * p.normalized();
        const double ang = std::acos(std::clamp(u.dot(v), -1.0, 1.0)) * 180 / std::numbers::pi;
        worst = std::max(worst, std::abs(ang - alpha));
        ++projected;
    }
    // Exercise the aligned branch deliberately as well.
    for (int i = 0; i < 100; ++i) {
        const Vec v = rng.normal_vec(4).normalized();
        const Vec w = (v + 0.05 * rng.normal_vec(4)).normalized();
        ++aligned;
        aligned_bad += cone_project(v, w, 30.0) != v;
    }
    return {worst <= 1e-6 && aligned_bad == 0,
            fmt("max |angle(u,v) - alpha| = %.3g deg over 100 projections (tol 1e-6); aligned branch not v: %.0f of %.0f",
                worst, double(aligned_bad), double(aligned))};
}

// 9
Outcome near_orthogonality() {
    Rng rng(909);
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < 1000; ++i) pairs.emplace_back(rng.normal_vec(10000), rng.normal_vec(10000));
    const double gaussian = angle_stats(pairs).fraction_above;

    const fs::path dir = scratch("angles");
    cli::ExperimentConfig cfg;
    cfg.world.preset = "hyper8";
    cfg.classifier.epochs = 0;
    cfg.out = dir.string();
    std::ostringstream log;
    cli::cmd_angles(cfg, log);
    const auto j = cli::read_json_file((dir / "angles.json").string());
    const double world = j.at("fraction_above").get<double>();
    return {gaussian >= 0.999 && world >= 0.99,
            fmt("Gaussian d=10000 fraction>60deg %.4f (tol >= 0.999); hyper8 untrained cmd_angles %.4f over %.0f pairs "
                "(tol >= 0.99)",
                gaussian, world, j.at("pairs").get<double>())};
}

// Independent COUT oracle: selection-sort insertion order, one coordinate per step.
double brute_cout(const Vec& xf, const Vec& xcf, const Classifier& clf, int yf, int yt) {
    const Eigen::Index d = xf.size();
    std::vector<bool> used(std::size_t(d), false);
    Vec x = xf;
    double at = 0, af = 0;
    Vec p = probabilities(clf, x);
    for (Eigen::Index step = 0; step < d; ++step) {
        Eigen::Index best = -1;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (!used[i] && (best < 0 || std::abs(xf[i] - xcf[i]) > std::abs(xf[best] - xcf[best]))) best = i;
        }
        used[best] = true;
        x[best] = xcf[best];
        const Vec q = probabilities(clf, x);
        at += (p[yt] + q[yt]) / 2;
        af += (p[yf] + q[yf]) / 2;
        p = q;
    }
    return (at - af) / double(d);
}

double naive_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = double(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
    double c = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        c += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va < 1e-300 || vb < 1e-300) return 0.0;
    return c / std::sqrt(va * vb);
}

double brute_cd(const PointPairs& pairs, const MixtureWorld& w, int q) {
    const int A = w.attribute_count();
    auto corr = [&](bool cf) {
        std::vector<std::vector<double>> delta(static_cast<std::size_t>(A));
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            for (std::size_t j = 0; j < pairs.size(); ++j) {
                if (i == j) continue;
                const Vec pi = attribute_probs(w, cf ? pairs[i].second : pairs[i].first);
                const Vec pj = attribute_probs(w, cf ? pairs[j].second : pairs[j].first);
                for (int a = 0; a < A; ++a) delta[std::size_t(a)].push_back(pi[a] - pj[a]);
            }
        }
        std::vector<double> c;
        for (int a = 0; a < A; ++a) c.push_back(naive_pearson(delta[std::size_t(q)], delta[std::size_t(a)]));
        return c;
    };
    const auto f = corr(false), g = corr(true);
    double s = 0;
    for (int a = 0; a < A; ++a) s += std::abs(g[std::size_t(a)] - f[std::size_t(a)]);
    return s;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

// 10
Outcome metric_oracles() {
    Rng rng(1010);
    double cout_err = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 1 + static_cast<int>(rng.index(5));
        Mat W = Mat::NullaryExpr(3, d, [&] { return rng.normal(); });
        const Classifier clf(LinearSoftmax{W, rng.normal_vec(3)});
        const Vec xf = rng.normal_vec(d), xcf = rng.normal_vec(d);
        cout_err = std::max(cout_err, std::abs(cout(xf, xcf, clf, 0, 2, d) - brute_cout(xf, xcf, clf, 0, 2)));
    }

    std::vector<Vec> s;
    for (int i = 0; i < 500; ++i) s.push_back(rng.normal_vec(3));
    const double self = frechet(s, s);
    std::vector<Vec> a, b;
    const Vec mu = v2(1.0, -2.0);
    for (int i = 0; i < 10000; ++i) {
        a.push_back(rng.normal_vec(2));
        b.push_back(rng.normal_vec(2) + mu);
    }
    const double shifted = frechet(a, b);
    const double shift_rel = std::abs(shifted - mu.squaredNorm()) / mu.squaredNorm();

    // Fixture world with hand-counted attribute flips.
    const MixtureWorld w({MixtureComponent{v2(4, 0), 0.5, 0.25, 0, {0.9, 0.1, 0.8}},
                          MixtureComponent{v2(-4, 0), 0.5, 0.25, 1, {0.1, 0.9, 0.7}},
                          MixtureComponent{v2(0, 4), 0.5, 0.25, 0, {0.8, 0.8, 0.2}},
                          MixtureComponent{v2(0, -4), 0.5, 0.25, 1, {0.2, 0.3, 0.3}}},
                         2);
    const Vec c0 = v2(4, 0), c1 = v2(-4, 0), c2 = v2(0, 4), c3 = v2(0, -4);
    const bool mnac_ok = mnac({{c0, c0}, {c1, c1}}, w) == 0.0 && mnac({{c0, c2}}, w) == 2.0 &&
                         mnac({{c0, c2}, {c0, c1}, {c2, c3}, {c1, c3}}, w) == 2.0 &&
                         mnac({{c0, c1}, {c0, c0}}, w) == 1.0;
    double cd_err = 0;
    for (int trial = 0; trial < 20; ++trial) {
        PointPairs pairs;
        for (int i = 0; i < 5; ++i) pairs.emplace_back(3 * rng.normal_vec(2), 3 * rng.normal_vec(2));
        const int q = static_cast<int>(rng.index(3));
        cd_err = std::max(cd_err, std::abs(cd(pairs, w, q) - brute_cd(pairs, w, q)));
    }
    const bool pass = cout_err <= 1e-12 && self <= 1e-8 && shift_rel <= 0.1 && mnac_ok && cd_err <= 1e-10;
    return {pass, fmt("COUT max err %.3g (tol 1e-12); frechet(S,S) %.3g (tol 1e-8); shift rel err %.3g (tol 0.1); "
                      "CD max err %.3g (tol 1e-10)",
                      cout_err, self, shift_rel, cd_err) +
                      (mnac_ok ? "; MNAC hand counts match" : "; MNAC hand counts differ")};
}

// 11
Outcome determinism() {
    auto run = [](const char* threads, const std::string& name) {
        set_threads(threads);
        const fs::path dir = scratch(name);
        cli::ExperimentConfig cfg;
        cfg.n = 64;
        cfg.seed = 11;
        cfg.record_trajectories = true;
        cfg.out = dir.string();
        std::ostringstream log;
        cli::cmd_generate(cfg, log);
        return slurp(dir / "records.jsonl") + slurp(dir / "trajectories.jsonl");
    };
    const char* saved = std::getenv("CFDIFF_THREADS");
    const std::string keep = saved ? saved : "";
    const std::string one = run("1", "det1");
    const std::string four = run("4", "det4");
    const std::string again = run("4", "det4b");
    set_threads(saved ? keep.c_str() : nullptr);
    const bool ok = !one.empty() && one == four && four == again;
    return {ok, std::string("records+trajectories byte-identical across CFDIFF_THREADS=1,4,4: ") + (ok ? "yes" : "no")};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;  // 0: no runtime bound
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "implicit-classifier identity", 5, implicit_identity},
        {2, "gradient fidelity", 10, gradient_fidelity},
        {3, "clean-point inversion", 0, clean_inversion},
        {4, "unconditional manifold regularization", 60, manifold_regularization},
        {5, "counterfactual validity", 120, validity},
        {6, "counterfactual vs adversarial", 120, versus_adversarial},
        {7, "consensus degeneracies", 0, consensus_degeneracies},
        {8, "cone-projection geometry", 0, cone_geometry},
        {9, "near-orthogonality", 0, near_orthogonality},
        {10, "metric oracles", 0, metric_oracles},
        {11, "determinism", 0, determinism},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string timing = fmt("%.2f s", secs);
        if (c.budget_s > 0) {
            timing += fmt(" of %.0f s", c.budget_s);
            if (secs >= c.budget_s) {
                o.pass = false;
                o.detail += "; over runtime budget";
            }
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
                  << timing << ")" << std::endl;
    }
    fs::remove_all(fs::temp_directory_path() / ("cfdiff_acceptance_" + std::to_string(::getpid())));
    std::cout << (criteria.size() - std::size_t(failed)) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
