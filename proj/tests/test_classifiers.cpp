#include <doctest.h>

#include <cmath>

#include "cfdiff/classifiers.hpp"
#include "cfdiff/rng.hpp"
#include "cfdiff/world.hpp"

using namespace cfdiff;

namespace {

Classifier linear(Mat W, Vec b) { return Classifier(LinearSoftmax{std::move(W), std::move(b)}); }

Vec fd_input_grad(const Classifier& clf, const Vec& x, int c, double h = 1e-5) {
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (ce_loss(clf, a, c) - ce_loss(clf, b, c)) / (2 * h);
    }
    return g;
}

MixtureWorld separable() {
    Vec a(2), b(2);
    a << 3, 0;
    b << -3, 0;
    return MixtureWorld({MixtureComponent{a, 0.25, 0.5, 0, {}}, MixtureComponent{b, 0.25, 0.5, 1, {}}}, 2);
}

}  // namespace

TEST_CASE("logits and predict") {
    const Classifier zero = linear(Mat::Zero(3, 2), Vec::Zero(3));
    Vec x(2);
    x << 2.0, 5.0;
    CHECK(logits(zero, x) == Vec::Zero(3));
    CHECK(predict(zero, x) == 0);

    Mat W(2, 2);
    W << 1, 0, -1, 0;
    const Classifier hand = linear(W, Vec::Zero(2));
    CHECK(logits(hand, x)[0] == 2.0);
    CHECK(logits(hand, x)[1] == -2.0);
    CHECK(predict(hand, x) == 0);

    Mlp1 dead{Mat::Random(4, 2), Vec::Random(4), Mat::Zero(3, 4), Vec(3)};
    dead.b2 << 0.5, -1.0, 2.0;
    const Classifier mlp(dead);
    Rng rng(1);
    for (int i = 0; i < 5; ++i) CHECK(logits(mlp, rng.normal_vec(2)) == dead.b2);
    CHECK(predict(mlp, x) == 2);
    CHECK_THROWS_AS(logits(hand, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("loss and gradient examples") {
    const Classifier zero = linear(Mat::Zero(4, 3), Vec::Zero(4));
    const Vec x = Vec::Ones(3);
    CHECK(ce_loss(zero, x, 2) == doctest::Approx(std::log(4.0)));
    CHECK(input_grad(zero, x, 2) == Vec::Zero(3));

    Mat W(2, 2);
    W << 1, 0, -1, 0;
    const Classifier bin = linear(W, Vec::Zero(2));
    CHECK(ce_loss(bin, Vec::Zero(2), 0) == doctest::Approx(std::log(2.0)));
    const Vec g = input_grad(bin, Vec::Zero(2), 0);
    CHECK(g[0] == doctest::Approx(-1.0));
    CHECK(g[1] == doctest::Approx(0.0));

    CHECK_THROWS_AS(ce_loss(bin, Vec::Zero(2), 2), std::invalid_argument);
    CHECK_THROWS_AS(input_grad(bin, Vec::Zero(2), -1), std::invalid_argument);
}

TEST_CASE("input gradients match finite differences") {
    for (ModelType type : {ModelType::Linear, ModelType::Mlp}) {
        Classifier clf = init_model(ModelSpec{type, 5, 3, 16, 9});
        // Scale up the small initialization so the loss surface is not flat.
        if (type == ModelType::Mlp) {
            Mlp1 m = std::get<Mlp1>(clf.model());
            m.W1 *= 8.0;
            m.W2 *= 8.0;
            m.b1 = Vec::LinSpaced(16, -1, 1);
            clf = Classifier(m);
        } else {
            LinearSoftmax m = std::get<LinearSoftmax>(clf.model());
            m.weights *= 8.0;
            clf = Classifier(m);
        }
        Rng rng(2);
        for (int i = 0; i < 50; ++i) {
            const Vec x = rng.normal_vec(5);
            const int c = static_cast<int>(rng.index(3));
            const Vec fd = fd_input_grad(clf, x, c);
            CHECK((input_grad(clf, x, c) - fd).norm() <= 1e-4 * std::max(1e-8, fd.norm()));
        }
    }
}

TEST_CASE("bias shift leaves loss and gradient unchanged") {
    Rng rng(4);
    const Mat W = Mat::NullaryExpr(3, 4, [&] { return rng.normal(); });
    const Vec b = rng.normal_vec(3);
    const Classifier a = linear(W, b);
    const Classifier shifted = linear(W, (b.array() + 7.5).matrix());
    for (int i = 0; i < 10; ++i) {
        const Vec x = rng.normal_vec(4);
        CHECK(std::abs(ce_loss(a, x, 1) - ce_loss(shifted, x, 1)) <= 1e-10);
        CHECK((input_grad(a, x, 1) - input_grad(shifted, x, 1)).norm() <= 1e-10);
    }
}

TEST_CASE("argmax survives a shared temperature") {
    Rng rng(5);
    const Mat W = Mat::NullaryExpr(4, 3, [&] { return rng.normal(); });
    const Vec b = rng.normal_vec(4);
    const Classifier a = linear(W, b);
    const Classifier hot = linear(0.1 * W, 0.1 * b);
    for (int i = 0; i < 20; ++i) {
        const Vec x = rng.normal_vec(3);
        CHECK(predict(a, x) == predict(hot, x));
        CHECK(probabilities(a, x).sum() == doctest::Approx(1.0));
    }
}

TEST_CASE("training") {
    const MixtureWorld w = separable();
    const LabeledSamples data = sample(w, std::nullopt, 2000, 3);
    const ModelSpec spec{ModelType::Linear, 2, 2, 0, 1};

    SUBCASE("zero epochs returns the initialization") {
        const Classifier init = init_model(spec);
        const Classifier t = train(spec, data.points, data.labels, TrainOptions{0, 0.1, 32, 5});
        CHECK(std::get<LinearSoftmax>(t.model()).weights == std::get<LinearSoftmax>(init.model()).weights);
        CHECK(std::get<LinearSoftmax>(t.model()).biases == std::get<LinearSoftmax>(init.model()).biases);
        const double bound = 0.5 / std::sqrt(2.0);
        CHECK(std::get<LinearSoftmax>(init.model()).weights.cwiseAbs().maxCoeff() <= bound);
    }
    SUBCASE("separable world reaches Bayes-level accuracy") {
        const Classifier t = train(spec, data.points, data.labels, TrainOptions{50, 0.1, 32, 5});
        CHECK(accuracy(t, data.points, data.labels) >= 0.99);
        // Bayes oracle agrees the task is essentially error-free.
        double bayes_hits = 0;
        for (std::size_t i = 0; i < data.points.size(); ++i) bayes_hits += bayes_predict(w, data.points[i]) == data.labels[i];
        CHECK(bayes_hits / double(data.points.size()) >= 0.999);
    }
    SUBCASE("deterministic given seed") {
        const ModelSpec mspec{ModelType::Mlp, 2, 2, 8, 1};
        const Classifier a = train(mspec, data.points, data.labels, TrainOptions{3, 0.1, 32, 5});
        const Classifier b = train(mspec, data.points, data.labels, TrainOptions{3, 0.1, 32, 5});
        CHECK(std::get<Mlp1>(a.model()).W1 == std::get<Mlp1>(b.model()).W1);
        CHECK(std::get<Mlp1>(a.model()).b2 == std::get<Mlp1>(b.model()).b2);
    }
    CHECK_THROWS_AS(train(spec, {}, {}, TrainOptions{}), std::invalid_argument);
    CHECK_THROWS_AS(train(spec, data.points, data.labels, TrainOptions{-1, 0.1, 32, 0}), std::invalid_argument);
}

TEST_CASE("model type names") {
    CHECK(to_string(ModelType::Linear) == "linear");
    CHECK(model_type_from_string("mlp") == ModelType::Mlp);
    CHECK_THROWS_AS(model_type_from_string("cnn"), std::invalid_argument);
}
