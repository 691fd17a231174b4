#include "cfdiff/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfdiff/rng.hpp"

namespace cfdiff {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void check_finite(const Mat& m, const char* what) {
    detail::require(m.allFinite(), std::string("classifier: non-finite ") + what);
}

void require_class(const Classifier& clf, int c) {
    if (c < 0 || c >= clf.class_count()) throw std::invalid_argument("classifier: invalid class " + std::to_string(c));
}

double log_sum_exp(const Vec& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

Mat uniform_init(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    const double a = 0.5 / std::sqrt(static_cast<double>(cols));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
    }
    return m;
}

// Accumulated parameter gradients, shaped like the model.
struct Grad {
    Mat dW1;
    Vec db1;
    Mat dW2;
    Vec db2;
};

void accumulate(const LinearSoftmax& m, const Vec& x, int c, Grad& g) {
    Vec delta = softmax(m.weights * x + m.biases);
    delta[c] -= 1.0;
    g.dW1.noalias() += delta * x.transpose();
    g.db1 += delta;
}

void accumulate(const Mlp1& m, const Vec& x, int c, Grad& g) {
    const Vec h = (m.W1 * x + m.b1).array().tanh().matrix();
    Vec delta2 = softmax(m.W2 * h + m.b2);
    delta2[c] -= 1.0;
    const Vec delta1 = ((m.W2.transpose() * delta2).array() * (1.0 - h.array().square())).matrix();
    g.dW2.noalias() += delta2 * h.transpose();
    g.db2 += delta2;
    g.dW1.noalias() += delta1 * x.transpose();
    g.db1 += delta1;
}

Grad zero_grad(const Classifier::Model& model) {
    return std::visit(overloaded{[](const LinearSoftmax& m) {
                                     return Grad{Mat::Zero(m.weights.rows(), m.weights.cols()),
                                                 Vec::Zero(m.biases.size()), Mat(), Vec()};
                                 },
                                 [](const Mlp1& m) {
                                     return Grad{Mat::Zero(m.W1.rows(), m.W1.cols()), Vec::Zero(m.b1.size()),
                                                 Mat::Zero(m.W2.rows(), m.W2.cols()), Vec::Zero(m.b2.size())};
                                 }},
                      model);
}

void apply(Classifier::Model& model, const Grad& g, double scale) {
    std::visit(overloaded{[&](LinearSoftmax& m) {
                              m.weights -= scale * g.dW1;
                              m.biases -= scale * g.db1;
                          },
                          [&](Mlp1& m) {
                              m.W1 -= scale * g.dW1;
                              m.b1 -= scale * g.db1;
                              m.W2 -= scale * g.dW2;
                              m.b2 -= scale * g.db2;
                          }},
               model);
}

}  // namespace

std::string to_string(ModelType type) { return type == ModelType::Linear ? "linear" : "mlp"; }

ModelType model_type_from_string(const std::string& name) {
    if (name == "linear") return ModelType::Linear;
    if (name == "mlp") return ModelType::Mlp;
    throw std::invalid_argument("unknown model type '" + name + "'");
}

Classifier::Classifier(Model model, std::uint64_t seed) : model_(std::move(model)), seed_(seed) {
    std::visit(overloaded{[&](const LinearSoftmax& m) {
                              detail::require(m.weights.rows() >= 1 && m.weights.cols() >= 1, "linear: empty weights");
                              detail::require_dim(m.biases, m.weights.rows(), "linear biases");
                              check_finite(m.weights, "weights");
                              check_finite(m.biases, "biases");
                              input_dim_ = static_cast<int>(m.weights.cols());
                              class_count_ = static_cast<int>(m.weights.rows());
                          },
                          [&](const Mlp1& m) {
                              detail::require(m.W1.rows() >= 1 && m.W1.cols() >= 1, "mlp: hidden width must be >= 1");
                              detail::require_dim(m.b1, m.W1.rows(), "mlp b1");
                              detail::require(m.W2.cols() == m.W1.rows(), "mlp: W2 columns must match hidden width");
                              detail::require_dim(m.b2, m.W2.rows(), "mlp b2");
                              for (const Mat* p : {&m.W1, &m.W2}) check_finite(*p, "weights");
                              check_finite(m.b1, "biases");
                              check_finite(m.b2, "biases");
                              input_dim_ = static_cast<int>(m.W1.cols());
                              class_count_ = static_cast<int>(m.W2.rows());
                          }},
               model_);
}

ModelType Classifier::type() const {
    return std::holds_alternative<LinearSoftmax>(model_) ? ModelType::Linear : ModelType::Mlp;
}

int Classifier::hidden() const {
    if (const auto* m = std::get_if<Mlp1>(&model_)) return static_cast<int>(m->W1.rows());
    return 0;
}

Vec logits(const Classifier& clf, const Vec& x) {
    detail::require_dim(x, clf.input_dim(), "classifier input");
    return std::visit(overloaded{[&](const LinearSoftmax& m) -> Vec { return m.weights * x + m.biases; },
                                 [&](const Mlp1& m) -> Vec {
                                     const Vec h = (m.W1 * x + m.b1).array().tanh().matrix();
                                     return m.W2 * h + m.b2;
                                 }},
                      clf.model());
}

Vec softmax(const Vec& z) {
    Vec e = (z.array() - z.maxCoeff()).exp().matrix();
    return e / e.sum();
}

Vec probabilities(const Classifier& clf, const Vec& x) { return softmax(logits(clf, x)); }

int predict(const Classifier& clf, const Vec& x) {
    const Vec l = logits(clf, x);
    int best = 0;
    for (int k = 1; k < l.size(); ++k) {
        if (l[k] > l[best]) best = k;
    }
    return best;
}

double ce_loss(const Classifier& clf, const Vec& x, int c) {
    require_class(clf, c);
    const Vec l = logits(clf, x);
    return log_sum_exp(l) - l[c];
}

Vec input_grad(const Classifier& clf, const Vec& x, int c) {
    require_class(clf, c);
    detail::require_dim(x, clf.input_dim(), "classifier input");
    return std::visit(overloaded{[&](const LinearSoftmax& m) -> Vec {
                                     Vec delta = softmax(m.weights * x + m.biases);
                                     delta[c] -= 1.0;
                                     return m.weights.transpose() * delta;
                                 },
                                 [&](const Mlp1& m) -> Vec {
                                     const Vec h = (m.W1 * x + m.b1).array().tanh().matrix();
                                     Vec delta = softmax(m.W2 * h + m.b2);
                                     delta[c] -= 1.0;
                                     const Vec back = (m.W2.transpose() * delta).array() * (1.0 - h.array().square());
                                     return m.W1.transpose() * back;
                                 }},
                      clf.model());
}

Classifier init_model(const ModelSpec& spec) {
    detail::require(spec.input_dim >= 1, "init_model: input_dim must be >= 1");
    detail::require(spec.class_count >= 2, "init_model: need at least two classes");
    Rng rng(spec.seed);
    if (spec.type == ModelType::Linear) {
        return Classifier(LinearSoftmax{uniform_init(rng, spec.class_count, spec.input_dim), Vec::Zero(spec.class_count)},
                          spec.seed);
    }
    detail::require(spec.hidden >= 1, "init_model: hidden width must be >= 1");
    Mat W1 = uniform_init(rng, spec.hidden, spec.input_dim);
    Mat W2 = uniform_init(rng, spec.class_count, spec.hidden);
    return Classifier(Mlp1{std::move(W1), Vec::Zero(spec.hidden), std::move(W2), Vec::Zero(spec.class_count)},
                      spec.seed);
}

Classifier train(const ModelSpec& spec, const std::vector<Vec>& inputs, const std::vector<int>& labels,
                 const TrainOptions& options) {
    detail::require(!inputs.empty(), "train: empty dataset");
    detail::require(inputs.size() == labels.size(), "train: inputs and labels differ in length");
    detail::require(options.epochs >= 0, "train: epochs must be >= 0");
    detail::require(options.batch >= 1, "train: batch must be >= 1");
    for (int y : labels) detail::require(y >= 0 && y < spec.class_count, "train: label out of range");

    Classifier init = init_model(spec);
    Classifier::Model model = init.model();
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(options.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch));
            Grad g = zero_grad(model);
            for (std::size_t i = start; i < stop; ++i) {
                const Vec& x = inputs[order[i]];
                detail::require_dim(x, spec.input_dim, "train input");
                std::visit([&](const auto& m) { accumulate(m, x, labels[order[i]], g); }, model);
            }
            apply(model, g, options.lr / static_cast<double>(stop - start));
        }
    }
    return Classifier(std::move(model), spec.seed);
}

double accuracy(const Classifier& clf, const std::vector<Vec>& inputs, const std::vector<int>& labels) {
    detail::require(!inputs.empty() && inputs.size() == labels.size(), "accuracy: bad dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) hits += predict(clf, inputs[i]) == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

}  // namespace cfdiff
