#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cfdiff/types.hpp"

namespace cfdiff {

/// logits = weights * x + biases
struct LinearSoftmax {
    Mat weights;  // K x n
    Vec biases;   // K
};

/// One tanh hidden layer: logits = W2 tanh(W1 x + b1) + b2
struct Mlp1 {
    Mat W1;  // h x n
    Vec b1;  // h
    Mat W2;  // K x h
    Vec b2;  // K
};

enum class ModelType { Linear, Mlp };

std::string to_string(ModelType type);
ModelType model_type_from_string(const std::string& name);

struct ModelSpec {
    ModelType type = ModelType::Linear;
    int input_dim = 0;
    int class_count = 0;
    int hidden = 64;  // Mlp only
    std::uint64_t seed = 0;
};

/// A target model over ambient space. Value type; immutable after training.
class Classifier {
public:
    using Model = std::variant<LinearSoftmax, Mlp1>;

    Classifier(Model model, std::uint64_t seed = 0);

    const Model& model() const { return model_; }
    ModelType type() const;
    int input_dim() const { return input_dim_; }
    int class_count() const { return class_count_; }
    int hidden() const;
    std::uint64_t seed() const { return seed_; }

private:
    Model model_;
    int input_dim_ = 0;
    int class_count_ = 0;
    std::uint64_t seed_ = 0;
};

Vec logits(const Classifier& clf, const Vec& x);
Vec softmax(const Vec& logits);
Vec probabilities(const Classifier& clf, const Vec& x);
/// argmax of the logits; ties resolve to the lowest class index.
int predict(const Classifier& clf, const Vec& x);

/// Cross-entropy of class c, computed with log-sum-exp.
double ce_loss(const Classifier& clf, const Vec& x, int c);
/// Analytic gradient of ce_loss with respect to the input x.
Vec input_grad(const Classifier& clf, const Vec& x, int c);

/// Weights uniform in [-0.5/sqrt(fan_in), 0.5/sqrt(fan_in)], biases zero.
Classifier init_model(const ModelSpec& spec);

struct TrainOptions {
    int epochs = 50;
    double lr = 0.1;
    int batch = 32;
    std::uint64_t seed = 0;  // shuffle streams; initialization uses spec.seed
};

/// Plain minibatch SGD on ce_loss. epochs == 0 returns init_model(spec).
Classifier train(const ModelSpec& spec, const std::vector<Vec>& inputs, const std::vector<int>& labels,
                 const TrainOptions& options);

double accuracy(const Classifier& clf, const std::vector<Vec>& inputs, const std::vector<int>& labels);

}  // namespace cfdiff
