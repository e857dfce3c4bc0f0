#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "blum/tensor.hpp"

namespace blum::evalharness {

// AUC by rank statistic with average ranks for ties.
double auc_score(std::span<const float> scores, std::span<const int> labels);

struct MlpSpec {
    int folds = 5;
    int search_draws = 20;
    std::vector<int> hidden_sizes{32, 64, 128};
    int max_hidden_layers = 2;
    double lr_min = 1e-4;  // log-uniform draw range
    double lr_max = 1e-2;
    std::vector<double> l2{0.0, 1e-4, 1e-3};
    int epochs = 40;
    int batch = 64;

    void validate() const;  // folds must stay 5, draws >= 20
};

struct MlpConfig {
    std::vector<int> hidden;  // 1..2 layers
    double learning_rate = 1e-3;
    double l2 = 0.0;
};

// Binary classifier: dense ReLU layers, logistic output, Adam, L2 on
// weights. Features are z-scored with statistics from the training split.
class MlpClassifier {
public:
    void fit(const Mat<float>& x, std::span<const int> y, const MlpConfig& config, int epochs, int batch,
             std::uint64_t seed);
    std::vector<float> decision_scores(const Mat<float>& x) const;  // pre-sigmoid

private:
    std::vector<Mat<float>> weights_;
    std::vector<Vec<float>> biases_;
    Vec<float> feat_mean_, feat_scale_;
};

// Random search with k-fold cross validation by AUC; returns the winning
// configuration (ties to the earlier draw).
MlpConfig random_search_cv(const Mat<float>& x, std::span<const int> y, const MlpSpec& spec, std::uint64_t seed);

// Full protocol: 80/20 train/test split, random search with 5-fold CV on
// the training split, refit, AUC on the held-out test split.
double mlp_auc_protocol(const Mat<float>& x, std::span<const int> y, const MlpSpec& spec, std::uint64_t seed);

}  // namespace blum::evalharness
