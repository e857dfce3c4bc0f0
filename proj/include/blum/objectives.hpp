#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "blum/corpus.hpp"
#include "blum/encoder.hpp"
#include "blum/model.hpp"
#include "blum/rng.hpp"

namespace blum::objectives {

using encoder::ModelConfig;
using encoder::ModelParameters;
using logdata::BehaviorSequence;

struct MaskingPlan {
    enum class Mode { random, stratified };
    std::vector<int> positions;           // unique, in-bounds, ascending
    std::vector<std::int32_t> targets;    // original ids at those positions
    Mode mode = Mode::random;
};

// Each position masked independently with probability `rate`; one position
// forced if none is drawn.
MaskingPlan plan_random_masking(const BehaviorSequence& seq, double rate, Rng& rng);

// Selects up to `per_behavior_budget` occurrences of every behavior,
// uniformly across the corpus, capping any single sequence at
// ceil(0.15 * L) masked positions.
std::vector<MaskingPlan> plan_stratified_masking(std::span<const BehaviorSequence> corpus, int per_behavior_budget,
                                                 Rng& rng);

// tokens with plan positions replaced by MASK
std::vector<std::int32_t> apply_masking(const BehaviorSequence& seq, const MaskingPlan& plan, std::int32_t mask_id);

// mean cross-entropy over the given rows; logits row r scores targets[r]
template <class Real>
Real mbp_loss(const Mat<Real>& logits, std::span<const std::int32_t> targets);

// mean cross-entropy of position t predicting token t+1 (causal models)
template <class Real>
Real next_behavior_loss(const Mat<Real>& logits, std::span<const std::int32_t> tokens);

// ---- User Contrastive Learning ----
//
// Embeddings come in 2n rows; pair_of[k] is the row of k's positive. Every
// row serves once as anchor; the denominator runs over all other 2n-1 rows,
// cosine similarities scaled by 1/temperature.

template <class Real>
Real ucl_loss(const std::vector<Vec<Real>>& embeddings, std::span<const int> pair_of, Real temperature);

// Same value plus d(loss)/d(embedding) for every row.
template <class Real>
Real ucl_loss_and_grad(const std::vector<Vec<Real>>& embeddings, std::span<const int> pair_of, Real temperature,
                       std::vector<Vec<Real>>* grads);

// ---- combined loss over a batch ----

struct ObjectiveSpec {
    double mbp_weight = 1.0;
    double ucl_weight = 1.0;
    double nbp_weight = 0.0;  // Dec baseline
    double temperature = 0.05;

    bool uses_mbp() const { return mbp_weight != 0.0; }
    bool uses_ucl() const { return ucl_weight != 0.0; }
    bool uses_nbp() const { return nbp_weight != 0.0; }
};

struct BatchSequence {
    std::vector<std::int32_t> input_tokens;  // MASK already applied
    std::vector<std::int32_t> clean_tokens;  // original window (NBP targets)
    MaskingPlan plan;
    int pair_row = -1;  // row index of the same-user partner, -1 if unpaired
};

struct LossParts {
    double mbp = 0.0;
    double ucl = 0.0;
    double nbp = 0.0;
    double total = 0.0;
    std::int64_t masked_positions = 0;
};

// Loss and exact parameter gradients for the implemented graph; verified
// against central finite differences in the test suite. Throws with the
// name of the diverging term if the loss is non-finite.
template <class Real>
LossParts loss_and_gradients(std::span<const BatchSequence> batch, const ModelParameters<Real>& params,
                             const ObjectiveSpec& spec, ModelParameters<Real>* grads);

// ---- training ----

struct TrainHyper {
    int epochs = 5;
    int batch_users = 16;
    double learning_rate = 4e-4;  // peak; linear warmup, constant after
    double warmup_fraction = 0.05;
    double mask_rate = 0.15;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 0.0;  // 0 = off
    double val_fraction = 0.05;
    ObjectiveSpec objective;
};

struct EpochMetrics {
    int epoch = 0;
    double mbp = 0.0;
    double ucl = 0.0;
    double total = 0.0;
    double val_accuracy = 0.0;
};

struct TrainState {
    ModelParameters<float> params;
    ModelParameters<float> adam_m;
    ModelParameters<float> adam_v;
    std::int64_t step = 0;
    std::vector<LossParts> history;  // one entry per step
    std::vector<EpochMetrics> epoch_metrics;
    bool diverged = false;
};

struct TrainCallbacks {
    std::function<void(const EpochMetrics&)> on_epoch;
    std::function<void(const ModelParameters<float>&, int epoch)> on_checkpoint;
};

// Trains on full user streams: per step, a batch of users each contributes a
// non-overlapping window pair; both windows get random masking; the combined
// loss is optimized with Adam. A 5% held-out user split provides per-epoch
// validation MBP accuracy. On divergence the last finite parameters are kept
// and `diverged` is set.
TrainState train_model(const std::vector<BehaviorSequence>& streams, const ModelConfig& config,
                       const TrainHyper& hyper, std::uint64_t seed, const TrainCallbacks& callbacks = {});

// Most frequent behavior id over the given streams (majority-vote predictor).
std::int32_t majority_behavior(std::span<const BehaviorSequence> streams);

}  // namespace blum::objectives
