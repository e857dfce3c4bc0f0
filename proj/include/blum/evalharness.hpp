#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blum/baselines.hpp"
#include "blum/corpus.hpp"
#include "blum/mlp.hpp"
#include "blum/objectives.hpp"
#include "blum/synthgen.hpp"

namespace blum::evalharness {

using baselines::Embedder;
using encoder::Pooling;
using logdata::BehaviorSequence;
using logdata::LabelRecord;
using logdata::Task;

// ---- Masked Behavior Prediction accuracy ----

enum class MaskingMode { random, stratified };

struct MbpResult {
    double accuracy = 0.0;
    std::int64_t masked_positions = 0;
};

// Accuracy of argmax prediction at masked positions over the given windows.
// Rejects embedders without a Masked Behavior Prediction head. Stratified
// mode masks each behavior equally often (budget <= 0 picks one matching a
// ~15% overall rate).
MbpResult eval_mbp(const Embedder& model, std::span<const BehaviorSequence> windows, MaskingMode mode,
                   const logdata::BehaviorVocab& vocab, Rng& rng, double mask_rate = 0.15,
                   int stratified_budget = 0);

// majority-vote accuracy over the same masked targets
MbpResult majority_vote_mbp(std::span<const BehaviorSequence> windows, MaskingMode mode,
                            const logdata::BehaviorVocab& vocab, Rng& rng, double mask_rate = 0.15,
                            int stratified_budget = 0, std::int32_t majority_id = -1);

// ---- User Representation Similarity Analysis ----

struct UrsaResult {
    double within = 0.0;
    double between = 0.0;
    double difference = 0.0;
    Pooling pooling = Pooling::mean;
};

// Per repetition and user: one same-user disjoint-window pair and one
// different-user pair; means of cosine similarities.
UrsaResult eval_ursa(const Embedder& embedder, std::span<const BehaviorSequence> streams, Pooling pooling,
                     int window_len, int repetitions, Rng& rng);

// All four poolings from the same windows/pairs; best by difference.
std::array<UrsaResult, encoder::kNumPoolings> eval_ursa_all(const Embedder& embedder,
                                                            std::span<const BehaviorSequence> streams, int window_len,
                                                            int repetitions, Rng& rng);
UrsaResult eval_ursa_best(const Embedder& embedder, std::span<const BehaviorSequence> streams, int window_len,
                          int repetitions, Rng& rng);

// ---- User Retrieval ----

struct RetrievalSample {
    BehaviorSequence query;
    std::vector<BehaviorSequence> candidates;  // exactly 100
    int positive_index = -1;
};

constexpr int kRetrievalCandidates = 100;

// Query and positive are disjoint same-user windows of exactly `length`;
// the 99 negatives come from distinct other users.
std::vector<RetrievalSample> build_retrieval_samples(std::span<const BehaviorSequence> streams, int num_samples,
                                                     int length, Rng& rng);

// Mean reciprocal rank of the positive under descending cosine; ties break
// by candidate index.
double eval_retrieval(const Embedder& embedder, std::span<const RetrievalSample> samples, Pooling pooling);

std::array<double, encoder::kNumPoolings> eval_retrieval_all(const Embedder& embedder,
                                                             std::span<const RetrievalSample> samples);

struct RetrievalBest {
    double mrr = 0.0;
    Pooling pooling = Pooling::mean;
};
RetrievalBest eval_retrieval_best(const Embedder& embedder, std::span<const RetrievalSample> samples);

// ---- downstream tasks ----

// Best-of-random-search MLP by 5-fold CV (selection on an 80% training
// split), refit, AUC on the held-out 20%. Rejects datasets whose class
// balance is off by more than 2%.
double eval_downstream(const Embedder& embedder, const logdata::DownstreamDataset& dataset, Pooling pooling,
                       const MlpSpec& spec, std::uint64_t seed);

// ---- reports ----

struct EvalReport {
    std::string model;
    std::string task;    // mbp_random | mbp_stratified | ursa | retrieval | reported | ad_view | self_delete
    std::string metric;  // acc | diff | mrr | auc
    double value = 0.0;  // NaN renders as "na"
    std::string coord_kind;  // "length" | "gap" | ""
    int coord = -1;
    std::string pooling;
    std::uint64_t seed = 0;
    std::string config_fingerprint;

    std::string column_key() const;
};

void validate_report_ranges(std::span<const EvalReport> reports);  // metric-range invariants

void write_reports_jsonl(const std::string& path, std::span<const EvalReport> reports);
// rows = model, columns = task/sweep coordinate, fixed %.6f cells, "na" for NaN
void write_reports_csv(const std::string& path, std::span<const EvalReport> reports,
                       std::span<const std::string> model_order);

// ---- full-suite driver ----

struct EvalSettings {
    std::vector<std::string> tasks{"mbp", "ursa", "retrieval", "downstream"};
    int mbp_eval_window = 32;
    double mbp_mask_rate = 0.15;
    int stratified_budget = 0;  // 0 = auto
    int ursa_window = 128;
    int ursa_repetitions = 5;
    int ursa_users = 250;  // 0 = all eval users
    std::vector<int> retrieval_lengths{32, 64, 128, 256};
    int retrieval_samples = 500;
    std::vector<int> gaps{0, 1, 2, 3, 4, 5, 6, 7};
    int downstream_max_window = 128;
    MlpSpec mlp;
};

struct EvalContext {
    const std::vector<BehaviorSequence>* eval_streams = nullptr;
    const std::vector<LabelRecord>* labels = nullptr;
    const logdata::BehaviorVocab* vocab = nullptr;
    const logdata::SyntheticConfig* synth = nullptr;
    std::uint64_t seed = 0;
    std::string config_fingerprint;
};

// Runs the requested protocols for one model and appends reports. Tasks a
// model cannot serve (MBP without an MBP head) produce NaN-valued rows.
void run_model_eval(const Embedder& embedder, const std::string& model_name, const EvalSettings& settings,
                    const EvalContext& ctx, std::vector<EvalReport>& out);

// ---- ablation ----

struct AblationCell {
    double value = 0.0;  // absolute, 0-100 scale; NaN = not applicable
    double delta = 0.0;  // vs full model, same scale
};

struct AblationRow {
    std::string variant;
    bool failed = false;
    std::map<std::string, AblationCell> cells;  // keyed by report column
};

struct AblationTable {
    std::vector<std::string> columns;
    std::vector<AblationRow> rows;
};

struct AblationPlan {
    objectives::TrainHyper hyper;
    encoder::ModelConfig base_config;
    const std::vector<BehaviorSequence>* train_streams = nullptr;
    EvalSettings eval_settings;
    EvalContext context;
};

// Trains {full, -MBP, -UCL, -ALiBi, -UCL&ALiBi} with identical seeds and
// data order, evaluates the requested tasks, reports absolute values and
// deltas vs the full model on a 0-100 scale. A diverging variant marks its
// row failed and the run continues.
AblationTable run_ablation(const AblationPlan& plan, std::uint64_t seed);

void write_ablation_csv(const std::string& path, const AblationTable& table);

// Variant configurations share the ablation naming used in reports.
struct VariantSpec {
    std::string name;
    objectives::ObjectiveSpec objective;
    encoder::PositionalMode positional_mode;
};
std::vector<VariantSpec> ablation_variants(const objectives::ObjectiveSpec& base);

}  // namespace blum::evalharness
