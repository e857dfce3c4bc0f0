#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "blum/corpus.hpp"
#include "blum/rng.hpp"
#include "blum/tensor.hpp"
#include "blum/vocab.hpp"

namespace blum::logdata {

// Knobs for the persona-conditioned Markov log generator. Defaults are the
// desk-scale working point used throughout the test and evaluation suites.
struct SyntheticConfig {
    int num_users = 1000;
    int num_behaviors = 120;
    int days = 21;
    double mean_events_per_day = 22.0;

    // persona shape
    double zipf_exponent = 1.05;
    double preference_jitter = 1.1;  // lognormal sigma on per-user behavior weights
    int num_favorites = 5;
    double favorite_boost = 8.0;
    double transition_mix = 0.65;  // weight on the shared Markov chain vs own preference
    int transition_fanout = 3;     // dominant successors per behavior in the shared chain
    double trend_range = 0.8;
    double trend_polarity_scale = 0.8;

    // label machinery
    int num_risky = 12;
    int num_ad = 12;
    double risk_preference_boost = 3.0;
    double ad_preference_boost = 3.0;
    int label_window_days = 3;
    double risky_freq_scale = 0.25;
    double reported_threshold = 0.55;
    double ad_view_threshold = 0.5;
    double self_delete_threshold = 0.0;
    double reported_noise = 0.08;
    double ad_view_noise = 0.45;
    double self_delete_noise = 0.12;

    std::string user_prefix = "u";

    void validate() const;  // throws on out-of-range fields
};

// Latent user parameters. Same-user windows look alike because every draw
// mixes the shared chain with this user's own preference vector.
struct Persona {
    std::string user_id;
    Vec<double> preference;  // over behaviors, sums to 1
    std::shared_ptr<const Mat<double>> base_transition;
    double transition_mix = 0.0;
    double activity_trend = 0.0;
    double risk_level = 0.0;
    double engagement = 0.0;

    int num_behaviors() const { return static_cast<int>(preference.size()); }

    // row of the blended transition matrix: mix * base[prev] + (1 - mix) * preference
    void transition_row(int prev, double* out) const;
};

struct SyntheticCorpus {
    BehaviorVocab vocab;
    std::vector<Persona> personas;
    std::vector<BehaviorSequence> sequences;  // one full stream per user
    std::vector<LabelRecord> labels;          // all tasks x gaps 0..7
    std::vector<int> risky_ids;
    std::vector<int> ad_ids;
};

// Pure function of (config, seed); identical seeds give bit-identical corpora.
// Users are generated from per-user derived seeds, so disjoint user shards
// can be produced independently.
SyntheticCorpus generate_corpus(const SyntheticConfig& config, std::uint64_t seed);

// One timestamped event stream drawn from the persona: each day starts from
// the preference and continues through the blended first-order chain.
BehaviorSequence generate_stream(const Persona& persona, const SyntheticConfig& config, Rng& rng);

// Index ranges of two disjoint windows of a length-`len` stream, each
// window no longer than max_len: [first.first, first.second) and
// [second.first, second.second).
std::pair<std::pair<int, int>, std::pair<int, int>> sample_window_ranges(int len, int max_len, Rng& rng);

// Two windows with disjoint index ranges, each of length <= max_len.
std::pair<BehaviorSequence, BehaviorSequence> sample_sequence_pair(const BehaviorSequence& stream, int max_len,
                                                                   Rng& rng);

// Label for one (user, task); gap_days only selects the feature cutoff the
// record is paired with and is validated against the stream coverage.
// risky_ids is the designated risky behavior set of the generating corpus.
LabelRecord derive_labels(const Persona& persona, const BehaviorSequence& stream, Task task, int gap_days,
                          const SyntheticConfig& config, std::span<const int> risky_ids, Rng& rng);

// Latest <= max_window tokens strictly before the feature cutoff for this gap.
BehaviorSequence feature_window(const BehaviorSequence& stream, int gap_days, const SyntheticConfig& config,
                                int max_window);

struct DownstreamItem {
    BehaviorSequence window;
    int label = 0;
};

struct DownstreamDataset {
    Task task = Task::reported;
    int gap_days = 0;
    std::vector<DownstreamItem> items;

    double positive_rate() const;
};

// Joins streams with labels for (task, gap), extracts feature windows and
// balances classes by subsampling the majority class.
DownstreamDataset assemble_downstream_dataset(const std::vector<BehaviorSequence>& sequences,
                                              const std::vector<LabelRecord>& labels, Task task, int gap_days,
                                              const SyntheticConfig& config, int max_window, Rng& rng);

}  // namespace blum::logdata
