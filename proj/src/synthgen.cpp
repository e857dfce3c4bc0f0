#include "blum/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_map>

namespace blum::logdata {

void SyntheticConfig::validate() const {
    if (num_users < 2) throw std::invalid_argument("generate_corpus: contrastive learning needs >= 2 users");
    if (num_behaviors < 2) throw std::invalid_argument("generate_corpus: need >= 2 behaviors");
    if (days < label_window_days + 1) throw std::invalid_argument("generate_corpus: days must cover the label window");
    if (mean_events_per_day <= 0) throw std::invalid_argument("generate_corpus: mean_events_per_day must be > 0");
    if (transition_mix < 0 || transition_mix > 1)
        throw std::invalid_argument("generate_corpus: transition_mix out of [0, 1]");
    if (num_risky > num_behaviors || num_ad > num_behaviors)
        throw std::invalid_argument("generate_corpus: designated behavior sets exceed vocabulary");
}

void Persona::transition_row(int prev, double* out) const {
    const int v = num_behaviors();
    const double* base = base_transition->row(prev);
    for (int j = 0; j < v; ++j) out[j] = transition_mix * base[j] + (1.0 - transition_mix) * preference[j];
}

namespace {

std::string format_user_id(const std::string& prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06d", prefix.c_str(), index);
    return buf;
}

std::vector<double> make_cdf(const double* w, int n) {
    std::vector<double> cdf(static_cast<std::size_t>(n));
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += w[i];
        cdf[static_cast<std::size_t>(i)] = acc;
    }
    cdf.back() = 1.0 + 1e-12;  // guard against rounding at the top
    return cdf;
}

int sample_cdf(const std::vector<double>& cdf, Rng& rng) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

std::vector<int> sample_distinct_ids(int count, int v, Rng& rng) {
    std::vector<int> all(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(count));
    std::sort(all.begin(), all.end());
    return all;
}

// Shared world derived from the corpus seed: Zipf base, a peaked global
// Markov chain, engagement polarity per behavior and the designated
// risky/ad behavior sets.
struct World {
    Vec<double> zipf;  // sums to 1
    std::shared_ptr<Mat<double>> base_transition;
    Vec<double> polarity;  // in [-1, 1]
    std::vector<int> risky_ids;
    std::vector<int> ad_ids;
    std::vector<bool> is_risky;
};

World build_world(const SyntheticConfig& cfg, std::uint64_t seed) {
    const int v = cfg.num_behaviors;
    World w;
    Rng rng(derive_seed(seed, "world"));

    w.zipf.resize(static_cast<std::size_t>(v));
    double zsum = 0.0;
    for (int b = 0; b < v; ++b) {
        w.zipf[static_cast<std::size_t>(b)] = std::pow(1.0 / (b + 1), cfg.zipf_exponent);
        zsum += w.zipf[static_cast<std::size_t>(b)];
    }
    for (auto& z : w.zipf) z /= zsum;

    // each behavior gets a few dominant successors blended with the base
    // frequency profile so masked prediction has a learnable bigram core
    auto trans = std::make_shared<Mat<double>>(v, v);
    const int fanout = std::min(cfg.transition_fanout, v);
    for (int a = 0; a < v; ++a) {
        double* row = trans->row(a);
        for (int j = 0; j < v; ++j) row[j] = 0.15 * w.zipf[static_cast<std::size_t>(j)];
        double peak = 0.85;
        double share = 0.55;
        for (int f = 0; f < fanout; ++f) {
            const int succ = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(v)));
            const double give = (f == fanout - 1) ? peak : peak * share;
            row[succ] += give;
            peak -= give;
            share = 0.62;
        }
        double s = 0.0;
        for (int j = 0; j < v; ++j) s += row[j];
        for (int j = 0; j < v; ++j) row[j] /= s;
    }
    w.base_transition = trans;

    w.polarity.resize(static_cast<std::size_t>(v));
    for (auto& p : w.polarity) p = rng.uniform(-1.0, 1.0);

    w.risky_ids = sample_distinct_ids(cfg.num_risky, v, rng);
    w.ad_ids = sample_distinct_ids(cfg.num_ad, v, rng);
    w.is_risky.assign(static_cast<std::size_t>(v), false);
    for (int r : w.risky_ids) w.is_risky[static_cast<std::size_t>(r)] = true;
    return w;
}

Persona make_persona(const SyntheticConfig& cfg, const World& world, const std::string& user_id, Rng& rng) {
    const int v = cfg.num_behaviors;
    Persona p;
    p.user_id = user_id;
    p.base_transition = world.base_transition;
    p.transition_mix = cfg.transition_mix;
    p.risk_level = rng.uniform();
    p.engagement = rng.uniform();
    p.activity_trend = rng.uniform(-cfg.trend_range, cfg.trend_range);

    p.preference.resize(static_cast<std::size_t>(v));
    for (int b = 0; b < v; ++b)
        p.preference[static_cast<std::size_t>(b)] =
            world.zipf[static_cast<std::size_t>(b)] * std::exp(cfg.preference_jitter * rng.normal());
    for (int f = 0; f < std::min(cfg.num_favorites, v); ++f) {
        const int b = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(v)));
        p.preference[static_cast<std::size_t>(b)] *= cfg.favorite_boost;
    }
    for (int r : world.risky_ids) p.preference[static_cast<std::size_t>(r)] *= 1.0 + cfg.risk_preference_boost * p.risk_level;
    for (int a : world.ad_ids) p.preference[static_cast<std::size_t>(a)] *= 1.0 + cfg.ad_preference_boost * p.engagement;
    for (int b = 0; b < v; ++b)
        p.preference[static_cast<std::size_t>(b)] *=
            std::exp(cfg.trend_polarity_scale * p.activity_trend * world.polarity[static_cast<std::size_t>(b)]);

    double sum = 0.0;
    for (double x : p.preference) sum += x;
    for (auto& x : p.preference) x /= sum;
    return p;
}

double logistic_noise(Rng& rng) {
    double u = rng.uniform();
    u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
    return std::log(u / (1.0 - u));
}

double risky_window_frequency(const SyntheticConfig& cfg, std::span<const int> risky_ids,
                              const BehaviorSequence& stream) {
    std::vector<bool> is_risky(static_cast<std::size_t>(cfg.num_behaviors), false);
    for (int r : risky_ids) is_risky[static_cast<std::size_t>(r)] = true;
    const int start_day = cfg.days - cfg.label_window_days;
    std::int64_t total = 0, risky = 0;
    for (std::size_t i = 0; i < stream.tokens.size(); ++i) {
        if (stream.timestamps[i] < start_day) continue;
        ++total;
        if (is_risky[static_cast<std::size_t>(stream.tokens[i])]) ++risky;
    }
    return total == 0 ? 0.0 : static_cast<double>(risky) / static_cast<double>(total);
}

}  // namespace

BehaviorSequence generate_stream(const Persona& persona, const SyntheticConfig& config, Rng& rng) {
    const int v = persona.num_behaviors();
    const auto pref_cdf = make_cdf(persona.preference.data(), v);
    // sampling the blended row mix*T[prev] + (1-mix)*pref as a mixture draw
    // is exactly equivalent and avoids materializing per-user rows
    std::vector<std::vector<double>> base_cdf(static_cast<std::size_t>(v));
    for (int a = 0; a < v; ++a) base_cdf[static_cast<std::size_t>(a)] = make_cdf(persona.base_transition->row(a), v);

    BehaviorSequence s;
    s.user_id = persona.user_id;
    const double base_rate = config.mean_events_per_day * (0.5 + persona.engagement);
    const double mid = (config.days - 1) / 2.0;
    const double denom = std::max(1, config.days - 1);
    int prev = -1;
    for (int day = 0; day < config.days; ++day) {
        const double rate = std::max(0.05, base_rate * (1.0 + persona.activity_trend * (day - mid) / denom));
        const int events = rng.poisson(rate);
        for (int e = 0; e < events; ++e) {
            int tok;
            if (prev < 0 || e == 0) {
                tok = sample_cdf(pref_cdf, rng);  // day starts from own preference
            } else if (rng.uniform() < persona.transition_mix) {
                tok = sample_cdf(base_cdf[static_cast<std::size_t>(prev)], rng);
            } else {
                tok = sample_cdf(pref_cdf, rng);
            }
            s.tokens.push_back(tok);
            s.timestamps.push_back(day);
            prev = tok;
        }
    }
    while (s.length() < 4) {  // pair sampling and windows need a handful of events
        s.tokens.push_back(sample_cdf(pref_cdf, rng));
        s.timestamps.push_back(config.days - 1);
    }
    return s;
}

LabelRecord derive_labels(const Persona& persona, const BehaviorSequence& stream, Task task, int gap_days,
                          const SyntheticConfig& config, std::span<const int> risky_ids, Rng& rng) {
    if (gap_days < 0 || gap_days > kMaxGapDays) throw std::invalid_argument("derive_labels: gap_days out of [0, 7]");
    const int cutoff = config.days - config.label_window_days - gap_days;
    if (cutoff < 1)
        throw std::invalid_argument("derive_labels: stream does not cover feature window plus gap of " +
                                    std::to_string(gap_days) + " days");
    LabelRecord rec;
    rec.user_id = persona.user_id;
    rec.task = task;
    rec.gap_days = gap_days;
    switch (task) {
        case Task::reported: {
            const double freq = risky_window_frequency(config, risky_ids, stream);
            const double score = 0.6 * persona.risk_level + 0.4 * std::min(1.0, freq / config.risky_freq_scale);
            rec.label = score + config.reported_noise * logistic_noise(rng) > config.reported_threshold ? 1 : 0;
            break;
        }
        case Task::ad_view:
            rec.label =
                persona.engagement + config.ad_view_noise * logistic_noise(rng) > config.ad_view_threshold ? 1 : 0;
            break;
        case Task::self_delete:
            rec.label = persona.activity_trend + config.self_delete_noise * logistic_noise(rng) <
                                config.self_delete_threshold
                            ? 1
                            : 0;
            break;
    }
    return rec;
}

SyntheticCorpus generate_corpus(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    const World world = build_world(config, seed);

    SyntheticCorpus out;
    out.vocab = BehaviorVocab::build(make_behavior_names(config.num_behaviors));
    out.risky_ids = world.risky_ids;
    out.ad_ids = world.ad_ids;
    out.personas.resize(static_cast<std::size_t>(config.num_users));
    out.sequences.resize(static_cast<std::size_t>(config.num_users));

    // per-user substreams keep generation shardable: user u is a pure
    // function of (config, seed, u)
    for (int u = 0; u < config.num_users; ++u) {
        Rng rng(derive_seed(seed, "user", static_cast<std::uint64_t>(u)));
        const std::string uid = format_user_id(config.user_prefix, u);
        Persona p = make_persona(config, world, uid, rng);
        out.sequences[static_cast<std::size_t>(u)] = generate_stream(p, config, rng);
        out.personas[static_cast<std::size_t>(u)] = std::move(p);
    }

    const Task tasks[] = {Task::reported, Task::ad_view, Task::self_delete};
    for (int u = 0; u < config.num_users; ++u) {
        Rng label_rng(derive_seed(seed, "labels", static_cast<std::uint64_t>(u)));
        const Persona& p = out.personas[static_cast<std::size_t>(u)];
        const BehaviorSequence& s = out.sequences[static_cast<std::size_t>(u)];
        for (Task t : tasks) {
            // one label per (user, task); the gap only moves the feature cutoff
            const LabelRecord base = derive_labels(p, s, t, 0, config, world.risky_ids, label_rng);
            for (int gap = 0; gap <= kMaxGapDays; ++gap) {
                if (config.days - config.label_window_days - gap < 1) continue;
                LabelRecord rec = base;
                rec.gap_days = gap;
                out.labels.push_back(std::move(rec));
            }
        }
    }
    return out;
}

std::pair<std::pair<int, int>, std::pair<int, int>> sample_window_ranges(int len, int max_len, Rng& rng) {
    if (len < 2) throw std::invalid_argument("sample_window_ranges: need length >= 2");
    if (max_len < 1) throw std::invalid_argument("sample_window_ranges: max_len must be >= 1");
    const int cut = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(len - 1)));
    std::pair<int, int> left{std::max(0, cut - max_len), cut};
    std::pair<int, int> right{cut, std::min(len, cut + max_len)};
    if (rng.bernoulli(0.5)) return {right, left};
    return {left, right};
}

std::pair<BehaviorSequence, BehaviorSequence> sample_sequence_pair(const BehaviorSequence& stream, int max_len,
                                                                   Rng& rng) {
    if (stream.length() < 2)
        throw std::invalid_argument("sample_sequence_pair: stream for user " + stream.user_id +
                                    " too short (need >= 2 events)");
    const auto [a, b] = sample_window_ranges(stream.length(), max_len, rng);
    return {stream.window(a.first, a.second), stream.window(b.first, b.second)};
}

BehaviorSequence feature_window(const BehaviorSequence& stream, int gap_days, const SyntheticConfig& config,
                                int max_window) {
    const int cutoff_day = config.days - config.label_window_days - gap_days;
    if (cutoff_day < 1)
        throw std::invalid_argument("feature_window: stream does not cover feature window plus gap of " +
                                    std::to_string(gap_days) + " days");
    int end = 0;
    for (std::size_t i = 0; i < stream.tokens.size(); ++i) {
        if (stream.timestamps[i] < cutoff_day) end = static_cast<int>(i) + 1;
    }
    const int begin = std::max(0, end - max_window);
    if (end <= begin) {
        BehaviorSequence empty;
        empty.user_id = stream.user_id;
        return empty;
    }
    return stream.window(begin, end);
}

double DownstreamDataset::positive_rate() const {
    if (items.empty()) return 0.0;
    double s = 0.0;
    for (const auto& it : items) s += it.label;
    return s / static_cast<double>(items.size());
}

DownstreamDataset assemble_downstream_dataset(const std::vector<BehaviorSequence>& sequences,
                                              const std::vector<LabelRecord>& labels, Task task, int gap_days,
                                              const SyntheticConfig& config, int max_window, Rng& rng) {
    std::unordered_map<std::string, const BehaviorSequence*> by_user;
    by_user.reserve(sequences.size());
    for (const auto& s : sequences) by_user[s.user_id] = &s;

    std::vector<DownstreamItem> positives, negatives;
    for (const auto& l : labels) {
        if (l.task != task || l.gap_days != gap_days) continue;
        auto it = by_user.find(l.user_id);
        if (it == by_user.end()) continue;
        BehaviorSequence w = feature_window(*it->second, gap_days, config, max_window);
        if (w.tokens.empty()) continue;
        DownstreamItem item{std::move(w), l.label};
        (l.label == 1 ? positives : negatives).push_back(std::move(item));
    }

    // balance by subsampling the majority class
    rng.shuffle(positives);
    rng.shuffle(negatives);
    const std::size_t n = std::min(positives.size(), negatives.size());
    positives.resize(n);
    negatives.resize(n);

    DownstreamDataset ds;
    ds.task = task;
    ds.gap_days = gap_days;
    ds.items.reserve(2 * n);
    for (auto& p : positives) ds.items.push_back(std::move(p));
    for (auto& q : negatives) ds.items.push_back(std::move(q));
    rng.shuffle(ds.items);
    return ds;
}

}  // namespace blum::logdata
