#include "blum/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "blum/kernels.hpp"
#include "blum/rng.hpp"

namespace blum::baselines {

using encoder::Checkpoint;
using encoder::NamedTensor;

const char* embedder_kind_name(EmbedderKind k) {
    switch (k) {
        case EmbedderKind::tf: return "tf";
        case EmbedderKind::tfidf: return "tfidf";
        case EmbedderKind::sgns: return "sgns";
        case EmbedderKind::untrained: return "untrained";
        case EmbedderKind::enc: return "enc";
        case EmbedderKind::dec: return "dec";
        case EmbedderKind::ours: return "ours";
    }
    return "?";
}

EmbedderKind parse_embedder_kind(const std::string& s) {
    for (EmbedderKind k : {EmbedderKind::tf, EmbedderKind::tfidf, EmbedderKind::sgns, EmbedderKind::untrained,
                           EmbedderKind::enc, EmbedderKind::dec, EmbedderKind::ours})
        if (s == embedder_kind_name(k)) return k;
    throw std::invalid_argument("unknown embedder kind '" + s + "'");
}

CorpusStats CorpusStats::compute(std::span<const BehaviorSequence> corpus, int num_behaviors) {
    CorpusStats stats;
    stats.doc_freq.assign(static_cast<std::size_t>(num_behaviors), 0);
    std::vector<bool> seen(static_cast<std::size_t>(num_behaviors));
    for (const auto& seq : corpus) {
        std::fill(seen.begin(), seen.end(), false);
        for (auto t : seq.tokens)
            if (t >= 0 && t < num_behaviors) seen[static_cast<std::size_t>(t)] = true;
        for (int b = 0; b < num_behaviors; ++b)
            if (seen[static_cast<std::size_t>(b)]) ++stats.doc_freq[static_cast<std::size_t>(b)];
        ++stats.num_docs;
    }
    return stats;
}

Vec<float> tf_vector(const BehaviorSequence& seq, int num_behaviors) {
    if (seq.tokens.empty()) throw std::invalid_argument("tf_vector: empty sequence");
    Vec<float> v(static_cast<std::size_t>(num_behaviors), 0.0f);
    for (auto t : seq.tokens)
        if (t >= 0 && t < num_behaviors) v[static_cast<std::size_t>(t)] += 1.0f;
    const float inv = 1.0f / static_cast<float>(seq.tokens.size());
    for (auto& x : v) x *= inv;
    return v;
}

Vec<float> tfidf_vector(const BehaviorSequence& seq, const CorpusStats& stats) {
    Vec<float> v = tf_vector(seq, static_cast<int>(stats.doc_freq.size()));
    for (std::size_t b = 0; b < v.size(); ++b) {
        if (v[b] == 0.0f) continue;
        const double idf = std::log((1.0 + static_cast<double>(stats.num_docs)) /
                                    (1.0 + static_cast<double>(stats.doc_freq[b]))) +
                           1.0;
        v[b] = static_cast<float>(v[b] * idf);
    }
    return v;
}

// ---- SGNS ----

Mat<float> sgns_train(std::span<const BehaviorSequence> corpus, int num_behaviors, int dim, int window, int negatives,
                      int epochs, std::uint64_t seed) {
    if (corpus.empty()) throw std::invalid_argument("sgns_train: empty corpus");
    if (window < 1) throw std::invalid_argument("sgns_train: window must be >= 1");
    if (dim < 1 || negatives < 0 || epochs < 1) throw std::invalid_argument("sgns_train: bad hyperparameters");

    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_behaviors), 0);
    std::int64_t total_tokens = 0;
    bool has_pairs = false;
    for (const auto& s : corpus) {
        if (s.tokens.size() >= 2) has_pairs = true;
        for (auto t : s.tokens) {
            if (t < 0 || t >= num_behaviors) throw std::invalid_argument("sgns_train: token id out of range");
            ++counts[static_cast<std::size_t>(t)];
            ++total_tokens;
        }
    }
    if (!has_pairs) throw std::invalid_argument("sgns_train: no training pairs (all sequences have < 2 tokens)");

    // unigram^(3/4) negative sampling distribution
    std::vector<double> neg_cdf(static_cast<std::size_t>(num_behaviors));
    double acc = 0.0;
    for (int b = 0; b < num_behaviors; ++b) {
        acc += std::pow(static_cast<double>(counts[static_cast<std::size_t>(b)]), 0.75);
        neg_cdf[static_cast<std::size_t>(b)] = acc;
    }
    for (auto& c : neg_cdf) c /= acc;
    neg_cdf.back() = 1.0 + 1e-12;

    Rng rng(derive_seed(seed, "sgns"));
    Mat<float> in(num_behaviors, dim);
    Mat<float> out(num_behaviors, dim);
    for (auto& x : in.d) x = static_cast<float>((rng.uniform() - 0.5) / dim);

    auto sample_negative = [&]() {
        const double u = rng.uniform();
        const auto it = std::upper_bound(neg_cdf.begin(), neg_cdf.end(), u);
        return static_cast<int>(std::min<std::ptrdiff_t>(it - neg_cdf.begin(),
                                                         static_cast<std::ptrdiff_t>(neg_cdf.size()) - 1));
    };

    const double lr_start = 0.025;
    const double lr_min = 1e-4;
    const double total_work = static_cast<double>(total_tokens) * epochs;
    std::int64_t processed = 0;
    std::vector<float> neu1e(static_cast<std::size_t>(dim));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& s : corpus) {
            const int len = static_cast<int>(s.tokens.size());
            for (int c = 0; c < len; ++c, ++processed) {
                const double lr =
                    std::max(lr_min, lr_start * (1.0 - static_cast<double>(processed) / (total_work + 1.0)));
                const int reach = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(window)));
                const int center = s.tokens[static_cast<std::size_t>(c)];
                float* wc = in.row(center);
                for (int off = -reach; off <= reach; ++off) {
                    if (off == 0) continue;
                    const int cp = c + off;
                    if (cp < 0 || cp >= len) continue;
                    const int ctx = s.tokens[static_cast<std::size_t>(cp)];
                    std::fill(neu1e.begin(), neu1e.end(), 0.0f);
                    for (int k = 0; k <= negatives; ++k) {
                        int target;
                        float label;
                        if (k == 0) {
                            target = ctx;
                            label = 1.0f;
                        } else {
                            target = sample_negative();
                            if (target == ctx) continue;
                            label = 0.0f;
                        }
                        float* wt = out.row(target);
                        float dot = 0.0f;
                        for (int j = 0; j < dim; ++j) dot += wc[j] * wt[j];
                        const float f = 1.0f / (1.0f + std::exp(-dot));
                        const float g = (label - f) * static_cast<float>(lr);
                        for (int j = 0; j < dim; ++j) {
                            neu1e[static_cast<std::size_t>(j)] += g * wt[j];
                            wt[j] += g * wc[j];
                        }
                    }
                    for (int j = 0; j < dim; ++j) wc[j] += neu1e[static_cast<std::size_t>(j)];
                }
            }
        }
    }
    return in;
}

Mat<float> untrained_table(int num_behaviors, int dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("untrained_table: dim must be >= 1");
    Rng rng(derive_seed(seed, "untrained"));
    Mat<float> table(num_behaviors, dim);
    for (auto& x : table.d) x = static_cast<float>(rng.normal());
    return table;
}

// ---- embedders ----

Vec<float> Embedder::embed(const BehaviorSequence& seq, Pooling pooling) const {
    const auto all = embed_all(seq);
    for (int i = 0; i < encoder::kNumPoolings; ++i)
        if (encoder::kAllPoolings[i] == pooling) return all[static_cast<std::size_t>(i)];
    throw std::invalid_argument("embed: unknown pooling");
}

namespace {

class TfEmbedder final : public Embedder {
public:
    explicit TfEmbedder(int num_behaviors) : num_behaviors_(num_behaviors) {}

    EmbedderKind kind() const override { return EmbedderKind::tf; }
    int dim() const override { return num_behaviors_; }
    bool pooling_applies() const override { return false; }

    std::array<Vec<float>, encoder::kNumPoolings> embed_all(const BehaviorSequence& seq) const override {
        Vec<float> v = tf_vector(seq, num_behaviors_);
        return {v, v, v, v};
    }

    void save(const std::string& path) const override {
        Checkpoint ckpt;
        ckpt.kind = "tf";
        ckpt.meta = nlohmann::json{{"num_behaviors", num_behaviors_}};
        save_checkpoint(path, ckpt);
    }

private:
    int num_behaviors_;
};

class TfidfEmbedder final : public Embedder {
public:
    explicit TfidfEmbedder(CorpusStats stats) : stats_(std::move(stats)) {}

    EmbedderKind kind() const override { return EmbedderKind::tfidf; }
    int dim() const override { return static_cast<int>(stats_.doc_freq.size()); }
    bool pooling_applies() const override { return false; }

    std::array<Vec<float>, encoder::kNumPoolings> embed_all(const BehaviorSequence& seq) const override {
        Vec<float> v = tfidf_vector(seq, stats_);
        return {v, v, v, v};
    }

    void save(const std::string& path) const override {
        Checkpoint ckpt;
        ckpt.kind = "tfidf";
        ckpt.meta = nlohmann::json{{"num_docs", stats_.num_docs}};
        NamedTensor t;
        t.name = "doc_freq";
        t.shape = {static_cast<int>(stats_.doc_freq.size())};
        t.values.reserve(stats_.doc_freq.size());
        for (auto df : stats_.doc_freq) t.values.push_back(static_cast<float>(df));
        ckpt.tensors.push_back(std::move(t));
        save_checkpoint(path, ckpt);
    }

private:
    CorpusStats stats_;
};

class TableEmbedder final : public Embedder {
public:
    TableEmbedder(EmbedderKind kind, Mat<float> table) : kind_(kind), table_(std::move(table)) {}

    EmbedderKind kind() const override { return kind_; }
    int dim() const override { return table_.cols; }

    std::array<Vec<float>, encoder::kNumPoolings> embed_all(const BehaviorSequence& seq) const override {
        if (seq.tokens.empty()) throw std::invalid_argument("embed: empty sequence");
        Mat<float> vecs(seq.length(), table_.cols);
        for (int i = 0; i < seq.length(); ++i) {
            const auto t = seq.tokens[static_cast<std::size_t>(i)];
            if (t < 0 || t >= table_.rows)
                throw std::invalid_argument("embed: token id out of table range at position " + std::to_string(i));
            std::copy(table_.row(t), table_.row(t) + table_.cols, vecs.row(i));
        }
        std::array<Vec<float>, encoder::kNumPoolings> out;
        for (int p = 0; p < encoder::kNumPoolings; ++p)
            out[static_cast<std::size_t>(p)] = encoder::pool<float>(vecs, {}, encoder::kAllPoolings[p]);
        return out;
    }

    void save(const std::string& path) const override {
        Checkpoint ckpt;
        ckpt.kind = embedder_kind_name(kind_);
        NamedTensor t;
        t.name = "table";
        t.shape = {table_.rows, table_.cols};
        t.values = table_.d;
        ckpt.tensors.push_back(std::move(t));
        save_checkpoint(path, ckpt);
    }

private:
    EmbedderKind kind_;
    Mat<float> table_;
};

}  // namespace

std::unique_ptr<Embedder> make_tf_embedder(int num_behaviors) { return std::make_unique<TfEmbedder>(num_behaviors); }

std::unique_ptr<Embedder> make_tfidf_embedder(CorpusStats stats) {
    return std::make_unique<TfidfEmbedder>(std::move(stats));
}

std::unique_ptr<Embedder> make_table_embedder(EmbedderKind kind, Mat<float> table) {
    if (kind != EmbedderKind::sgns && kind != EmbedderKind::untrained)
        throw std::invalid_argument("make_table_embedder: kind must be sgns or untrained");
    return std::make_unique<TableEmbedder>(kind, std::move(table));
}

TransformerEmbedder::TransformerEmbedder(EmbedderKind kind, encoder::ObjectiveFlags objectives,
                                         encoder::ModelParameters<float> params)
    : kind_(kind), objectives_(objectives), params_(std::move(params)) {
    params_.config.validate();
}

int TransformerEmbedder::window_limit() const {
    if (params_.config.positional_mode == encoder::PositionalMode::learned_absolute) return params_.pos_table.rows;
    return params_.config.max_infer_len;
}

std::array<Vec<float>, encoder::kNumPoolings> TransformerEmbedder::embed_all(const BehaviorSequence& seq) const {
    if (seq.tokens.empty()) throw std::invalid_argument("embed: empty sequence");
    const int limit = window_limit();
    const int len = seq.length();

    auto pool_hidden = [](const Mat<float>& hidden) {
        std::array<Vec<float>, encoder::kNumPoolings> out;
        for (int p = 0; p < encoder::kNumPoolings; ++p)
            out[static_cast<std::size_t>(p)] = encoder::pool<float>(hidden, {}, encoder::kAllPoolings[p]);
        return out;
    };

    if (len <= limit) {
        const Mat<float> hidden = encoder::forward<float>(params_, seq.tokens, {});
        return pool_hidden(hidden);
    }
    if (params_.config.positional_mode != encoder::PositionalMode::learned_absolute)
        throw std::invalid_argument("embed: input length " + std::to_string(len) + " exceeds inference cap " +
                                    std::to_string(limit));

    // fixed-window model: non-overlapping segments, average of segment embeddings
    std::array<Vec<float>, encoder::kNumPoolings> sum;
    int segments = 0;
    for (int start = 0; start < len; start += limit) {
        const int end = std::min(len, start + limit);
        std::span<const std::int32_t> part(seq.tokens.data() + start, static_cast<std::size_t>(end - start));
        const Mat<float> hidden = encoder::forward<float>(params_, part, {});
        auto pooled = pool_hidden(hidden);
        if (segments == 0) {
            sum = std::move(pooled);
        } else {
            for (int p = 0; p < encoder::kNumPoolings; ++p)
                for (std::size_t j = 0; j < sum[static_cast<std::size_t>(p)].size(); ++j)
                    sum[static_cast<std::size_t>(p)][j] += pooled[static_cast<std::size_t>(p)][j];
        }
        ++segments;
    }
    for (auto& v : sum)
        for (auto& x : v) x /= static_cast<float>(segments);
    return sum;
}

std::vector<std::int32_t> TransformerEmbedder::predict_masked(std::span<const std::int32_t> input_tokens,
                                                              std::span<const int> positions) const {
    const Mat<float> hidden = encoder::forward<float>(params_, input_tokens, {});
    const Mat<float> logits = encoder::mbp_logits_at(params_, hidden, positions);
    std::vector<std::int32_t> out(static_cast<std::size_t>(logits.rows));
    for (int r = 0; r < logits.rows; ++r) {
        int arg = 0;
        const float* row = logits.row(r);
        for (int j = 1; j < logits.cols; ++j)
            if (row[j] > row[arg]) arg = j;
        out[static_cast<std::size_t>(r)] = arg;
    }
    return out;
}

void TransformerEmbedder::save(const std::string& path) const {
    encoder::save_model_checkpoint(path, embedder_kind_name(kind_), objectives_, params_);
}

std::unique_ptr<Embedder> load_embedder(const std::string& checkpoint_path) {
    const Checkpoint ckpt = encoder::load_checkpoint(checkpoint_path);
    const EmbedderKind kind = parse_embedder_kind(ckpt.kind);
    switch (kind) {
        case EmbedderKind::tf:
            return make_tf_embedder(ckpt.meta.at("num_behaviors").get<int>());
        case EmbedderKind::tfidf: {
            CorpusStats stats;
            stats.num_docs = ckpt.meta.at("num_docs").get<std::int64_t>();
            const NamedTensor& t = ckpt.tensor("doc_freq");
            stats.doc_freq.reserve(t.values.size());
            for (float v : t.values) stats.doc_freq.push_back(static_cast<std::int64_t>(v));
            return make_tfidf_embedder(std::move(stats));
        }
        case EmbedderKind::sgns:
        case EmbedderKind::untrained: {
            const NamedTensor& t = ckpt.tensor("table");
            if (t.shape.size() != 2) throw std::runtime_error("embedder table must be 2-dimensional");
            Mat<float> table(t.shape[0], t.shape[1]);
            table.d = t.values;
            return make_table_embedder(kind, std::move(table));
        }
        case EmbedderKind::enc:
        case EmbedderKind::dec:
        case EmbedderKind::ours: {
            encoder::LoadedModel m = encoder::load_model_checkpoint(checkpoint_path);
            return std::make_unique<TransformerEmbedder>(kind, m.objectives, std::move(m.params));
        }
    }
    throw std::runtime_error("unreachable");
}

}  // namespace blum::baselines
