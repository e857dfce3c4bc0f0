#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "blum/corpus.hpp"
#include "blum/encoder.hpp"
#include "blum/model.hpp"
#include "blum/tensor.hpp"

namespace blum::baselines {

using encoder::Pooling;
using logdata::BehaviorSequence;
using logdata::BehaviorVocab;

enum class EmbedderKind { tf, tfidf, sgns, untrained, enc, dec, ours };

const char* embedder_kind_name(EmbedderKind k);
EmbedderKind parse_embedder_kind(const std::string& s);

// Document frequency per behavior over a reference corpus (one document per
// user sequence).
struct CorpusStats {
    std::vector<std::int64_t> doc_freq;
    std::int64_t num_docs = 0;

    static CorpusStats compute(std::span<const BehaviorSequence> corpus, int num_behaviors);
};

// entry b = count(b) / L
Vec<float> tf_vector(const BehaviorSequence& seq, int num_behaviors);

// entry b = tf(b) * (ln((1 + N) / (1 + df(b))) + 1); add-one smoothing keeps
// unseen behaviors finite
Vec<float> tfidf_vector(const BehaviorSequence& seq, const CorpusStats& stats);

// Skip-gram with negative sampling; negatives from the unigram^(3/4)
// distribution, symmetric context window, deterministic under seed.
Mat<float> sgns_train(std::span<const BehaviorSequence> corpus, int num_behaviors, int dim, int window, int negatives,
                      int epochs, std::uint64_t seed);

// fixed random vector per behavior
Mat<float> untrained_table(int num_behaviors, int dim, std::uint64_t seed);

// Uniform embedding interface over all model kinds: every kind maps a
// behavior sequence to a finite fixed-length vector. embed_all returns the
// four pooling variants from a single pass; kinds without token-level
// vectors (tf, tfidf) return the same vector four times.
class Embedder {
public:
    virtual ~Embedder() = default;

    virtual EmbedderKind kind() const = 0;
    virtual int dim() const = 0;
    virtual bool pooling_applies() const { return true; }
    virtual bool has_mbp_head() const { return false; }

    virtual std::array<Vec<float>, encoder::kNumPoolings> embed_all(const BehaviorSequence& seq) const = 0;

    Vec<float> embed(const BehaviorSequence& seq, Pooling pooling) const;

    virtual void save(const std::string& path) const = 0;
};

std::unique_ptr<Embedder> make_tf_embedder(int num_behaviors);
std::unique_ptr<Embedder> make_tfidf_embedder(CorpusStats stats);
std::unique_ptr<Embedder> make_table_embedder(EmbedderKind kind, Mat<float> table);  // sgns | untrained

// Wraps trained transformer parameters. Fixed-window configurations
// (learned_absolute) embed long inputs by segment-and-average over
// non-overlapping max_train_len windows; ALiBi and position-free
// configurations run one pass up to max_infer_len.
class TransformerEmbedder : public Embedder {
public:
    TransformerEmbedder(EmbedderKind kind, encoder::ObjectiveFlags objectives,
                        encoder::ModelParameters<float> params);

    EmbedderKind kind() const override { return kind_; }
    int dim() const override { return params_.config.hidden_dim; }
    bool has_mbp_head() const override { return objectives_.mbp; }

    std::array<Vec<float>, encoder::kNumPoolings> embed_all(const BehaviorSequence& seq) const override;

    void save(const std::string& path) const override;

    // argmax behavior ids at `positions` given already-masked input tokens
    std::vector<std::int32_t> predict_masked(std::span<const std::int32_t> input_tokens,
                                             std::span<const int> positions) const;

    const encoder::ModelParameters<float>& params() const { return params_; }
    const encoder::ObjectiveFlags& objectives() const { return objectives_; }

    int window_limit() const;  // max single-pass input length

private:
    EmbedderKind kind_;
    encoder::ObjectiveFlags objectives_;
    encoder::ModelParameters<float> params_;
};

std::unique_ptr<Embedder> load_embedder(const std::string& checkpoint_path);

}  // namespace blum::baselines
