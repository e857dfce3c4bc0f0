#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "blum/model.hpp"
#include "blum/tensor.hpp"

namespace blum::encoder {

constexpr double kLayerNormEps = 1e-5;

template <class Real>
struct LayerCache {
    Mat<Real> x_in;      // residual stream entering the layer
    Vec<Real> ln1_mean, ln1_rstd;
    Mat<Real> ln1_out;
    Mat<Real> q, k, v;   // merged-head projections, L x hidden
    std::vector<Mat<Real>> probs;  // per head, L x L attention weights
    Mat<Real> attn_merged;         // concatenated head outputs before wo
    Mat<Real> x_mid;               // after attention residual
    Vec<Real> ln2_mean, ln2_rstd;
    Mat<Real> ln2_out;
    Mat<Real> ffn_z;  // pre-activation, L x ffn
    Mat<Real> ffn_a;  // gelu(ffn_z)
};

template <class Real>
struct ForwardCache {
    std::vector<std::int32_t> tokens;
    std::vector<std::uint8_t> mask;  // 1 = real token, 0 = PAD
    std::vector<LayerCache<Real>> layers;
    Mat<Real> x_final;  // residual stream entering the final norm
    Vec<Real> lnf_mean, lnf_rstd;
    Mat<Real> hidden;  // normalized final states (the forward result)
};

// Last-layer token vectors (L x hidden). `mask` may be empty (all real) and
// must be a block of 1s followed by 0s (suffix padding). PAD keys are never
// attended to, so PAD entries cannot influence non-PAD outputs. Pass a cache
// to retain activations for the backward pass.
template <class Real>
Mat<Real> forward(const ModelParameters<Real>& params, std::span<const std::int32_t> tokens,
                  std::span<const std::uint8_t> mask, ForwardCache<Real>* cache = nullptr);

// logits over the vocabulary for the given rows of `hidden`
template <class Real>
Mat<Real> mbp_logits_at(const ModelParameters<Real>& params, const Mat<Real>& hidden,
                        std::span<const int> positions);

template <class Real>
Mat<Real> mbp_logits(const ModelParameters<Real>& params, const Mat<Real>& hidden);

// Accumulates parameter gradients for one sequence. d_hidden is the upstream
// gradient on the final hidden states; d_logits_positions/d_logits carry the
// gradient arriving through the MBP head at those rows (may be empty).
template <class Real>
void backward(const ModelParameters<Real>& params, const ForwardCache<Real>& cache, const Mat<Real>& d_hidden,
              std::span<const int> logit_positions, const Mat<Real>& d_logits, ModelParameters<Real>& grads);

enum class Pooling { mean, max, weighted_mean, weighted_max };

const char* pooling_name(Pooling p);
Pooling parse_pooling(const std::string& s);
constexpr int kNumPoolings = 4;
extern const Pooling kAllPoolings[kNumPoolings];

// Reduces token vectors to one fixed-length user embedding. Weighted
// variants use recency-linear weights w_i proportional to (i + 1) over
// unmasked positions, normalized to sum 1; weighted max takes per-dimension
// maxima of the w_i-scaled vectors. Throws if every position is masked.
template <class Real>
Vec<Real> pool(const Mat<Real>& token_vectors, std::span<const std::uint8_t> mask, Pooling strategy);

// Gradient of mean pooling (the training-time strategy).
template <class Real>
void mean_pool_backward(std::span<const std::uint8_t> mask, int len, const Vec<Real>& d_embedding,
                        Mat<Real>& d_hidden);

// a.b / (|a||b|); throws on zero-norm input
template <class Real>
Real cosine_similarity(std::span<const Real> a, std::span<const Real> b);

struct UserEmbedding {
    std::vector<float> vector;
    Pooling pooling = Pooling::mean;
};

}  // namespace blum::encoder
