#include "blum/encoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "blum/kernels.hpp"

namespace blum::encoder {

namespace kn = blum::kernels;

const Pooling kAllPoolings[kNumPoolings] = {Pooling::mean, Pooling::max, Pooling::weighted_mean,
                                            Pooling::weighted_max};

const char* pooling_name(Pooling p) {
    switch (p) {
        case Pooling::mean: return "mean";
        case Pooling::max: return "max";
        case Pooling::weighted_mean: return "weighted_mean";
        case Pooling::weighted_max: return "weighted_max";
    }
    return "?";
}

Pooling parse_pooling(const std::string& s) {
    for (Pooling p : kAllPoolings)
        if (s == pooling_name(p)) return p;
    throw std::invalid_argument("unknown pooling '" + s + "'");
}

namespace {

template <class Real>
void split_head(const Mat<Real>& merged, int head, int head_dim, Mat<Real>& out) {
    out.resize(merged.rows, head_dim);
    for (int i = 0; i < merged.rows; ++i) {
        const Real* src = merged.row(i) + head * head_dim;
        std::copy(src, src + head_dim, out.row(i));
    }
}

template <class Real>
void merge_head(const Mat<Real>& part, int head, int head_dim, Mat<Real>& merged) {
    for (int i = 0; i < part.rows; ++i) {
        const Real* src = part.row(i);
        std::copy(src, src + head_dim, merged.row(i) + head * head_dim);
    }
}

template <class Real>
void linear(const Mat<Real>& x, const Mat<Real>& w, const Vec<Real>& b, Mat<Real>& out) {
    out.resize(x.rows, w.cols);
    kn::matmul(x.data(), w.data(), out.data(), x.rows, x.cols, w.cols);
    kn::bias_add_rows(out.data(), b.data(), out.rows, out.cols);
}

void check_mask(std::span<const std::uint8_t> mask, std::size_t len) {
    if (mask.empty()) return;
    if (mask.size() != len) throw std::invalid_argument("forward: mask length mismatch");
    bool seen_pad = false;
    bool any_real = false;
    for (std::uint8_t m : mask) {
        if (m) {
            if (seen_pad) throw std::invalid_argument("forward: mask must be suffix padding (1s then 0s)");
            any_real = true;
        } else {
            seen_pad = true;
        }
    }
    if (!any_real) throw std::invalid_argument("forward: all positions masked");
}

}  // namespace

template <class Real>
Mat<Real> forward(const ModelParameters<Real>& params, std::span<const std::int32_t> tokens,
                  std::span<const std::uint8_t> mask, ForwardCache<Real>* cache) {
    const ModelConfig& cfg = params.config;
    const int len = static_cast<int>(tokens.size());
    if (len < 1) throw std::invalid_argument("forward: empty input");
    if (len > cfg.max_infer_len)
        throw std::invalid_argument("forward: input length " + std::to_string(len) + " exceeds max_infer_len " +
                                    std::to_string(cfg.max_infer_len));
    if (cfg.positional_mode == PositionalMode::learned_absolute && len > params.pos_table.rows)
        throw std::invalid_argument("forward: input length " + std::to_string(len) +
                                    " exceeds learned position table of " + std::to_string(params.pos_table.rows));
    for (int i = 0; i < len; ++i)
        if (tokens[i] < 0 || tokens[i] >= cfg.vocab_size)
            throw std::invalid_argument("forward: token id out of range at position " + std::to_string(i));
    check_mask(mask, tokens.size());

    const int d = cfg.hidden_dim;
    const int heads = cfg.num_heads;
    const int dh = cfg.head_dim();
    const bool causal = cfg.attention_mode == AttentionMode::causal;
    const std::uint8_t* key_mask = mask.empty() ? nullptr : mask.data();
    const auto slopes = alibi_slopes(heads);
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

    ForwardCache<Real> local;
    ForwardCache<Real>& fc = cache ? *cache : local;
    fc.tokens.assign(tokens.begin(), tokens.end());
    fc.mask.assign(mask.begin(), mask.end());
    fc.layers.assign(static_cast<std::size_t>(cfg.num_layers), LayerCache<Real>{});

    Mat<Real> x(len, d);
    kn::gather_rows(params.embedding.data(), tokens.data(), x.data(), len, d);
    if (cfg.positional_mode == PositionalMode::learned_absolute)
        kn::add_rows(params.pos_table.data(), x.data(), len, d);

    Mat<Real> qh, kh, vh, oh, scores, tmp;
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerCache<Real>& lc = fc.layers[static_cast<std::size_t>(l)];
        const LayerParams<Real>& lp = params.layers[static_cast<std::size_t>(l)];
        lc.x_in = x;

        lc.ln1_mean.resize(static_cast<std::size_t>(len));
        lc.ln1_rstd.resize(static_cast<std::size_t>(len));
        lc.ln1_out.resize(len, d);
        kn::layer_norm_rows(lc.x_in.data(), lp.ln1_g.data(), lp.ln1_b.data(), lc.ln1_out.data(), lc.ln1_mean.data(),
                            lc.ln1_rstd.data(), len, d, static_cast<Real>(kLayerNormEps));

        linear(lc.ln1_out, lp.wq, lp.bq, lc.q);
        linear(lc.ln1_out, lp.wk, lp.bk, lc.k);
        linear(lc.ln1_out, lp.wv, lp.bv, lc.v);

        lc.probs.assign(static_cast<std::size_t>(heads), Mat<Real>{});
        lc.attn_merged.resize(len, d);
        for (int h = 0; h < heads; ++h) {
            split_head(lc.q, h, dh, qh);
            split_head(lc.k, h, dh, kh);
            split_head(lc.v, h, dh, vh);
            scores.resize(len, len);
            kn::matmul_nt(qh.data(), kh.data(), scores.data(), len, dh, len);
            const Real slope = cfg.use_alibi() ? static_cast<Real>(slopes[static_cast<std::size_t>(h)]) : Real(0);
            kn::attn_score_mask(scores.data(), len, scale, slope, key_mask, causal);
            kn::softmax_rows(scores.data(), len, len);
            oh.resize(len, dh);
            kn::matmul(scores.data(), vh.data(), oh.data(), len, len, dh);
            merge_head(oh, h, dh, lc.attn_merged);
            lc.probs[static_cast<std::size_t>(h)] = scores;
        }

        linear(lc.attn_merged, lp.wo, lp.bo, tmp);
        lc.x_mid = lc.x_in;
        kn::add_rows(tmp.data(), lc.x_mid.data(), len, d);

        lc.ln2_mean.resize(static_cast<std::size_t>(len));
        lc.ln2_rstd.resize(static_cast<std::size_t>(len));
        lc.ln2_out.resize(len, d);
        kn::layer_norm_rows(lc.x_mid.data(), lp.ln2_g.data(), lp.ln2_b.data(), lc.ln2_out.data(), lc.ln2_mean.data(),
                            lc.ln2_rstd.data(), len, d, static_cast<Real>(kLayerNormEps));

        linear(lc.ln2_out, lp.w1, lp.b1, lc.ffn_z);
        lc.ffn_a.resize(len, cfg.ffn_dim);
        kn::gelu_rows(lc.ffn_z.data(), lc.ffn_a.data(), len, cfg.ffn_dim);
        linear(lc.ffn_a, lp.w2, lp.b2, tmp);

        x = lc.x_mid;
        kn::add_rows(tmp.data(), x.data(), len, d);
    }

    fc.x_final = x;
    fc.lnf_mean.resize(static_cast<std::size_t>(len));
    fc.lnf_rstd.resize(static_cast<std::size_t>(len));
    Mat<Real> hidden(len, d);
    kn::layer_norm_rows(fc.x_final.data(), params.lnf_g.data(), params.lnf_b.data(), hidden.data(), fc.lnf_mean.data(),
                        fc.lnf_rstd.data(), len, d, static_cast<Real>(kLayerNormEps));
    fc.hidden = hidden;
    return hidden;
}

template <class Real>
Mat<Real> mbp_logits_at(const ModelParameters<Real>& params, const Mat<Real>& hidden, std::span<const int> positions) {
    const int d = params.config.hidden_dim;
    const int v = params.config.vocab_size;
    Mat<Real> sel(static_cast<int>(positions.size()), d);
    for (std::size_t r = 0; r < positions.size(); ++r) {
        const int pos = positions[r];
        if (pos < 0 || pos >= hidden.rows) throw std::invalid_argument("mbp_logits_at: position out of range");
        std::copy(hidden.row(pos), hidden.row(pos) + d, sel.row(static_cast<int>(r)));
    }
    Mat<Real> logits(sel.rows, v);
    kn::matmul(sel.data(), params.mbp_w.data(), logits.data(), sel.rows, d, v);
    kn::bias_add_rows(logits.data(), params.mbp_b.data(), logits.rows, v);
    return logits;
}

template <class Real>
Mat<Real> mbp_logits(const ModelParameters<Real>& params, const Mat<Real>& hidden) {
    Mat<Real> logits(hidden.rows, params.config.vocab_size);
    kn::matmul(hidden.data(), params.mbp_w.data(), logits.data(), hidden.rows, params.config.hidden_dim,
               params.config.vocab_size);
    kn::bias_add_rows(logits.data(), params.mbp_b.data(), logits.rows, logits.cols);
    return logits;
}

template <class Real>
void backward(const ModelParameters<Real>& params, const ForwardCache<Real>& cache, const Mat<Real>& d_hidden,
              std::span<const int> logit_positions, const Mat<Real>& d_logits, ModelParameters<Real>& grads) {
    const ModelConfig& cfg = params.config;
    const int len = static_cast<int>(cache.tokens.size());
    const int d = cfg.hidden_dim;
    const int heads = cfg.num_heads;
    const int dh = cfg.head_dim();
    const auto slopes = alibi_slopes(heads);
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

    Mat<Real> dY = d_hidden;
    if (dY.rows == 0) dY.resize(len, d);

    // MBP head: logits = hidden[pos] * mbp_w + mbp_b
    if (!logit_positions.empty()) {
        const int nr = static_cast<int>(logit_positions.size());
        Mat<Real> sel(nr, d);
        for (int r = 0; r < nr; ++r)
            std::copy(cache.hidden.row(logit_positions[static_cast<std::size_t>(r)]),
                      cache.hidden.row(logit_positions[static_cast<std::size_t>(r)]) + d, sel.row(r));
        kn::matmul_tn(sel.data(), d_logits.data(), grads.mbp_w.data(), nr, d, cfg.vocab_size, true);
        kn::col_sums(d_logits.data(), grads.mbp_b.data(), nr, cfg.vocab_size);
        Mat<Real> drows(nr, d);
        kn::matmul_nt(d_logits.data(), params.mbp_w.data(), drows.data(), nr, cfg.vocab_size, d);
        for (int r = 0; r < nr; ++r)
            kn::serial::add_row(drows.row(r), dY.row(logit_positions[static_cast<std::size_t>(r)]), d);
    }

    // final norm
    Mat<Real> dX(len, d);
    kn::layer_norm_backward_input(dY.data(), cache.x_final.data(), params.lnf_g.data(), cache.lnf_mean.data(),
                                  cache.lnf_rstd.data(), dX.data(), len, d);
    kn::layer_norm_backward_params(dY.data(), cache.x_final.data(), cache.lnf_mean.data(), cache.lnf_rstd.data(),
                                   grads.lnf_g.data(), grads.lnf_b.data(), len, d);

    Mat<Real> da, dz, dtmp, dmid, d_attn_merged, dq, dk, dv, dxin;
    Mat<Real> qh, kh, vh, doh, dqh, dkh, dvh, dprobs, dS;
    for (int l = cfg.num_layers - 1; l >= 0; --l) {
        const LayerCache<Real>& lc = cache.layers[static_cast<std::size_t>(l)];
        const LayerParams<Real>& lp = params.layers[static_cast<std::size_t>(l)];
        LayerParams<Real>& lg = grads.layers[static_cast<std::size_t>(l)];

        // ffn branch; dX is the gradient on x_out = x_mid + ffn(ln2(x_mid))
        da.resize(len, cfg.ffn_dim);
        kn::matmul_nt(dX.data(), lp.w2.data(), da.data(), len, d, cfg.ffn_dim);
        kn::matmul_tn(lc.ffn_a.data(), dX.data(), lg.w2.data(), len, cfg.ffn_dim, d, true);
        kn::col_sums(dX.data(), lg.b2.data(), len, d);
        dz.resize(len, cfg.ffn_dim);
        kn::gelu_backward(lc.ffn_z.data(), da.data(), dz.data(), len, cfg.ffn_dim);
        dtmp.resize(len, d);
        kn::matmul_nt(dz.data(), lp.w1.data(), dtmp.data(), len, cfg.ffn_dim, d);
        kn::matmul_tn(lc.ln2_out.data(), dz.data(), lg.w1.data(), len, d, cfg.ffn_dim, true);
        kn::col_sums(dz.data(), lg.b1.data(), len, cfg.ffn_dim);

        dmid = dX;  // residual passthrough
        Mat<Real> dmid_ln(len, d);
        kn::layer_norm_backward_input(dtmp.data(), lc.x_mid.data(), lp.ln2_g.data(), lc.ln2_mean.data(),
                                      lc.ln2_rstd.data(), dmid_ln.data(), len, d);
        kn::layer_norm_backward_params(dtmp.data(), lc.x_mid.data(), lc.ln2_mean.data(), lc.ln2_rstd.data(),
                                       lg.ln2_g.data(), lg.ln2_b.data(), len, d);
        kn::add_rows(dmid_ln.data(), dmid.data(), len, d);

        // attention branch; dmid is the gradient on x_mid = x_in + wo(attn)
        d_attn_merged.resize(len, d);
        kn::matmul_nt(dmid.data(), lp.wo.data(), d_attn_merged.data(), len, d, d);
        kn::matmul_tn(lc.attn_merged.data(), dmid.data(), lg.wo.data(), len, d, d, true);
        kn::col_sums(dmid.data(), lg.bo.data(), len, d);

        dq.resize(len, d);
        dk.resize(len, d);
        dv.resize(len, d);
        for (int h = 0; h < heads; ++h) {
            split_head(lc.q, h, dh, qh);
            split_head(lc.k, h, dh, kh);
            split_head(lc.v, h, dh, vh);
            split_head(d_attn_merged, h, dh, doh);
            const Mat<Real>& probs = lc.probs[static_cast<std::size_t>(h)];

            dprobs.resize(len, len);
            kn::matmul_nt(doh.data(), vh.data(), dprobs.data(), len, dh, len);
            dvh.resize(len, dh);
            kn::matmul_tn(probs.data(), doh.data(), dvh.data(), len, len, dh);

            dS.resize(len, len);
            kn::softmax_backward_rows(probs.data(), dprobs.data(), dS.data(), len, len);
            // scores were scale * (qh kh^T) + bias; bias is constant
            for (auto& s : dS.d) s *= scale;

            dqh.resize(len, dh);
            kn::matmul(dS.data(), kh.data(), dqh.data(), len, len, dh);
            dkh.resize(len, dh);
            kn::matmul_tn(dS.data(), qh.data(), dkh.data(), len, len, dh);

            merge_head(dqh, h, dh, dq);
            merge_head(dkh, h, dh, dk);
            merge_head(dvh, h, dh, dv);
        }

        dtmp.resize(len, d);  // gradient on ln1_out
        kn::matmul_nt(dq.data(), lp.wq.data(), dtmp.data(), len, d, d);
        kn::matmul_nt(dk.data(), lp.wk.data(), dtmp.data(), len, d, d, true);
        kn::matmul_nt(dv.data(), lp.wv.data(), dtmp.data(), len, d, d, true);
        kn::matmul_tn(lc.ln1_out.data(), dq.data(), lg.wq.data(), len, d, d, true);
        kn::matmul_tn(lc.ln1_out.data(), dk.data(), lg.wk.data(), len, d, d, true);
        kn::matmul_tn(lc.ln1_out.data(), dv.data(), lg.wv.data(), len, d, d, true);
        kn::col_sums(dq.data(), lg.bq.data(), len, d);
        kn::col_sums(dk.data(), lg.bk.data(), len, d);
        kn::col_sums(dv.data(), lg.bv.data(), len, d);

        dxin = dmid;  // residual passthrough
        Mat<Real> dxin_ln(len, d);
        kn::layer_norm_backward_input(dtmp.data(), lc.x_in.data(), lp.ln1_g.data(), lc.ln1_mean.data(),
                                      lc.ln1_rstd.data(), dxin_ln.data(), len, d);
        kn::layer_norm_backward_params(dtmp.data(), lc.x_in.data(), lc.ln1_mean.data(), lc.ln1_rstd.data(),
                                       lg.ln1_g.data(), lg.ln1_b.data(), len, d);
        kn::add_rows(dxin_ln.data(), dxin.data(), len, d);

        dX = dxin;
    }

    kn::scatter_add_rows(grads.embedding.data(), cache.tokens.data(), dX.data(), len, d);
    if (cfg.positional_mode == PositionalMode::learned_absolute)
        kn::add_rows(dX.data(), grads.pos_table.data(), len, d);
}

// ---- pooling ----

template <class Real>
Vec<Real> pool(const Mat<Real>& token_vectors, std::span<const std::uint8_t> mask, Pooling strategy) {
    const int len = token_vectors.rows;
    const int d = token_vectors.cols;
    std::vector<int> live;
    live.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i)
        if (mask.empty() || mask[static_cast<std::size_t>(i)]) live.push_back(i);
    if (live.empty()) throw std::invalid_argument("pool: all positions masked");

    Vec<Real> out(static_cast<std::size_t>(d), Real(0));
    switch (strategy) {
        case Pooling::mean: {
            for (int i : live)
                for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += token_vectors(i, j);
            const Real inv = Real(1) / static_cast<Real>(live.size());
            for (auto& x : out) x *= inv;
            break;
        }
        case Pooling::max: {
            for (int j = 0; j < d; ++j) {
                Real mx = token_vectors(live[0], j);
                for (std::size_t r = 1; r < live.size(); ++r) mx = std::max(mx, token_vectors(live[r], j));
                out[static_cast<std::size_t>(j)] = mx;
            }
            break;
        }
        case Pooling::weighted_mean:
        case Pooling::weighted_max: {
            // recency-linear weights over unmasked positions, normalized
            Real wsum = 0;
            for (int i : live) wsum += static_cast<Real>(i + 1);
            if (strategy == Pooling::weighted_mean) {
                for (int i : live) {
                    const Real w = static_cast<Real>(i + 1) / wsum;
                    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += w * token_vectors(i, j);
                }
            } else {
                for (int j = 0; j < d; ++j) {
                    Real mx = static_cast<Real>(live[0] + 1) / wsum * token_vectors(live[0], j);
                    for (std::size_t r = 1; r < live.size(); ++r) {
                        const int i = live[r];
                        mx = std::max(mx, static_cast<Real>(i + 1) / wsum * token_vectors(i, j));
                    }
                    out[static_cast<std::size_t>(j)] = mx;
                }
            }
            break;
        }
    }
    return out;
}

template <class Real>
void mean_pool_backward(std::span<const std::uint8_t> mask, int len, const Vec<Real>& d_embedding,
                        Mat<Real>& d_hidden) {
    int count = 0;
    for (int i = 0; i < len; ++i)
        if (mask.empty() || mask[static_cast<std::size_t>(i)]) ++count;
    const Real inv = Real(1) / static_cast<Real>(count);
    for (int i = 0; i < len; ++i) {
        if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < d_hidden.cols; ++j) d_hidden(i, j) += d_embedding[static_cast<std::size_t>(j)] * inv;
    }
}

template <class Real>
Real cosine_similarity(std::span<const Real> a, std::span<const Real> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
    Real dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == Real(0) || nb == Real(0)) throw std::invalid_argument("cosine_similarity: zero-norm input");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---- explicit instantiations ----

template Mat<float> forward(const ModelParameters<float>&, std::span<const std::int32_t>,
                            std::span<const std::uint8_t>, ForwardCache<float>*);
template Mat<double> forward(const ModelParameters<double>&, std::span<const std::int32_t>,
                             std::span<const std::uint8_t>, ForwardCache<double>*);
template Mat<float> mbp_logits_at(const ModelParameters<float>&, const Mat<float>&, std::span<const int>);
template Mat<double> mbp_logits_at(const ModelParameters<double>&, const Mat<double>&, std::span<const int>);
template Mat<float> mbp_logits(const ModelParameters<float>&, const Mat<float>&);
template Mat<double> mbp_logits(const ModelParameters<double>&, const Mat<double>&);
template void backward(const ModelParameters<float>&, const ForwardCache<float>&, const Mat<float>&,
                       std::span<const int>, const Mat<float>&, ModelParameters<float>&);
template void backward(const ModelParameters<double>&, const ForwardCache<double>&, const Mat<double>&,
                       std::span<const int>, const Mat<double>&, ModelParameters<double>&);
template Vec<float> pool(const Mat<float>&, std::span<const std::uint8_t>, Pooling);
template Vec<double> pool(const Mat<double>&, std::span<const std::uint8_t>, Pooling);
template void mean_pool_backward(std::span<const std::uint8_t>, int, const Vec<float>&, Mat<float>&);
template void mean_pool_backward(std::span<const std::uint8_t>, int, const Vec<double>&, Mat<double>&);
template float cosine_similarity(std::span<const float>, std::span<const float>);
template double cosine_similarity(std::span<const double>, std::span<const double>);

}  // namespace blum::encoder
