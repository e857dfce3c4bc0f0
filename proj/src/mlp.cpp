#include "blum/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "blum/kernels.hpp"
#include "blum/rng.hpp"

namespace blum::evalharness {

namespace kn = blum::kernels;

double auc_score(std::span<const float> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty()) throw std::invalid_argument("auc_score: bad inputs");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t num_pos = 0, num_neg = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (labels[idx[t]] == 1) {
                rank_sum_pos += avg_rank;
                ++num_pos;
            } else {
                ++num_neg;
            }
        }
        i = j;
    }
    if (num_pos == 0 || num_neg == 0) throw std::invalid_argument("auc_score: needs both classes");
    return (rank_sum_pos - static_cast<double>(num_pos) * (num_pos + 1) / 2.0) /
           (static_cast<double>(num_pos) * static_cast<double>(num_neg));
}

void MlpSpec::validate() const {
    if (folds != 5) throw std::invalid_argument("MlpSpec: folds must be 5");
    if (search_draws < 20) throw std::invalid_argument("MlpSpec: search must draw >= 20 configurations");
    if (hidden_sizes.empty() || max_hidden_layers < 1) throw std::invalid_argument("MlpSpec: bad layer space");
    if (!(lr_min > 0) || lr_max < lr_min) throw std::invalid_argument("MlpSpec: bad learning-rate range");
}

void MlpClassifier::fit(const Mat<float>& x, std::span<const int> y, const MlpConfig& config, int epochs, int batch,
                        std::uint64_t seed) {
    const int n = x.rows;
    const int in_dim = x.cols;
    if (n < 2 || static_cast<std::size_t>(n) != y.size()) throw std::invalid_argument("MlpClassifier: bad inputs");

    // z-score features with training statistics
    feat_mean_.assign(static_cast<std::size_t>(in_dim), 0.0f);
    feat_scale_.assign(static_cast<std::size_t>(in_dim), 1.0f);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < in_dim; ++j) feat_mean_[static_cast<std::size_t>(j)] += x(i, j);
    for (auto& m : feat_mean_) m /= static_cast<float>(n);
    for (int j = 0; j < in_dim; ++j) {
        double var = 0;
        for (int i = 0; i < n; ++i) {
            const double d = x(i, j) - feat_mean_[static_cast<std::size_t>(j)];
            var += d * d;
        }
        feat_scale_[static_cast<std::size_t>(j)] = static_cast<float>(1.0 / std::sqrt(var / n + 1e-8));
    }
    Mat<float> xs(n, in_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < in_dim; ++j)
            xs(i, j) = (x(i, j) - feat_mean_[static_cast<std::size_t>(j)]) * feat_scale_[static_cast<std::size_t>(j)];

    std::vector<int> dims;
    dims.push_back(in_dim);
    for (int h : config.hidden) dims.push_back(h);
    dims.push_back(1);
    const int num_layers = static_cast<int>(dims.size()) - 1;

    Rng rng(derive_seed(seed, "mlp"));
    weights_.clear();
    biases_.clear();
    for (int l = 0; l < num_layers; ++l) {
        Mat<float> w(dims[static_cast<std::size_t>(l)], dims[static_cast<std::size_t>(l) + 1]);
        const double std = std::sqrt(2.0 / dims[static_cast<std::size_t>(l)]);
        for (auto& v : w.d) v = static_cast<float>(rng.normal(0.0, std));
        weights_.push_back(std::move(w));
        biases_.emplace_back(static_cast<std::size_t>(dims[static_cast<std::size_t>(l) + 1]), 0.0f);
    }

    std::vector<Mat<float>> adam_m, adam_v;
    std::vector<Vec<float>> adam_mb, adam_vb;
    for (int l = 0; l < num_layers; ++l) {
        adam_m.emplace_back(weights_[static_cast<std::size_t>(l)].rows, weights_[static_cast<std::size_t>(l)].cols);
        adam_v.emplace_back(weights_[static_cast<std::size_t>(l)].rows, weights_[static_cast<std::size_t>(l)].cols);
        adam_mb.emplace_back(biases_[static_cast<std::size_t>(l)].size(), 0.0f);
        adam_vb.emplace_back(biases_[static_cast<std::size_t>(l)].size(), 0.0f);
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    std::int64_t step = 0;

    std::vector<Mat<float>> acts(static_cast<std::size_t>(num_layers) + 1);
    std::vector<Mat<float>> zs(static_cast<std::size_t>(num_layers));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < n; start += batch) {
            const int bs = std::min(batch, n - start);
            acts[0].resize(bs, in_dim);
            for (int r = 0; r < bs; ++r)
                std::copy(xs.row(order[static_cast<std::size_t>(start + r)]),
                          xs.row(order[static_cast<std::size_t>(start + r)]) + in_dim, acts[0].row(r));

            for (int l = 0; l < num_layers; ++l) {
                auto& w = weights_[static_cast<std::size_t>(l)];
                zs[static_cast<std::size_t>(l)].resize(bs, w.cols);
                kn::matmul(acts[static_cast<std::size_t>(l)].data(), w.data(), zs[static_cast<std::size_t>(l)].data(),
                           bs, w.rows, w.cols);
                kn::bias_add_rows(zs[static_cast<std::size_t>(l)].data(), biases_[static_cast<std::size_t>(l)].data(),
                                  bs, w.cols);
                acts[static_cast<std::size_t>(l) + 1] = zs[static_cast<std::size_t>(l)];
                if (l + 1 < num_layers)
                    for (auto& v : acts[static_cast<std::size_t>(l) + 1].d) v = std::max(0.0f, v);
            }

            // logistic loss gradient on the single output column
            Mat<float> delta(bs, 1);
            for (int r = 0; r < bs; ++r) {
                const float z = acts[static_cast<std::size_t>(num_layers)](r, 0);
                const float p = 1.0f / (1.0f + std::exp(-z));
                delta(r, 0) = (p - static_cast<float>(y[static_cast<std::size_t>(order[static_cast<std::size_t>(
                                       start + r)])])) /
                              static_cast<float>(bs);
            }

            ++step;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
            for (int l = num_layers - 1; l >= 0; --l) {
                auto& w = weights_[static_cast<std::size_t>(l)];
                Mat<float> dw(w.rows, w.cols);
                kn::matmul_tn(acts[static_cast<std::size_t>(l)].data(), delta.data(), dw.data(), bs, w.rows, w.cols);
                Vec<float> db(static_cast<std::size_t>(w.cols), 0.0f);
                kn::col_sums(delta.data(), db.data(), bs, w.cols);
                if (config.l2 > 0)
                    for (std::size_t i = 0; i < dw.d.size(); ++i)
                        dw.d[i] += static_cast<float>(config.l2) * w.d[i];

                Mat<float> prev_delta;
                if (l > 0) {
                    prev_delta.resize(bs, w.rows);
                    kn::matmul_nt(delta.data(), w.data(), prev_delta.data(), bs, w.cols, w.rows);
                    for (int r = 0; r < bs; ++r)
                        for (int j = 0; j < w.rows; ++j)
                            if (zs[static_cast<std::size_t>(l) - 1](r, j) <= 0.0f) prev_delta(r, j) = 0.0f;
                }

                auto adam = [&](float* p, float* m, float* v, const float* g, std::size_t count) {
                    for (std::size_t i = 0; i < count; ++i) {
                        m[i] = b1 * m[i] + (1 - b1) * g[i];
                        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
                        p[i] -= static_cast<float>(config.learning_rate * (m[i] / bc1) /
                                                   (std::sqrt(v[i] / bc2) + eps));
                    }
                };
                adam(w.data(), adam_m[static_cast<std::size_t>(l)].data(), adam_v[static_cast<std::size_t>(l)].data(),
                     dw.data(), dw.d.size());
                adam(biases_[static_cast<std::size_t>(l)].data(), adam_mb[static_cast<std::size_t>(l)].data(),
                     adam_vb[static_cast<std::size_t>(l)].data(), db.data(), db.size());

                if (l > 0) delta = std::move(prev_delta);
            }
        }
    }
}

std::vector<float> MlpClassifier::decision_scores(const Mat<float>& x) const {
    if (weights_.empty()) throw std::logic_error("MlpClassifier: not fitted");
    const int n = x.rows;
    Mat<float> a(n, x.cols);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < x.cols; ++j)
            a(i, j) = (x(i, j) - feat_mean_[static_cast<std::size_t>(j)]) * feat_scale_[static_cast<std::size_t>(j)];
    Mat<float> next;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const auto& w = weights_[l];
        next.resize(n, w.cols);
        kn::matmul(a.data(), w.data(), next.data(), n, w.rows, w.cols);
        kn::bias_add_rows(next.data(), biases_[l].data(), n, w.cols);
        if (l + 1 < weights_.size())
            for (auto& v : next.d) v = std::max(0.0f, v);
        a = next;
    }
    std::vector<float> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = a(i, 0);
    return out;
}

namespace {

MlpConfig draw_config(const MlpSpec& spec, Rng& rng) {
    MlpConfig c;
    const int layers = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.max_hidden_layers)));
    for (int l = 0; l < layers; ++l)
        c.hidden.push_back(
            spec.hidden_sizes[rng.uniform_index(static_cast<std::uint64_t>(spec.hidden_sizes.size()))]);
    c.learning_rate = std::exp(rng.uniform(std::log(spec.lr_min), std::log(spec.lr_max)));
    c.l2 = spec.l2[rng.uniform_index(static_cast<std::uint64_t>(spec.l2.size()))];
    return c;
}

}  // namespace

MlpConfig random_search_cv(const Mat<float>& x, std::span<const int> y, const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int n = x.rows;
    if (n < spec.folds * 2) throw std::invalid_argument("random_search_cv: too few samples for 5 folds");

    Rng rng(derive_seed(seed, "search"));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    MlpConfig best;
    double best_auc = -1.0;
    for (int draw = 0; draw < spec.search_draws; ++draw) {
        const MlpConfig cand = draw_config(spec, rng);
        double mean_auc = 0.0;
        bool valid = true;
        for (int fold = 0; fold < spec.folds; ++fold) {
            const int lo = static_cast<int>(static_cast<std::int64_t>(n) * fold / spec.folds);
            const int hi = static_cast<int>(static_cast<std::int64_t>(n) * (fold + 1) / spec.folds);
            Mat<float> xtr(n - (hi - lo), x.cols), xva(hi - lo, x.cols);
            std::vector<int> ytr, yva;
            int tr = 0, va = 0;
            for (int i = 0; i < n; ++i) {
                const int row = order[static_cast<std::size_t>(i)];
                if (i >= lo && i < hi) {
                    std::copy(x.row(row), x.row(row) + x.cols, xva.row(va++));
                    yva.push_back(y[static_cast<std::size_t>(row)]);
                } else {
                    std::copy(x.row(row), x.row(row) + x.cols, xtr.row(tr++));
                    ytr.push_back(y[static_cast<std::size_t>(row)]);
                }
            }
            MlpClassifier clf;
            clf.fit(xtr, ytr, cand, spec.epochs, spec.batch, derive_seed(seed, "fold", static_cast<std::uint64_t>(
                                                                             draw * spec.folds + fold)));
            const auto scores = clf.decision_scores(xva);
            try {
                mean_auc += auc_score(scores, yva);
            } catch (const std::invalid_argument&) {
                valid = false;  // a fold without both classes
                break;
            }
        }
        if (!valid) continue;
        mean_auc /= spec.folds;
        if (mean_auc > best_auc) {
            best_auc = mean_auc;
            best = cand;
        }
    }
    if (best_auc < 0) throw std::runtime_error("random_search_cv: no valid configuration found");
    return best;
}

double mlp_auc_protocol(const Mat<float>& x, std::span<const int> y, const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int n = x.rows;
    if (n < 20) throw std::invalid_argument("mlp_auc_protocol: too few samples");

    Rng rng(derive_seed(seed, "split"));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int test_n = std::max(1, n / 5);

    Mat<float> xtr(n - test_n, x.cols), xte(test_n, x.cols);
    std::vector<int> ytr, yte;
    for (int i = 0; i < n; ++i) {
        const int row = order[static_cast<std::size_t>(i)];
        if (i < test_n) {
            std::copy(x.row(row), x.row(row) + x.cols, xte.row(i));
            yte.push_back(y[static_cast<std::size_t>(row)]);
        } else {
            std::copy(x.row(row), x.row(row) + x.cols, xtr.row(i - test_n));
            ytr.push_back(y[static_cast<std::size_t>(row)]);
        }
    }

    const MlpConfig best = random_search_cv(xtr, ytr, spec, derive_seed(seed, "cv"));
    MlpClassifier clf;
    clf.fit(xtr, ytr, best, spec.epochs, spec.batch, derive_seed(seed, "refit"));
    return auc_score(clf.decision_scores(xte), yte);
}

}  // namespace blum::evalharness
