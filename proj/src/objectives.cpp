#include "blum/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "blum/kernels.hpp"
#include "blum/synthgen.hpp"

namespace blum::objectives {

namespace kn = blum::kernels;
using encoder::ForwardCache;

MaskingPlan plan_random_masking(const BehaviorSequence& seq, double rate, Rng& rng) {
    if (seq.tokens.empty()) throw std::invalid_argument("plan_random_masking: empty sequence");
    if (rate <= 0.0 || rate >= 1.0) throw std::invalid_argument("plan_random_masking: rate must be in (0, 1)");
    MaskingPlan plan;
    plan.mode = MaskingPlan::Mode::random;
    for (int i = 0; i < seq.length(); ++i)
        if (rng.uniform() < rate) plan.positions.push_back(i);
    if (plan.positions.empty())
        plan.positions.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(seq.length()))));
    plan.targets.reserve(plan.positions.size());
    for (int p : plan.positions) plan.targets.push_back(seq.tokens[static_cast<std::size_t>(p)]);
    return plan;
}

std::vector<MaskingPlan> plan_stratified_masking(std::span<const BehaviorSequence> corpus, int per_behavior_budget,
                                                 Rng& rng) {
    if (corpus.empty()) throw std::invalid_argument("plan_stratified_masking: empty corpus");
    if (per_behavior_budget < 1) throw std::invalid_argument("plan_stratified_masking: budget must be >= 1");

    std::int32_t max_id = 0;
    for (const auto& s : corpus)
        for (auto t : s.tokens) max_id = std::max(max_id, t);

    // occurrence lists per behavior
    std::vector<std::vector<std::pair<int, int>>> occ(static_cast<std::size_t>(max_id) + 1);
    for (std::size_t si = 0; si < corpus.size(); ++si)
        for (std::size_t p = 0; p < corpus[si].tokens.size(); ++p)
            occ[static_cast<std::size_t>(corpus[si].tokens[p])].push_back(
                {static_cast<int>(si), static_cast<int>(p)});

    std::vector<int> cap(corpus.size());
    std::vector<int> used(corpus.size(), 0);
    for (std::size_t si = 0; si < corpus.size(); ++si)
        cap[si] = static_cast<int>(std::ceil(0.15 * static_cast<double>(corpus[si].tokens.size())));

    std::vector<MaskingPlan> plans(corpus.size());
    for (auto& pl : plans) pl.mode = MaskingPlan::Mode::stratified;

    for (auto& list : occ) {
        if (list.empty()) continue;
        rng.shuffle(list);
        int taken = 0;
        for (const auto& [si, pos] : list) {
            if (taken >= per_behavior_budget) break;
            if (used[static_cast<std::size_t>(si)] >= cap[static_cast<std::size_t>(si)]) continue;
            plans[static_cast<std::size_t>(si)].positions.push_back(pos);
            ++used[static_cast<std::size_t>(si)];
            ++taken;
        }
    }
    for (std::size_t si = 0; si < plans.size(); ++si) {
        auto& pl = plans[si];
        std::sort(pl.positions.begin(), pl.positions.end());
        pl.targets.reserve(pl.positions.size());
        for (int p : pl.positions) pl.targets.push_back(corpus[si].tokens[static_cast<std::size_t>(p)]);
    }
    return plans;
}

std::vector<std::int32_t> apply_masking(const BehaviorSequence& seq, const MaskingPlan& plan, std::int32_t mask_id) {
    std::vector<std::int32_t> input = seq.tokens;
    for (int p : plan.positions) input[static_cast<std::size_t>(p)] = mask_id;
    return input;
}

namespace {

template <class Real>
Real row_cross_entropy(const Real* logits, int n, std::int32_t target) {
    Real mx = logits[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
    Real lse = 0;
    for (int j = 0; j < n; ++j) lse += std::exp(logits[j] - mx);
    return std::log(lse) + mx - logits[target];
}

// d(mean CE)/d(logits) for one row, scaled by `w`
template <class Real>
void row_ce_grad(const Real* logits, int n, std::int32_t target, Real w, Real* out) {
    Real mx = logits[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
    Real lse = 0;
    for (int j = 0; j < n; ++j) lse += std::exp(logits[j] - mx);
    for (int j = 0; j < n; ++j) out[j] = std::exp(logits[j] - mx) / lse * w;
    out[target] -= w;
}

}  // namespace

template <class Real>
Real mbp_loss(const Mat<Real>& logits, std::span<const std::int32_t> targets) {
    if (logits.rows < 1) throw std::invalid_argument("mbp_loss: need at least one masked position");
    if (static_cast<std::size_t>(logits.rows) != targets.size())
        throw std::invalid_argument("mbp_loss: logits/targets mismatch");
    Real total = 0;
    for (int r = 0; r < logits.rows; ++r) {
        const auto t = targets[static_cast<std::size_t>(r)];
        if (t < 0 || t >= logits.cols)
            throw std::invalid_argument("mbp_loss: target id " + std::to_string(t) + " out of range");
        total += row_cross_entropy(logits.row(r), logits.cols, t);
    }
    return total / static_cast<Real>(logits.rows);
}

template <class Real>
Real next_behavior_loss(const Mat<Real>& logits, std::span<const std::int32_t> tokens) {
    if (tokens.size() < 2) throw std::invalid_argument("next_behavior_loss: sequence length must be >= 2");
    if (logits.rows < static_cast<int>(tokens.size()) - 1)
        throw std::invalid_argument("next_behavior_loss: logits rows too few");
    Real total = 0;
    const int n = static_cast<int>(tokens.size()) - 1;
    for (int t = 0; t < n; ++t) {
        const auto target = tokens[static_cast<std::size_t>(t) + 1];
        if (target < 0 || target >= logits.cols) throw std::invalid_argument("next_behavior_loss: target out of range");
        total += row_cross_entropy(logits.row(t), logits.cols, target);
    }
    return total / static_cast<Real>(n);
}

// ---- UCL ----

namespace {

template <class Real>
void validate_pairs(std::size_t n, std::span<const int> pair_of) {
    if (n < 4 || n % 2 != 0) throw std::invalid_argument("ucl_loss: need pairs from at least 2 users");
    if (pair_of.size() != n) throw std::invalid_argument("ucl_loss: pair map size mismatch");
    for (std::size_t k = 0; k < n; ++k) {
        const int p = pair_of[k];
        if (p < 0 || static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(p) == k ||
            pair_of[static_cast<std::size_t>(p)] != static_cast<int>(k))
            throw std::invalid_argument("ucl_loss: pair map is not an involution");
    }
}

}  // namespace

template <class Real>
Real ucl_loss_and_grad(const std::vector<Vec<Real>>& embeddings, std::span<const int> pair_of, Real temperature,
                       std::vector<Vec<Real>>* grads) {
    const std::size_t n = embeddings.size();
    validate_pairs<Real>(n, pair_of);
    if (!(temperature > Real(0))) throw std::invalid_argument("ucl_loss: temperature must be positive");

    std::vector<Real> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        Real s = 0;
        for (Real x : embeddings[i]) s += x * x;
        norms[i] = std::sqrt(s);
        if (norms[i] == Real(0))
            throw std::invalid_argument("ucl_loss: zero-norm embedding for sequence " + std::to_string(i));
    }

    Mat<Real> sim(static_cast<int>(n), static_cast<int>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            Real dot = 0;
            const auto& a = embeddings[i];
            const auto& b = embeddings[j];
            for (std::size_t t = 0; t < a.size(); ++t) dot += a[t] * b[t];
            const Real c = dot / (norms[i] * norms[j]);
            sim(static_cast<int>(i), static_cast<int>(j)) = c;
            sim(static_cast<int>(j), static_cast<int>(i)) = c;
        }

    if (grads) {
        grads->assign(n, Vec<Real>(embeddings[0].size(), Real(0)));
    }

    Mat<Real> dsim(static_cast<int>(n), static_cast<int>(n));
    Real loss = 0;
    const Real inv_n = Real(1) / static_cast<Real>(n);
    for (std::size_t i = 0; i < n; ++i) {
        Real mx = kn::neg_inf<Real>();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            mx = std::max(mx, sim(static_cast<int>(i), static_cast<int>(j)) / temperature);
        }
        Real denom = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            denom += std::exp(sim(static_cast<int>(i), static_cast<int>(j)) / temperature - mx);
        }
        const Real lse = std::log(denom) + mx;
        const std::size_t pos = static_cast<std::size_t>(pair_of[i]);
        loss += lse - sim(static_cast<int>(i), static_cast<int>(pos)) / temperature;

        if (grads) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    dsim(static_cast<int>(i), static_cast<int>(j)) = 0;
                    continue;
                }
                const Real p = std::exp(sim(static_cast<int>(i), static_cast<int>(j)) / temperature - mx) / denom;
                Real g = p / temperature;
                if (j == pos) g -= Real(1) / temperature;
                dsim(static_cast<int>(i), static_cast<int>(j)) = g * inv_n;
            }
        }
    }
    loss *= inv_n;

    if (grads) {
        // d cos(a,b)/da = b/(|a||b|) - cos * a/|a|^2, accumulated from every
        // ordered anchor pair
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const Real g = dsim(static_cast<int>(i), static_cast<int>(j));
                if (g == Real(0)) continue;
                const auto& a = embeddings[i];
                const auto& b = embeddings[j];
                const Real c = sim(static_cast<int>(i), static_cast<int>(j));
                const Real inv_ab = Real(1) / (norms[i] * norms[j]);
                const Real inv_aa = Real(1) / (norms[i] * norms[i]);
                const Real inv_bb = Real(1) / (norms[j] * norms[j]);
                auto& da = (*grads)[i];
                auto& db = (*grads)[j];
                for (std::size_t t = 0; t < a.size(); ++t) {
                    da[t] += g * (b[t] * inv_ab - c * a[t] * inv_aa);
                    db[t] += g * (a[t] * inv_ab - c * b[t] * inv_bb);
                }
            }
        }
    }
    return loss;
}

template <class Real>
Real ucl_loss(const std::vector<Vec<Real>>& embeddings, std::span<const int> pair_of, Real temperature) {
    return ucl_loss_and_grad<Real>(embeddings, pair_of, temperature, nullptr);
}

// ---- combined loss ----

template <class Real>
LossParts loss_and_gradients(std::span<const BatchSequence> batch, const ModelParameters<Real>& params,
                             const ObjectiveSpec& spec, ModelParameters<Real>* grads) {
    if (batch.empty()) throw std::invalid_argument("loss_and_gradients: empty batch");

    const std::size_t n = batch.size();
    std::vector<ForwardCache<Real>> caches(n);
    for (std::size_t i = 0; i < n; ++i)
        encoder::forward<Real>(params, batch[i].input_tokens, {}, &caches[i]);

    LossParts parts;

    // per-sequence upstream gradients
    std::vector<std::vector<int>> positions(n);
    std::vector<Mat<Real>> dlogits(n);
    std::vector<Mat<Real>> dhidden(n);

    // MBP: mean cross-entropy over every masked position in the batch
    std::int64_t total_masked = 0;
    if (spec.uses_mbp())
        for (const auto& b : batch) total_masked += static_cast<std::int64_t>(b.plan.positions.size());
    parts.masked_positions = total_masked;

    std::int64_t total_nbp = 0;
    if (spec.uses_nbp()) {
        for (const auto& b : batch)
            total_nbp += std::max<std::int64_t>(0, static_cast<std::int64_t>(b.clean_tokens.size()) - 1);
        if (total_nbp == 0) throw std::invalid_argument("loss_and_gradients: no next-behavior pairs in batch");
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = batch[i];
        std::vector<int> pos;
        std::vector<std::int32_t> tgt;
        if (spec.uses_mbp()) {
            pos.insert(pos.end(), b.plan.positions.begin(), b.plan.positions.end());
            tgt.insert(tgt.end(), b.plan.targets.begin(), b.plan.targets.end());
        }
        std::size_t mbp_rows = pos.size();
        if (spec.uses_nbp()) {
            for (std::size_t t = 0; t + 1 < b.clean_tokens.size(); ++t) {
                pos.push_back(static_cast<int>(t));
                tgt.push_back(b.clean_tokens[t + 1]);
            }
        }
        if (pos.empty()) continue;

        const Mat<Real> logits = encoder::mbp_logits_at(params, caches[i].hidden, pos);
        Mat<Real> dl(logits.rows, logits.cols);
        for (int r = 0; r < logits.rows; ++r) {
            const auto target = tgt[static_cast<std::size_t>(r)];
            if (target < 0 || target >= logits.cols)
                throw std::invalid_argument("loss_and_gradients: target id out of range");
            const bool is_mbp = static_cast<std::size_t>(r) < mbp_rows;
            const Real ce = row_cross_entropy(logits.row(r), logits.cols, target);
            if (is_mbp) {
                parts.mbp += static_cast<double>(ce) / static_cast<double>(total_masked);
                if (grads)
                    row_ce_grad(logits.row(r), logits.cols, target,
                                static_cast<Real>(spec.mbp_weight / static_cast<double>(total_masked)), dl.row(r));
            } else {
                parts.nbp += static_cast<double>(ce) / static_cast<double>(total_nbp);
                if (grads)
                    row_ce_grad(logits.row(r), logits.cols, target,
                                static_cast<Real>(spec.nbp_weight / static_cast<double>(total_nbp)), dl.row(r));
            }
        }
        positions[i] = std::move(pos);
        dlogits[i] = std::move(dl);
    }

    // UCL on mean-pooled final states of the masked inputs
    if (spec.uses_ucl()) {
        std::vector<Vec<Real>> embeddings(n);
        std::vector<int> pair_of(n);
        for (std::size_t i = 0; i < n; ++i) {
            embeddings[i] = encoder::pool<Real>(caches[i].hidden, {}, encoder::Pooling::mean);
            pair_of[i] = batch[i].pair_row;
        }
        std::vector<Vec<Real>> de;
        const Real ucl = ucl_loss_and_grad<Real>(embeddings, pair_of, static_cast<Real>(spec.temperature),
                                                 grads ? &de : nullptr);
        parts.ucl = static_cast<double>(ucl);
        if (grads) {
            for (std::size_t i = 0; i < n; ++i) {
                const int len = static_cast<int>(batch[i].input_tokens.size());
                if (dhidden[i].rows == 0) dhidden[i].resize(len, params.config.hidden_dim);
                for (auto& g : de[i]) g *= static_cast<Real>(spec.ucl_weight);
                encoder::mean_pool_backward<Real>({}, len, de[i], dhidden[i]);
            }
        }
    }

    parts.total = spec.mbp_weight * parts.mbp + spec.ucl_weight * parts.ucl + spec.nbp_weight * parts.nbp;
    if (!std::isfinite(parts.total)) {
        std::string term = !std::isfinite(parts.mbp) ? "MBP" : (!std::isfinite(parts.ucl) ? "UCL" : "NBP");
        throw std::runtime_error("loss_and_gradients: non-finite loss (diverging term: " + term + ")");
    }

    if (grads) {
        for (std::size_t i = 0; i < n; ++i) {
            const int len = static_cast<int>(batch[i].input_tokens.size());
            if (dhidden[i].rows == 0) dhidden[i].resize(len, params.config.hidden_dim);
            encoder::backward<Real>(params, caches[i], dhidden[i], positions[i], dlogits[i], *grads);
        }
    }
    return parts;
}

// ---- optimizer and training loop ----

namespace {

struct FlatRefs {
    std::vector<float*> ptr;
    std::vector<std::size_t> size;
};

FlatRefs flat_refs(ModelParameters<float>& p) {
    FlatRefs r;
    p.for_each_tensor([&](const std::string&, float* d, std::size_t n) {
        r.ptr.push_back(d);
        r.size.push_back(n);
    });
    return r;
}

}  // namespace

std::int32_t majority_behavior(std::span<const BehaviorSequence> streams) {
    std::unordered_map<std::int32_t, std::int64_t> counts;
    for (const auto& s : streams)
        for (auto t : s.tokens) ++counts[t];
    std::int32_t best = -1;
    std::int64_t best_count = -1;
    for (const auto& [id, c] : counts)
        if (c > best_count || (c == best_count && id < best)) {
            best = id;
            best_count = c;
        }
    return best;
}

TrainState train_model(const std::vector<BehaviorSequence>& streams, const ModelConfig& config,
                       const TrainHyper& hyper, std::uint64_t seed, const TrainCallbacks& callbacks) {
    config.validate();
    const int num_users = static_cast<int>(streams.size());
    if (num_users < 2) throw std::invalid_argument("train: need at least 2 users");

    Rng root(seed);

    // user split: 95% train / 5% validation by default
    std::vector<int> order(static_cast<std::size_t>(num_users));
    for (int i = 0; i < num_users; ++i) order[static_cast<std::size_t>(i)] = i;
    {
        Rng split_rng = root.stream("split");
        split_rng.shuffle(order);
    }
    int val_count = hyper.val_fraction > 0 ? std::max(1, static_cast<int>(std::lround(hyper.val_fraction * num_users)))
                                           : 0;
    if (val_count >= num_users) val_count = num_users - 1;
    std::vector<int> val_users(order.begin(), order.begin() + val_count);
    std::vector<int> train_users(order.begin() + val_count, order.end());
    const int train_count = static_cast<int>(train_users.size());
    if (train_count < hyper.batch_users)
        throw std::invalid_argument("train: corpus users (" + std::to_string(train_count) +
                                    " after validation split) below batch size " + std::to_string(hyper.batch_users));
    if (hyper.objective.uses_ucl() && hyper.batch_users < 2)
        throw std::invalid_argument("train: contrastive learning needs batch_users >= 2");

    TrainState state;
    state.params = ModelParameters<float>::init(config, derive_seed(seed, "init"));
    state.adam_m = ModelParameters<float>::zeros_like(config);
    state.adam_v = ModelParameters<float>::zeros_like(config);

    auto p_refs = flat_refs(state.params);
    auto m_refs = flat_refs(state.adam_m);
    auto v_refs = flat_refs(state.adam_v);

    const int steps_per_epoch = std::max(1, train_count / hyper.batch_users);
    const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * hyper.epochs;
    const std::int64_t warmup_steps =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(hyper.warmup_fraction * total_steps)));

    // one sequential stream for pairs and masks keeps the data order
    // identical across ablation variants
    Rng data_rng = root.stream("data");

    // fixed validation windows and masks, reused every epoch
    const std::int32_t mask_id = config.vocab_size - 2;
    struct ValItem {
        std::vector<std::int32_t> input;
        std::vector<int> positions;
        std::vector<std::int32_t> targets;
    };
    std::vector<ValItem> val_items;
    {
        Rng val_rng = root.stream("val");
        for (int u : val_users) {
            const auto& s = streams[static_cast<std::size_t>(u)];
            const int len = std::min(config.max_train_len, s.length());
            BehaviorSequence w = s.window(s.length() - len, s.length());
            MaskingPlan plan = plan_random_masking(w, hyper.mask_rate, val_rng);
            ValItem item;
            item.input = apply_masking(w, plan, mask_id);
            item.positions = plan.positions;
            item.targets = plan.targets;
            val_items.push_back(std::move(item));
        }
    }

    ModelParameters<float> grads = ModelParameters<float>::zeros_like(config);
    auto g_refs = flat_refs(grads);

    for (int epoch = 0; epoch < hyper.epochs && !state.diverged; ++epoch) {
        Rng epoch_rng = root.stream("order").stream(static_cast<std::uint64_t>(epoch));
        std::vector<int> shuffled = train_users;
        epoch_rng.shuffle(shuffled);

        double ep_mbp = 0, ep_ucl = 0, ep_total = 0;
        int ep_steps = 0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<BatchSequence> batch;
            batch.reserve(static_cast<std::size_t>(2 * hyper.batch_users));
            for (int b = 0; b < hyper.batch_users; ++b) {
                const auto& stream = streams[static_cast<std::size_t>(shuffled[static_cast<std::size_t>(
                    s * hyper.batch_users + b)])];
                auto [w1, w2] = logdata::sample_sequence_pair(stream, config.max_train_len, data_rng);
                for (auto* w : {&w1, &w2}) {
                    BatchSequence seq;
                    seq.clean_tokens = w->tokens;
                    seq.plan = plan_random_masking(*w, hyper.mask_rate, data_rng);
                    seq.input_tokens = apply_masking(*w, seq.plan, mask_id);
                    seq.pair_row = static_cast<int>(batch.size()) + (w == &w1 ? 1 : -1);
                    batch.push_back(std::move(seq));
                }
            }

            grads.zero();
            LossParts parts;
            try {
                parts = loss_and_gradients<float>(batch, state.params, hyper.objective, &grads);
            } catch (const std::runtime_error&) {
                state.diverged = true;  // keep the last finite parameters
                break;
            }

            if (hyper.grad_clip > 0) {
                double norm_sq = 0;
                for (std::size_t t = 0; t < g_refs.ptr.size(); ++t)
                    for (std::size_t i = 0; i < g_refs.size[t]; ++i)
                        norm_sq += static_cast<double>(g_refs.ptr[t][i]) * g_refs.ptr[t][i];
                const double norm = std::sqrt(norm_sq);
                if (norm > hyper.grad_clip) {
                    const float sc = static_cast<float>(hyper.grad_clip / norm);
                    for (std::size_t t = 0; t < g_refs.ptr.size(); ++t)
                        for (std::size_t i = 0; i < g_refs.size[t]; ++i) g_refs.ptr[t][i] *= sc;
                }
            }

            ++state.step;
            const double lr = hyper.learning_rate *
                              std::min(1.0, static_cast<double>(state.step) / static_cast<double>(warmup_steps));
            const double bc1 = 1.0 - std::pow(hyper.adam_beta1, static_cast<double>(state.step));
            const double bc2 = 1.0 - std::pow(hyper.adam_beta2, static_cast<double>(state.step));
            for (std::size_t t = 0; t < p_refs.ptr.size(); ++t) {
                float* p = p_refs.ptr[t];
                float* m = m_refs.ptr[t];
                float* v = v_refs.ptr[t];
                const float* g = g_refs.ptr[t];
                const float b1 = static_cast<float>(hyper.adam_beta1);
                const float b2 = static_cast<float>(hyper.adam_beta2);
                for (std::size_t i = 0; i < p_refs.size[t]; ++i) {
                    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                    const double mhat = m[i] / bc1;
                    const double vhat = v[i] / bc2;
                    p[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + hyper.adam_eps));
                }
            }

            state.history.push_back(parts);
            ep_mbp += parts.mbp;
            ep_ucl += parts.ucl;
            ep_total += parts.total;
            ++ep_steps;
        }
        if (ep_steps == 0) break;

        // validation MBP accuracy on the held-out user split
        double val_acc = 0.0;
        if (!val_items.empty()) {
            std::int64_t hits = 0, total = 0;
            for (const auto& item : val_items) {
                const Mat<float> hidden = encoder::forward<float>(state.params, item.input, {});
                const Mat<float> logits = encoder::mbp_logits_at(state.params, hidden, item.positions);
                for (int r = 0; r < logits.rows; ++r) {
                    int arg = 0;
                    const float* row = logits.row(r);
                    for (int j = 1; j < logits.cols; ++j)
                        if (row[j] > row[arg]) arg = j;
                    hits += arg == item.targets[static_cast<std::size_t>(r)];
                    ++total;
                }
            }
            val_acc = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
        }

        EpochMetrics em;
        em.epoch = epoch + 1;
        em.mbp = ep_mbp / ep_steps;
        em.ucl = ep_ucl / ep_steps;
        em.total = ep_total / ep_steps;
        em.val_accuracy = val_acc;
        state.epoch_metrics.push_back(em);
        if (callbacks.on_epoch) callbacks.on_epoch(em);
        if (callbacks.on_checkpoint) callbacks.on_checkpoint(state.params, epoch + 1);
    }
    return state;
}

// ---- explicit instantiations ----

template float mbp_loss(const Mat<float>&, std::span<const std::int32_t>);
template double mbp_loss(const Mat<double>&, std::span<const std::int32_t>);
template float next_behavior_loss(const Mat<float>&, std::span<const std::int32_t>);
template double next_behavior_loss(const Mat<double>&, std::span<const std::int32_t>);
template float ucl_loss(const std::vector<Vec<float>>&, std::span<const int>, float);
template double ucl_loss(const std::vector<Vec<double>>&, std::span<const int>, double);
template float ucl_loss_and_grad(const std::vector<Vec<float>>&, std::span<const int>, float,
                                 std::vector<Vec<float>>*);
template double ucl_loss_and_grad(const std::vector<Vec<double>>&, std::span<const int>, double,
                                  std::vector<Vec<double>>*);
template LossParts loss_and_gradients(std::span<const BatchSequence>, const ModelParameters<float>&,
                                      const ObjectiveSpec&, ModelParameters<float>*);
template LossParts loss_and_gradients(std::span<const BatchSequence>, const ModelParameters<double>&,
                                      const ObjectiveSpec&, ModelParameters<double>*);

}  // namespace blum::objectives
