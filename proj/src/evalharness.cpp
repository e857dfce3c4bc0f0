#include "blum/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace blum::evalharness {

using baselines::TransformerEmbedder;
using objectives::MaskingPlan;

// ---- MBP ----

namespace {

std::vector<MaskingPlan> make_plans(std::span<const BehaviorSequence> windows, MaskingMode mode,
                                    const logdata::BehaviorVocab& vocab, Rng& rng, double mask_rate,
                                    int stratified_budget) {
    if (mode == MaskingMode::random) {
        std::vector<MaskingPlan> plans;
        plans.reserve(windows.size());
        for (const auto& w : windows) plans.push_back(objectives::plan_random_masking(w, mask_rate, rng));
        return plans;
    }
    int budget = stratified_budget;
    if (budget <= 0) {
        std::int64_t total = 0;
        for (const auto& w : windows) total += w.length();
        budget = std::max<std::int64_t>(1, std::llround(mask_rate * static_cast<double>(total) /
                                                        std::max(1, vocab.num_behaviors())));
    }
    return objectives::plan_stratified_masking(windows, budget, rng);
}

}  // namespace

MbpResult eval_mbp(const Embedder& model, std::span<const BehaviorSequence> windows, MaskingMode mode,
                   const logdata::BehaviorVocab& vocab, Rng& rng, double mask_rate, int stratified_budget) {
    if (!model.has_mbp_head())
        throw std::invalid_argument("eval_mbp: model '" + std::string(baselines::embedder_kind_name(model.kind())) +
                                    "' has no Masked Behavior Prediction objective");
    const auto* tm = dynamic_cast<const TransformerEmbedder*>(&model);
    if (tm == nullptr) throw std::invalid_argument("eval_mbp: model does not expose MBP logits");

    const auto plans = make_plans(windows, mode, vocab, rng, mask_rate, stratified_budget);
    MbpResult res;
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (plans[i].positions.empty()) continue;
        const auto input = objectives::apply_masking(windows[i], plans[i], vocab.mask_id());
        const auto preds = tm->predict_masked(input, plans[i].positions);
        for (std::size_t r = 0; r < preds.size(); ++r) {
            hits += preds[r] == plans[i].targets[r];
            ++res.masked_positions;
        }
    }
    res.accuracy = res.masked_positions ? static_cast<double>(hits) / static_cast<double>(res.masked_positions) : 0.0;
    return res;
}

MbpResult majority_vote_mbp(std::span<const BehaviorSequence> windows, MaskingMode mode,
                            const logdata::BehaviorVocab& vocab, Rng& rng, double mask_rate, int stratified_budget,
                            std::int32_t majority_id) {
    const auto plans = make_plans(windows, mode, vocab, rng, mask_rate, stratified_budget);
    if (majority_id < 0) {
        std::unordered_map<std::int32_t, std::int64_t> counts;
        for (const auto& p : plans)
            for (auto t : p.targets) ++counts[t];
        std::int64_t best = -1;
        for (const auto& [id, c] : counts)
            if (c > best || (c == best && id < majority_id)) {
                majority_id = id;
                best = c;
            }
    }
    MbpResult res;
    std::int64_t hits = 0;
    for (const auto& p : plans)
        for (auto t : p.targets) {
            hits += t == majority_id;
            ++res.masked_positions;
        }
    res.accuracy = res.masked_positions ? static_cast<double>(hits) / static_cast<double>(res.masked_positions) : 0.0;
    return res;
}

// ---- URSA ----

std::array<UrsaResult, encoder::kNumPoolings> eval_ursa_all(const Embedder& embedder,
                                                            std::span<const BehaviorSequence> streams, int window_len,
                                                            int repetitions, Rng& rng) {
    if (streams.size() < 2) throw std::invalid_argument("eval_ursa: need at least 2 users");
    for (const auto& s : streams)
        if (s.length() < 2)
            throw std::invalid_argument("eval_ursa: user " + s.user_id + " lacks two disjoint windows");

    const std::size_t n = streams.size();
    std::array<double, encoder::kNumPoolings> within{}, between{};
    std::int64_t pairs = 0;

    std::vector<std::array<Vec<float>, encoder::kNumPoolings>> first(n), second(n);
    for (int rep = 0; rep < repetitions; ++rep) {
        for (std::size_t u = 0; u < n; ++u) {
            auto [w1, w2] = logdata::sample_sequence_pair(streams[u], window_len, rng);
            first[u] = embedder.embed_all(w1);
            second[u] = embedder.embed_all(w2);
        }
        for (std::size_t u = 0; u < n; ++u) {
            std::size_t other = rng.uniform_index(n - 1);
            if (other >= u) ++other;
            for (int p = 0; p < encoder::kNumPoolings; ++p) {
                const auto& a = first[u][static_cast<std::size_t>(p)];
                within[static_cast<std::size_t>(p)] +=
                    encoder::cosine_similarity<float>(a, second[u][static_cast<std::size_t>(p)]);
                between[static_cast<std::size_t>(p)] +=
                    encoder::cosine_similarity<float>(a, second[other][static_cast<std::size_t>(p)]);
            }
            ++pairs;
        }
    }

    std::array<UrsaResult, encoder::kNumPoolings> out;
    for (int p = 0; p < encoder::kNumPoolings; ++p) {
        auto& r = out[static_cast<std::size_t>(p)];
        r.pooling = encoder::kAllPoolings[p];
        r.within = within[static_cast<std::size_t>(p)] / static_cast<double>(pairs);
        r.between = between[static_cast<std::size_t>(p)] / static_cast<double>(pairs);
        r.difference = r.within - r.between;
    }
    return out;
}

UrsaResult eval_ursa(const Embedder& embedder, std::span<const BehaviorSequence> streams, Pooling pooling,
                     int window_len, int repetitions, Rng& rng) {
    const auto all = eval_ursa_all(embedder, streams, window_len, repetitions, rng);
    for (const auto& r : all)
        if (r.pooling == pooling) return r;
    throw std::invalid_argument("eval_ursa: unknown pooling");
}

UrsaResult eval_ursa_best(const Embedder& embedder, std::span<const BehaviorSequence> streams, int window_len,
                          int repetitions, Rng& rng) {
    const auto all = eval_ursa_all(embedder, streams, window_len, repetitions, rng);
    UrsaResult best = all[0];
    for (const auto& r : all)
        if (r.difference > best.difference) best = r;
    return best;
}

// ---- retrieval ----

std::vector<RetrievalSample> build_retrieval_samples(std::span<const BehaviorSequence> streams, int num_samples,
                                                     int length, Rng& rng) {
    if (length < 1) throw std::invalid_argument("build_retrieval_samples: length must be >= 1");
    std::vector<int> qualifying;
    for (std::size_t i = 0; i < streams.size(); ++i)
        if (streams[i].length() >= 2 * length) qualifying.push_back(static_cast<int>(i));
    if (static_cast<int>(qualifying.size()) < kRetrievalCandidates)
        throw std::invalid_argument("build_retrieval_samples: need at least " + std::to_string(kRetrievalCandidates) +
                                    " users with streams of length >= " + std::to_string(2 * length) + ", have " +
                                    std::to_string(qualifying.size()));

    auto window_at = [&](const BehaviorSequence& s, int start) { return s.window(start, start + length); };

    std::vector<RetrievalSample> samples;
    samples.reserve(static_cast<std::size_t>(num_samples));
    for (int k = 0; k < num_samples; ++k) {
        const int qi = qualifying[rng.uniform_index(qualifying.size())];
        const BehaviorSequence& qs = streams[static_cast<std::size_t>(qi)];
        // two adjacent disjoint windows around a random cut
        const int cut =
            length + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(qs.length() - 2 * length + 1)));
        BehaviorSequence query = qs.window(cut - length, cut);
        BehaviorSequence positive = window_at(qs, cut);
        if (rng.bernoulli(0.5)) std::swap(query, positive);

        // 99 negatives from distinct other users
        std::vector<int> pool_ids = qualifying;
        pool_ids.erase(std::find(pool_ids.begin(), pool_ids.end(), qi));
        rng.shuffle(pool_ids);

        RetrievalSample sample;
        sample.query = std::move(query);
        sample.candidates.reserve(kRetrievalCandidates);
        sample.positive_index = static_cast<int>(rng.uniform_index(kRetrievalCandidates));
        int neg = 0;
        for (int c = 0; c < kRetrievalCandidates; ++c) {
            if (c == sample.positive_index) {
                sample.candidates.push_back(positive);
            } else {
                const BehaviorSequence& ns = streams[static_cast<std::size_t>(pool_ids[static_cast<std::size_t>(neg++)])];
                const int start = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.length() - length + 1)));
                sample.candidates.push_back(window_at(ns, start));
            }
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::array<double, encoder::kNumPoolings> eval_retrieval_all(const Embedder& embedder,
                                                             std::span<const RetrievalSample> samples) {
    if (samples.empty()) throw std::invalid_argument("eval_retrieval: no samples");
    std::array<double, encoder::kNumPoolings> mrr{};
    for (const auto& sample : samples) {
        const auto q = embedder.embed_all(sample.query);
        std::vector<std::array<Vec<float>, encoder::kNumPoolings>> cand;
        cand.reserve(sample.candidates.size());
        for (const auto& c : sample.candidates) cand.push_back(embedder.embed_all(c));
        for (int p = 0; p < encoder::kNumPoolings; ++p) {
            const auto& qe = q[static_cast<std::size_t>(p)];
            std::vector<double> scores(cand.size());
            for (std::size_t c = 0; c < cand.size(); ++c)
                scores[c] = encoder::cosine_similarity<float>(qe, cand[c][static_cast<std::size_t>(p)]);
            const double pos_score = scores[static_cast<std::size_t>(sample.positive_index)];
            int rank = 1;
            for (std::size_t c = 0; c < scores.size(); ++c) {
                if (static_cast<int>(c) == sample.positive_index) continue;
                if (scores[c] > pos_score ||
                    (scores[c] == pos_score && static_cast<int>(c) < sample.positive_index))
                    ++rank;
            }
            mrr[static_cast<std::size_t>(p)] += 1.0 / rank;
        }
    }
    for (auto& m : mrr) m /= static_cast<double>(samples.size());
    return mrr;
}

double eval_retrieval(const Embedder& embedder, std::span<const RetrievalSample> samples, Pooling pooling) {
    const auto all = eval_retrieval_all(embedder, samples);
    for (int p = 0; p < encoder::kNumPoolings; ++p)
        if (encoder::kAllPoolings[p] == pooling) return all[static_cast<std::size_t>(p)];
    throw std::invalid_argument("eval_retrieval: unknown pooling");
}

RetrievalBest eval_retrieval_best(const Embedder& embedder, std::span<const RetrievalSample> samples) {
    const auto all = eval_retrieval_all(embedder, samples);
    RetrievalBest best{all[0], encoder::kAllPoolings[0]};
    for (int p = 1; p < encoder::kNumPoolings; ++p)
        if (all[static_cast<std::size_t>(p)] > best.mrr) best = {all[static_cast<std::size_t>(p)], encoder::kAllPoolings[p]};
    return best;
}

// ---- downstream ----

double eval_downstream(const Embedder& embedder, const logdata::DownstreamDataset& dataset, Pooling pooling,
                       const MlpSpec& spec, std::uint64_t seed) {
    if (dataset.items.size() < 20) throw std::invalid_argument("eval_downstream: dataset too small");
    const double rate = dataset.positive_rate();
    if (std::abs(rate - 0.5) > 0.02)
        throw std::invalid_argument("eval_downstream: class imbalance " + std::to_string(rate) + " beyond +-2%");

    Mat<float> x(static_cast<int>(dataset.items.size()), embedder.dim());
    std::vector<int> y;
    y.reserve(dataset.items.size());
    for (std::size_t i = 0; i < dataset.items.size(); ++i) {
        const Vec<float> e = embedder.embed(dataset.items[i].window, pooling);
        std::copy(e.begin(), e.end(), x.row(static_cast<int>(i)));
        y.push_back(dataset.items[i].label);
    }
    return mlp_auc_protocol(x, y, spec, seed);
}

// ---- reports ----

std::string EvalReport::column_key() const {
    std::string key = task + ":" + metric;
    if (coord >= 0 && !coord_kind.empty()) key += "@" + coord_kind + std::to_string(coord);
    return key;
}

void validate_report_ranges(std::span<const EvalReport> reports) {
    for (const auto& r : reports) {
        if (std::isnan(r.value)) continue;
        bool ok = true;
        if (r.metric == "acc" || r.metric == "auc") ok = r.value >= 0.0 && r.value <= 1.0;
        else if (r.metric == "mrr") ok = r.value > 0.0 && r.value <= 1.0;
        else if (r.metric == "diff") ok = r.value >= -2.0 && r.value <= 2.0;
        else if (r.metric == "within" || r.metric == "between") ok = r.value >= -1.0 && r.value <= 1.0;
        if (!ok)
            throw std::runtime_error("report value out of range: " + r.model + " " + r.column_key() + " = " +
                                     std::to_string(r.value));
    }
}

namespace {

std::string format_value(double v) {
    if (std::isnan(v)) return "na";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void write_reports_jsonl(const std::string& path, std::span<const EvalReport> reports) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    for (const auto& r : reports) {
        nlohmann::json j{{"model", r.model},       {"task", r.task},
                         {"metric", r.metric},     {"pooling", r.pooling},
                         {"seed", r.seed},         {"config_fingerprint", r.config_fingerprint}};
        if (std::isnan(r.value)) j["value"] = nullptr;
        else j["value"] = r.value;
        if (r.coord >= 0 && !r.coord_kind.empty()) {
            j["coord_kind"] = r.coord_kind;
            j["coord"] = r.coord;
        }
        out << j.dump() << '\n';
    }
}

void write_reports_csv(const std::string& path, std::span<const EvalReport> reports,
                       std::span<const std::string> model_order) {
    // columns in first-seen order
    std::vector<std::string> columns;
    std::unordered_map<std::string, std::size_t> column_index;
    for (const auto& r : reports) {
        const std::string key = r.column_key();
        if (column_index.emplace(key, columns.size()).second) columns.push_back(key);
    }
    std::unordered_map<std::string, std::vector<double>> rows;
    for (const auto& m : model_order) rows[m].assign(columns.size(), std::nan(""));
    for (const auto& r : reports) {
        auto it = rows.find(r.model);
        if (it == rows.end()) continue;
        it->second[column_index.at(r.column_key())] = r.value;
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << "model";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    for (const auto& m : model_order) {
        out << m;
        for (double v : rows.at(m)) out << ',' << format_value(v);
        out << '\n';
    }
}

// ---- full-suite driver ----

void run_model_eval(const Embedder& embedder, const std::string& model_name, const EvalSettings& settings,
                    const EvalContext& ctx, std::vector<EvalReport>& out) {
    const auto& streams = *ctx.eval_streams;
    auto report = [&](std::string task, std::string metric, double value, std::string coord_kind = "", int coord = -1,
                      std::string pooling = "") {
        EvalReport r;
        r.model = model_name;
        r.task = std::move(task);
        r.metric = std::move(metric);
        r.value = value;
        r.coord_kind = std::move(coord_kind);
        r.coord = coord;
        r.pooling = std::move(pooling);
        r.seed = ctx.seed;
        r.config_fingerprint = ctx.config_fingerprint;
        out.push_back(std::move(r));
    };

    auto has_task = [&](const std::string& t) {
        return std::find(settings.tasks.begin(), settings.tasks.end(), t) != settings.tasks.end();
    };

    if (has_task("mbp")) {
        std::vector<BehaviorSequence> windows;
        windows.reserve(streams.size());
        for (const auto& s : streams) {
            const int len = std::min(settings.mbp_eval_window, s.length());
            windows.push_back(s.window(s.length() - len, s.length()));
        }
        for (MaskingMode mode : {MaskingMode::random, MaskingMode::stratified}) {
            const std::string task = mode == MaskingMode::random ? "mbp_random" : "mbp_stratified";
            // masks derive from the run seed only, so every model sees the same plans
            Rng rng(derive_seed(ctx.seed, task));
            if (embedder.has_mbp_head()) {
                const MbpResult res = eval_mbp(embedder, windows, mode, *ctx.vocab, rng, settings.mbp_mask_rate,
                                               settings.stratified_budget);
                report(task, "acc", res.accuracy);
            } else {
                report(task, "acc", std::nan(""));
            }
        }
    }

    Pooling downstream_pooling = Pooling::mean;
    bool have_ursa_pooling = false;
    if (has_task("ursa")) {
        Rng rng(derive_seed(ctx.seed, "ursa"));
        const std::size_t count = settings.ursa_users > 0
                                      ? std::min<std::size_t>(streams.size(), static_cast<std::size_t>(settings.ursa_users))
                                      : streams.size();
        const UrsaResult best = eval_ursa_best(embedder, std::span(streams.data(), count), settings.ursa_window,
                                               settings.ursa_repetitions, rng);
        report("ursa", "within", best.within, "", -1, encoder::pooling_name(best.pooling));
        report("ursa", "between", best.between, "", -1, encoder::pooling_name(best.pooling));
        report("ursa", "diff", best.difference, "", -1, encoder::pooling_name(best.pooling));
        downstream_pooling = best.pooling;
        have_ursa_pooling = true;
    }

    if (has_task("retrieval")) {
        for (int length : settings.retrieval_lengths) {
            Rng rng(derive_seed(ctx.seed, "retrieval", static_cast<std::uint64_t>(length)));
            const auto samples = build_retrieval_samples(streams, settings.retrieval_samples, length, rng);
            const RetrievalBest best = eval_retrieval_best(embedder, samples);
            report("retrieval", "mrr", best.mrr, "length", length, encoder::pooling_name(best.pooling));
        }
    }

    const bool all_downstream = has_task("downstream");
    for (Task task : {Task::reported, Task::ad_view, Task::self_delete}) {
        const std::string tname = logdata::task_name(task);
        if (!all_downstream && !has_task(tname)) continue;
        const char* pooling_tag =
            embedder.pooling_applies() ? encoder::pooling_name(downstream_pooling) : "";
        (void)have_ursa_pooling;
        for (int gap : settings.gaps) {
            Rng rng(derive_seed(ctx.seed, "downstream_" + tname, static_cast<std::uint64_t>(gap)));
            const auto dataset = logdata::assemble_downstream_dataset(streams, *ctx.labels, task, gap, *ctx.synth,
                                                                      settings.downstream_max_window, rng);
            const std::uint64_t mlp_seed = derive_seed(ctx.seed, "mlp_" + tname, static_cast<std::uint64_t>(gap));
            const double auc = eval_downstream(embedder, dataset, downstream_pooling, settings.mlp, mlp_seed);
            report(tname, "auc", auc, "gap", gap, pooling_tag);
        }
    }
}

// ---- ablation ----

std::vector<VariantSpec> ablation_variants(const objectives::ObjectiveSpec& base) {
    using encoder::PositionalMode;
    std::vector<VariantSpec> v;
    v.push_back({"full", base, PositionalMode::alibi});
    auto no_mbp = base;
    no_mbp.mbp_weight = 0.0;
    v.push_back({"-MBP", no_mbp, PositionalMode::alibi});
    auto no_ucl = base;
    no_ucl.ucl_weight = 0.0;
    v.push_back({"-UCL", no_ucl, PositionalMode::alibi});
    v.push_back({"-ALiBi", base, PositionalMode::learned_absolute});
    v.push_back({"-UCL&ALiBi", no_ucl, PositionalMode::learned_absolute});
    return v;
}

AblationTable run_ablation(const AblationPlan& plan, std::uint64_t seed) {
    AblationTable table;
    std::vector<std::vector<EvalReport>> variant_reports;
    const auto variants = ablation_variants(plan.hyper.objective);

    for (const auto& variant : variants) {
        AblationRow row;
        row.variant = variant.name;

        encoder::ModelConfig config = plan.base_config;
        config.positional_mode = variant.positional_mode;
        objectives::TrainHyper hyper = plan.hyper;
        hyper.objective = variant.objective;

        objectives::TrainState state = objectives::train_model(*plan.train_streams, config, hyper, seed);
        if (state.diverged) {
            row.failed = true;
            table.rows.push_back(std::move(row));
            variant_reports.emplace_back();
            continue;
        }

        encoder::ObjectiveFlags flags;
        flags.mbp = variant.objective.uses_mbp();
        flags.ucl = variant.objective.uses_ucl();
        flags.nbp = variant.objective.uses_nbp();
        const TransformerEmbedder embedder(baselines::EmbedderKind::ours, flags, std::move(state.params));

        std::vector<EvalReport> reports;
        run_model_eval(embedder, variant.name, plan.eval_settings, plan.context, reports);
        for (const auto& r : reports)
            row.cells[r.column_key()] = AblationCell{r.value * 100.0, 0.0};
        table.rows.push_back(std::move(row));
        variant_reports.push_back(std::move(reports));
    }

    // column order from the full row's reports; deltas vs full
    if (!variant_reports.empty())
        for (const auto& r : variant_reports[0]) table.columns.push_back(r.column_key());
    const auto& full_cells = table.rows[0].cells;
    for (auto& row : table.rows) {
        for (auto& [key, cell] : row.cells) {
            auto it = full_cells.find(key);
            const double full_value = it == full_cells.end() ? std::nan("") : it->second.value;
            cell.delta = cell.value - full_value;
        }
    }
    return table;
}

void write_ablation_csv(const std::string& path, const AblationTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write ablation table: " + path);
    auto fmt = [](double v) {
        if (std::isnan(v)) return std::string("na");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };
    out << "variant,failed";
    for (const auto& c : table.columns) out << ',' << c << "_value," << c << "_delta";
    out << '\n';
    for (const auto& row : table.rows) {
        out << row.variant << ',' << (row.failed ? 1 : 0);
        for (const auto& c : table.columns) {
            auto it = row.cells.find(c);
            if (it == row.cells.end()) out << ",na,na";
            else out << ',' << fmt(it->second.value) << ',' << fmt(it->second.delta);
        }
        out << '\n';
    }
}

}  // namespace blum::evalharness
