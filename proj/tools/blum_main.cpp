// blum: reproducible pipeline for behavioral-log user models.
// Subcommands: gen-data, train, embed, eval, ablate.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_set>

#include "CLI11.hpp"
#include "json.hpp"

#include "blum/baselines.hpp"
#include "blum/evalharness.hpp"
#include "blum/kernels.hpp"
#include "blum/objectives.hpp"
#include "blum/runconfig.hpp"
#include "blum/synthgen.hpp"

namespace fs = std::filesystem;
using namespace blum;

namespace {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "run configuration file (JSON)");
    cmd->add_option("--seed", o.seed, "override the config seed")->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_option("--out", o.out, "override the output directory");
    cmd->add_option("--threads", o.threads, "OpenMP thread count (default 1 for bit-stable runs)");
}

cli::RunConfig resolve_config(const CommonOpts& o) {
    cli::RunConfig cfg = o.config_path.empty() ? cli::RunConfig{} : cli::RunConfig::load(o.config_path);
    if (o.seed_set) cfg.seed = o.seed;
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (o.threads > 0) cfg.threads = o.threads;
    kernels::set_threads(cfg.threads);
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<int> split_csv_int(const std::string& s) {
    std::vector<int> out;
    for (const auto& part : split_csv(s)) out.push_back(std::stoi(part));
    return out;
}

// ---- gen-data ----

int cmd_gen_data(const CommonOpts& opts) {
    cli::RunConfig cfg = resolve_config(opts);
    if (cfg.data.num_users < 2) {
        std::cerr << "gen-data: contrastive learning needs at least 2 training users (num_users="
                  << cfg.data.num_users << ")\n";
        return 1;
    }

    logdata::SyntheticConfig gen = cfg.data;
    gen.num_users = cfg.data.num_users + cfg.eval_users;
    const logdata::SyntheticCorpus corpus = logdata::generate_corpus(gen, cfg.seed);

    fs::create_directories(cfg.out_dir);
    corpus.vocab.save(cli::vocab_path(cfg.out_dir));

    std::vector<logdata::BehaviorSequence> train_seqs(corpus.sequences.begin(),
                                                      corpus.sequences.begin() + cfg.data.num_users);
    std::vector<logdata::BehaviorSequence> eval_seqs(corpus.sequences.begin() + cfg.data.num_users,
                                                     corpus.sequences.end());
    logdata::save_corpus(cli::corpus_train_path(cfg.out_dir), train_seqs);
    logdata::save_corpus(cli::corpus_eval_path(cfg.out_dir), eval_seqs);

    std::unordered_set<std::string> eval_ids;
    for (const auto& s : eval_seqs) eval_ids.insert(s.user_id);
    std::vector<logdata::LabelRecord> eval_labels;
    for (const auto& l : corpus.labels)
        if (eval_ids.count(l.user_id)) eval_labels.push_back(l);
    logdata::save_labels(cli::labels_path(cfg.out_dir), eval_labels);

    cfg.save(cli::resolved_config_path(cfg.out_dir));
    std::cout << "gen-data: wrote " << train_seqs.size() << " train users, " << eval_seqs.size() << " eval users, "
              << eval_labels.size() << " label records to " << cfg.out_dir << "\n";
    return 0;
}

// ---- train ----

struct TrainOpts {
    std::string model = "ours";
    bool no_ucl = false;
    bool no_mbp = false;
    bool no_alibi = false;
};

std::string variant_name(const TrainOpts& t) {
    std::string name = t.model;
    if (t.model == "ours") {
        if (t.no_mbp) name += "-nombp";
        if (t.no_ucl) name += "-noucl";
        if (t.no_alibi) name += "-noalibi";
    }
    return name;
}

int cmd_train(const CommonOpts& opts, const TrainOpts& topts) {
    cli::RunConfig cfg = resolve_config(opts);

    const std::string corpus_path = cli::corpus_train_path(cfg.out_dir);
    if (!fs::exists(corpus_path)) {
        std::cerr << "train: missing training corpus " << corpus_path << " (run gen-data first)\n";
        return 1;
    }
    const auto streams = logdata::load_corpus(corpus_path);

    encoder::ModelConfig config = cfg.resolved_model();
    objectives::TrainHyper hyper = cfg.train;
    if (topts.model == "ours") {
        if (topts.no_mbp) hyper.objective.mbp_weight = 0.0;
        if (topts.no_ucl) hyper.objective.ucl_weight = 0.0;
        if (topts.no_alibi) config.positional_mode = encoder::PositionalMode::learned_absolute;
        if (topts.no_mbp && topts.no_ucl) {
            std::cerr << "train: --no-mbp and --no-ucl together leave no objective\n";
            return 1;
        }
    } else if (topts.model == "enc") {
        hyper.objective = {};
        hyper.objective.ucl_weight = 0.0;
        config.positional_mode = encoder::PositionalMode::learned_absolute;
        config.attention_mode = encoder::AttentionMode::bidirectional;
    } else if (topts.model == "dec") {
        hyper.objective = {};
        hyper.objective.mbp_weight = 0.0;
        hyper.objective.ucl_weight = 0.0;
        hyper.objective.nbp_weight = 1.0;
        config.positional_mode = encoder::PositionalMode::learned_absolute;
        config.attention_mode = encoder::AttentionMode::causal;
    } else {
        std::cerr << "train: unknown model '" << topts.model << "' (expected ours, enc or dec)\n";
        return 1;
    }

    const std::string name = variant_name(topts);
    fs::create_directories(cfg.out_dir);
    const std::string ckpt_path = cli::checkpoint_path(cfg.out_dir, name);
    const std::string met_path = cli::metrics_path(cfg.out_dir, name);
    std::ofstream metrics(met_path, std::ios::binary);
    if (!metrics) {
        std::cerr << "train: cannot write metrics log " << met_path << "\n";
        return 1;
    }

    encoder::ObjectiveFlags flags;
    flags.mbp = hyper.objective.uses_mbp();
    flags.ucl = hyper.objective.uses_ucl();
    flags.nbp = hyper.objective.uses_nbp();
    const std::string kind = topts.model;

    objectives::TrainCallbacks callbacks;
    callbacks.on_epoch = [&](const objectives::EpochMetrics& em) {
        nlohmann::json j{{"epoch", em.epoch}, {"L_MBP", em.mbp},          {"L_UCL", em.ucl},
                         {"L", em.total},     {"val_accuracy", em.val_accuracy}};
        metrics << j.dump() << '\n';
        metrics.flush();
        std::cout << "epoch " << em.epoch << "  L_MBP=" << em.mbp << "  L_UCL=" << em.ucl << "  L=" << em.total
                  << "  val_acc=" << em.val_accuracy << "\n";
    };
    callbacks.on_checkpoint = [&](const encoder::ModelParameters<float>& params, int) {
        encoder::save_model_checkpoint(ckpt_path, kind, flags, params);
    };

    const objectives::TrainState state = objectives::train_model(streams, config, hyper, cfg.seed, callbacks);
    cfg.save(cli::resolved_config_path(cfg.out_dir));
    if (state.diverged) {
        std::cerr << "train: loss diverged; last good checkpoint kept at " << ckpt_path << "\n";
        return 1;
    }
    encoder::save_model_checkpoint(ckpt_path, kind, flags, state.params);
    std::cout << "train: wrote " << ckpt_path << " after " << state.step << " steps\n";
    return 0;
}

// ---- embed ----

int cmd_embed(const CommonOpts& opts, const std::string& checkpoint, const std::string& corpus_file,
              const std::string& out_file, const std::string& pooling_name) {
    resolve_config(opts);
    const auto embedder = baselines::load_embedder(checkpoint);
    const encoder::Pooling pooling = encoder::parse_pooling(pooling_name);
    std::ofstream out(out_file, std::ios::binary);
    if (!out) {
        std::cerr << "embed: cannot write " << out_file << "\n";
        return 1;
    }
    std::size_t count = 0;
    logdata::for_each_sequence(corpus_file, [&](logdata::BehaviorSequence&& seq) {
        const Vec<float> e = embedder->embed(seq, pooling);
        out << nlohmann::json{{"user_id", seq.user_id}, {"vector", e}}.dump() << '\n';
        ++count;
    });
    std::cout << "embed: wrote " << count << " embeddings to " << out_file << "\n";
    return 0;
}

// ---- eval ----

int cmd_eval(const CommonOpts& opts, std::string models_csv, const std::string& tasks_csv,
             const std::string& lengths_csv, const std::string& gaps_csv) {
    cli::RunConfig cfg = resolve_config(opts);
    if (!tasks_csv.empty()) cfg.eval.tasks = split_csv(tasks_csv);
    if (!lengths_csv.empty()) cfg.eval.retrieval_lengths = split_csv_int(lengths_csv);
    if (!gaps_csv.empty()) cfg.eval.gaps = split_csv_int(gaps_csv);
    if (models_csv.empty()) models_csv = "ours,tf,tfidf,sgns,untrained,enc,dec";
    const std::vector<std::string> models = split_csv(models_csv);

    const auto vocab = logdata::BehaviorVocab::load(cli::vocab_path(cfg.out_dir));
    const auto train_streams = logdata::load_corpus(cli::corpus_train_path(cfg.out_dir));
    const auto eval_streams = logdata::load_corpus(cli::corpus_eval_path(cfg.out_dir));
    const auto labels = logdata::load_labels(cli::labels_path(cfg.out_dir));

    // train/eval user sets must not overlap
    {
        std::unordered_set<std::string> train_ids;
        for (const auto& s : train_streams) train_ids.insert(s.user_id);
        std::vector<std::string> overlap;
        for (const auto& s : eval_streams)
            if (train_ids.count(s.user_id)) overlap.push_back(s.user_id);
        if (!overlap.empty()) {
            std::cerr << "eval: train/eval user overlap detected:";
            for (std::size_t i = 0; i < std::min<std::size_t>(10, overlap.size()); ++i) std::cerr << ' ' << overlap[i];
            if (overlap.size() > 10) std::cerr << " (+" << overlap.size() - 10 << " more)";
            std::cerr << "\n";
            return 1;
        }
    }

    logdata::SyntheticConfig synth = cfg.data;
    synth.num_users = cfg.data.num_users + cfg.eval_users;

    evalharness::EvalContext ctx;
    ctx.eval_streams = &eval_streams;
    ctx.labels = &labels;
    ctx.vocab = &vocab;
    ctx.synth = &synth;
    ctx.seed = cfg.seed;
    ctx.config_fingerprint = cfg.fingerprint();

    std::vector<evalharness::EvalReport> reports;
    std::vector<std::string> failed;
    for (const auto& name : models) {
        try {
            std::unique_ptr<baselines::Embedder> embedder;
            if (name == "tf") {
                embedder = baselines::make_tf_embedder(vocab.num_behaviors());
            } else if (name == "tfidf") {
                embedder = baselines::make_tfidf_embedder(
                    baselines::CorpusStats::compute(train_streams, vocab.num_behaviors()));
            } else if (name == "sgns") {
                embedder = baselines::make_table_embedder(
                    baselines::EmbedderKind::sgns,
                    baselines::sgns_train(train_streams, vocab.num_behaviors(), cfg.baselines.sgns_dim,
                                          cfg.baselines.sgns_window, cfg.baselines.sgns_negatives,
                                          cfg.baselines.sgns_epochs, cfg.seed));
            } else if (name == "untrained") {
                embedder = baselines::make_table_embedder(
                    baselines::EmbedderKind::untrained,
                    baselines::untrained_table(vocab.num_behaviors(), cfg.baselines.untrained_dim, cfg.seed));
            } else {
                const std::string path = cli::checkpoint_path(cfg.out_dir, name);
                if (!fs::exists(path)) throw std::runtime_error("missing checkpoint " + path + " (train it first)");
                embedder = baselines::load_embedder(path);
            }
            std::cout << "eval: " << name << "...\n";
            evalharness::run_model_eval(*embedder, name, cfg.eval, ctx, reports);
        } catch (const std::exception& e) {
            failed.push_back(name + ": " + e.what());
        }
    }

    evalharness::validate_report_ranges(reports);
    evalharness::write_reports_jsonl(cfg.out_dir + "/report.jsonl", reports);
    evalharness::write_reports_csv(cfg.out_dir + "/report.csv", reports, models);
    cfg.save(cli::resolved_config_path(cfg.out_dir));
    std::cout << "eval: wrote " << reports.size() << " report rows to " << cfg.out_dir << "/report.csv\n";

    if (!failed.empty()) {
        std::cerr << "eval: " << failed.size() << " model(s) failed:\n";
        for (const auto& f : failed) std::cerr << "  " << f << "\n";
        return 1;
    }
    return 0;
}

// ---- ablate ----

int cmd_ablate(const CommonOpts& opts, const std::string& tasks_csv) {
    cli::RunConfig cfg = resolve_config(opts);
    if (!tasks_csv.empty()) cfg.eval.tasks = split_csv(tasks_csv);

    const auto vocab = logdata::BehaviorVocab::load(cli::vocab_path(cfg.out_dir));
    const auto train_streams = logdata::load_corpus(cli::corpus_train_path(cfg.out_dir));
    const auto eval_streams = logdata::load_corpus(cli::corpus_eval_path(cfg.out_dir));
    const auto labels = logdata::load_labels(cli::labels_path(cfg.out_dir));

    logdata::SyntheticConfig synth = cfg.data;
    synth.num_users = cfg.data.num_users + cfg.eval_users;

    evalharness::AblationPlan plan;
    plan.hyper = cfg.train;
    plan.base_config = cfg.resolved_model();
    plan.train_streams = &train_streams;
    plan.eval_settings = cfg.eval;
    plan.context.eval_streams = &eval_streams;
    plan.context.labels = &labels;
    plan.context.vocab = &vocab;
    plan.context.synth = &synth;
    plan.context.seed = cfg.seed;
    plan.context.config_fingerprint = cfg.fingerprint();

    const evalharness::AblationTable table = evalharness::run_ablation(plan, cfg.seed);
    evalharness::write_ablation_csv(cfg.out_dir + "/ablation.csv", table);
    cfg.save(cli::resolved_config_path(cfg.out_dir));
    std::cout << "ablate: wrote " << cfg.out_dir << "/ablation.csv\n";
    for (const auto& row : table.rows)
        if (row.failed) std::cerr << "ablate: variant " << row.variant << " failed (training diverged)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"behavioral-log user modeling toolkit"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts_c, embed_opts_c, eval_opts_c, ablate_opts_c;
    TrainOpts topts;
    std::string embed_checkpoint, embed_corpus, embed_out, embed_pooling = "mean";
    std::string eval_models, eval_tasks, eval_lengths, eval_gaps, ablate_tasks;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus, labels and vocab");
    add_common(gen, gen_opts);

    auto* train = app.add_subcommand("train", "train a user model on the generated corpus");
    add_common(train, train_opts_c);
    train->add_option("--model", topts.model, "ours | enc | dec (default ours)");
    train->add_flag("--no-ucl", topts.no_ucl, "drop the contrastive objective");
    train->add_flag("--no-mbp", topts.no_mbp, "drop the masked-prediction objective");
    train->add_flag("--no-alibi", topts.no_alibi, "use learned absolute positions instead of ALiBi");

    auto* embed = app.add_subcommand("embed", "write user embeddings for a corpus");
    add_common(embed, embed_opts_c);
    embed->add_option("--checkpoint", embed_checkpoint, "embedder checkpoint")->required();
    embed->add_option("--corpus", embed_corpus, "corpus file (jsonl)")->required();
    embed->add_option("--out-file", embed_out, "output embeddings file (jsonl)")->required();
    embed->add_option("--pooling", embed_pooling, "mean | max | weighted_mean | weighted_max");

    auto* eval = app.add_subcommand("eval", "run the evaluation suite for the listed models");
    add_common(eval, eval_opts_c);
    eval->add_option("--models", eval_models, "comma-separated model list");
    eval->add_option("--task", eval_tasks, "comma-separated task subset (mbp,ursa,retrieval,downstream,...)");
    eval->add_option("--lengths", eval_lengths, "retrieval length sweep, comma-separated");
    eval->add_option("--gaps", eval_gaps, "downstream gap sweep, comma-separated");

    auto* ablate = app.add_subcommand("ablate", "train and evaluate the ablation variants");
    add_common(ablate, ablate_opts_c);
    ablate->add_option("--task", ablate_tasks, "comma-separated task subset");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_opts);
        if (train->parsed()) return cmd_train(train_opts_c, topts);
        if (embed->parsed()) return cmd_embed(embed_opts_c, embed_checkpoint, embed_corpus, embed_out, embed_pooling);
        if (eval->parsed()) return cmd_eval(eval_opts_c, eval_models, eval_tasks, eval_lengths, eval_gaps);
        if (ablate->parsed()) return cmd_ablate(ablate_opts_c, ablate_tasks);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
