#include "blum/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "blum/rng.hpp"

namespace blum::cli {

using nlohmann::json;

namespace {

json data_to_json(const logdata::SyntheticConfig& d) {
    return json{{"num_users", d.num_users},
                {"num_behaviors", d.num_behaviors},
                {"days", d.days},
                {"mean_events_per_day", d.mean_events_per_day},
                {"zipf_exponent", d.zipf_exponent},
                {"preference_jitter", d.preference_jitter},
                {"num_favorites", d.num_favorites},
                {"favorite_boost", d.favorite_boost},
                {"transition_mix", d.transition_mix},
                {"transition_fanout", d.transition_fanout},
                {"trend_range", d.trend_range},
                {"trend_polarity_scale", d.trend_polarity_scale},
                {"num_risky", d.num_risky},
                {"num_ad", d.num_ad},
                {"risk_preference_boost", d.risk_preference_boost},
                {"ad_preference_boost", d.ad_preference_boost},
                {"label_window_days", d.label_window_days},
                {"risky_freq_scale", d.risky_freq_scale},
                {"reported_threshold", d.reported_threshold},
                {"ad_view_threshold", d.ad_view_threshold},
                {"self_delete_threshold", d.self_delete_threshold},
                {"reported_noise", d.reported_noise},
                {"ad_view_noise", d.ad_view_noise},
                {"self_delete_noise", d.self_delete_noise},
                {"user_prefix", d.user_prefix}};
}

logdata::SyntheticConfig data_from_json(const json& j) {
    logdata::SyntheticConfig d;
    d.num_users = j.value("num_users", d.num_users);
    d.num_behaviors = j.value("num_behaviors", d.num_behaviors);
    d.days = j.value("days", d.days);
    d.mean_events_per_day = j.value("mean_events_per_day", d.mean_events_per_day);
    d.zipf_exponent = j.value("zipf_exponent", d.zipf_exponent);
    d.preference_jitter = j.value("preference_jitter", d.preference_jitter);
    d.num_favorites = j.value("num_favorites", d.num_favorites);
    d.favorite_boost = j.value("favorite_boost", d.favorite_boost);
    d.transition_mix = j.value("transition_mix", d.transition_mix);
    d.transition_fanout = j.value("transition_fanout", d.transition_fanout);
    d.trend_range = j.value("trend_range", d.trend_range);
    d.trend_polarity_scale = j.value("trend_polarity_scale", d.trend_polarity_scale);
    d.num_risky = j.value("num_risky", d.num_risky);
    d.num_ad = j.value("num_ad", d.num_ad);
    d.risk_preference_boost = j.value("risk_preference_boost", d.risk_preference_boost);
    d.ad_preference_boost = j.value("ad_preference_boost", d.ad_preference_boost);
    d.label_window_days = j.value("label_window_days", d.label_window_days);
    d.risky_freq_scale = j.value("risky_freq_scale", d.risky_freq_scale);
    d.reported_threshold = j.value("reported_threshold", d.reported_threshold);
    d.ad_view_threshold = j.value("ad_view_threshold", d.ad_view_threshold);
    d.self_delete_threshold = j.value("self_delete_threshold", d.self_delete_threshold);
    d.reported_noise = j.value("reported_noise", d.reported_noise);
    d.ad_view_noise = j.value("ad_view_noise", d.ad_view_noise);
    d.self_delete_noise = j.value("self_delete_noise", d.self_delete_noise);
    d.user_prefix = j.value("user_prefix", d.user_prefix);
    return d;
}

json train_to_json(const objectives::TrainHyper& t) {
    return json{{"epochs", t.epochs},
                {"batch_users", t.batch_users},
                {"learning_rate", t.learning_rate},
                {"warmup_fraction", t.warmup_fraction},
                {"mask_rate", t.mask_rate},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"grad_clip", t.grad_clip},
                {"val_fraction", t.val_fraction},
                {"mbp_weight", t.objective.mbp_weight},
                {"ucl_weight", t.objective.ucl_weight},
                {"nbp_weight", t.objective.nbp_weight},
                {"temperature", t.objective.temperature}};
}

objectives::TrainHyper train_from_json(const json& j) {
    objectives::TrainHyper t;
    t.epochs = j.value("epochs", t.epochs);
    t.batch_users = j.value("batch_users", t.batch_users);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.warmup_fraction = j.value("warmup_fraction", t.warmup_fraction);
    t.mask_rate = j.value("mask_rate", t.mask_rate);
    t.adam_beta1 = j.value("adam_beta1", t.adam_beta1);
    t.adam_beta2 = j.value("adam_beta2", t.adam_beta2);
    t.adam_eps = j.value("adam_eps", t.adam_eps);
    t.grad_clip = j.value("grad_clip", t.grad_clip);
    t.val_fraction = j.value("val_fraction", t.val_fraction);
    t.objective.mbp_weight = j.value("mbp_weight", t.objective.mbp_weight);
    t.objective.ucl_weight = j.value("ucl_weight", t.objective.ucl_weight);
    t.objective.nbp_weight = j.value("nbp_weight", t.objective.nbp_weight);
    t.objective.temperature = j.value("temperature", t.objective.temperature);
    return t;
}

json mlp_to_json(const evalharness::MlpSpec& m) {
    return json{{"folds", m.folds},
                {"search_draws", m.search_draws},
                {"hidden_sizes", m.hidden_sizes},
                {"max_hidden_layers", m.max_hidden_layers},
                {"lr_min", m.lr_min},
                {"lr_max", m.lr_max},
                {"l2", m.l2},
                {"epochs", m.epochs},
                {"batch", m.batch}};
}

evalharness::MlpSpec mlp_from_json(const json& j) {
    evalharness::MlpSpec m;
    m.folds = j.value("folds", m.folds);
    m.search_draws = j.value("search_draws", m.search_draws);
    m.hidden_sizes = j.value("hidden_sizes", m.hidden_sizes);
    m.max_hidden_layers = j.value("max_hidden_layers", m.max_hidden_layers);
    m.lr_min = j.value("lr_min", m.lr_min);
    m.lr_max = j.value("lr_max", m.lr_max);
    m.l2 = j.value("l2", m.l2);
    m.epochs = j.value("epochs", m.epochs);
    m.batch = j.value("batch", m.batch);
    return m;
}

json eval_to_json(const evalharness::EvalSettings& e) {
    return json{{"tasks", e.tasks},
                {"mbp_eval_window", e.mbp_eval_window},
                {"mbp_mask_rate", e.mbp_mask_rate},
                {"stratified_budget", e.stratified_budget},
                {"ursa_window", e.ursa_window},
                {"ursa_repetitions", e.ursa_repetitions},
                {"ursa_users", e.ursa_users},
                {"retrieval_lengths", e.retrieval_lengths},
                {"retrieval_samples", e.retrieval_samples},
                {"gaps", e.gaps},
                {"downstream_max_window", e.downstream_max_window},
                {"mlp", mlp_to_json(e.mlp)}};
}

evalharness::EvalSettings eval_from_json(const json& j) {
    evalharness::EvalSettings e;
    e.tasks = j.value("tasks", e.tasks);
    e.mbp_eval_window = j.value("mbp_eval_window", e.mbp_eval_window);
    e.mbp_mask_rate = j.value("mbp_mask_rate", e.mbp_mask_rate);
    e.stratified_budget = j.value("stratified_budget", e.stratified_budget);
    e.ursa_window = j.value("ursa_window", e.ursa_window);
    e.ursa_repetitions = j.value("ursa_repetitions", e.ursa_repetitions);
    e.ursa_users = j.value("ursa_users", e.ursa_users);
    e.retrieval_lengths = j.value("retrieval_lengths", e.retrieval_lengths);
    e.retrieval_samples = j.value("retrieval_samples", e.retrieval_samples);
    e.gaps = j.value("gaps", e.gaps);
    e.downstream_max_window = j.value("downstream_max_window", e.downstream_max_window);
    if (j.contains("mlp")) e.mlp = mlp_from_json(j.at("mlp"));
    return e;
}

json baselines_to_json(const BaselineConfig& b) {
    return json{{"sgns_dim", b.sgns_dim},
                {"sgns_window", b.sgns_window},
                {"sgns_negatives", b.sgns_negatives},
                {"sgns_epochs", b.sgns_epochs},
                {"untrained_dim", b.untrained_dim}};
}

BaselineConfig baselines_from_json(const json& j) {
    BaselineConfig b;
    b.sgns_dim = j.value("sgns_dim", b.sgns_dim);
    b.sgns_window = j.value("sgns_window", b.sgns_window);
    b.sgns_negatives = j.value("sgns_negatives", b.sgns_negatives);
    b.sgns_epochs = j.value("sgns_epochs", b.sgns_epochs);
    b.untrained_dim = j.value("untrained_dim", b.untrained_dim);
    return b;
}

}  // namespace

json RunConfig::to_json() const {
    return json{{"seed", seed},
                {"out_dir", out_dir},
                {"threads", threads},
                {"eval_users", eval_users},
                {"data", data_to_json(data)},
                {"model", model.to_json()},
                {"train", train_to_json(train)},
                {"eval", eval_to_json(eval)},
                {"baselines", baselines_to_json(baselines)}};
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.threads = j.value("threads", c.threads);
    c.eval_users = j.value("eval_users", c.eval_users);
    if (j.contains("data")) c.data = data_from_json(j.at("data"));
    if (j.contains("model")) c.model = encoder::ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
    if (j.contains("baselines")) c.baselines = baselines_from_json(j.at("baselines"));
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    return from_json(j);
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << to_json().dump(2) << '\n';
}

encoder::ModelConfig RunConfig::resolved_model() const {
    encoder::ModelConfig m = model;
    if (m.vocab_size == 0) m.vocab_size = data.num_behaviors + 3;
    return m;
}

std::string RunConfig::fingerprint() const {
    const std::uint64_t h = fnv1a64(to_json().dump());
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string corpus_train_path(const std::string& out_dir) { return out_dir + "/train_corpus.jsonl"; }
std::string corpus_eval_path(const std::string& out_dir) { return out_dir + "/eval_corpus.jsonl"; }
std::string labels_path(const std::string& out_dir) { return out_dir + "/labels.jsonl"; }
std::string vocab_path(const std::string& out_dir) { return out_dir + "/vocab.txt"; }
std::string resolved_config_path(const std::string& out_dir) { return out_dir + "/config.resolved.json"; }
std::string checkpoint_path(const std::string& out_dir, const std::string& model_name) {
    return out_dir + "/checkpoint_" + model_name + ".ckpt";
}
std::string metrics_path(const std::string& out_dir, const std::string& model_name) {
    return out_dir + "/metrics_" + model_name + ".jsonl";
}

}  // namespace blum::cli
