#pragma once

#include <cstdint>
#include <string>

#include "blum/evalharness.hpp"
#include "blum/model.hpp"
#include "blum/objectives.hpp"
#include "blum/synthgen.hpp"

#include "json.hpp"

namespace blum::cli {

// One structured config drives a whole run; every field has a documented
// default and the resolved snapshot written next to outputs reproduces the
// run byte-for-byte.
struct BaselineConfig {
    int sgns_dim = 64;
    int sgns_window = 5;
    int sgns_negatives = 5;
    int sgns_epochs = 5;
    int untrained_dim = 768;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    int threads = 1;

    logdata::SyntheticConfig data;  // data.num_users = training users
    int eval_users = 300;

    encoder::ModelConfig model;  // vocab_size derived from data when 0
    objectives::TrainHyper train;
    evalharness::EvalSettings eval;
    BaselineConfig baselines;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    // model config with vocab_size resolved from the data section
    encoder::ModelConfig resolved_model() const;

    std::string fingerprint() const;  // fnv1a64 hex of the canonical dump
};

// standard file names inside a run directory
std::string corpus_train_path(const std::string& out_dir);
std::string corpus_eval_path(const std::string& out_dir);
std::string labels_path(const std::string& out_dir);
std::string vocab_path(const std::string& out_dir);
std::string resolved_config_path(const std::string& out_dir);
std::string checkpoint_path(const std::string& out_dir, const std::string& model_name);
std::string metrics_path(const std::string& out_dir, const std::string& model_name);

}  // namespace blum::cli
