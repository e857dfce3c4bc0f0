#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "blum/tensor.hpp"

#include "json.hpp"

namespace blum::encoder {

enum class PositionalMode { alibi, learned_absolute, none };
enum class AttentionMode { bidirectional, causal };

const char* positional_mode_name(PositionalMode m);
PositionalMode parse_positional_mode(const std::string& s);
const char* attention_mode_name(AttentionMode m);
AttentionMode parse_attention_mode(const std::string& s);

struct ModelConfig {
    int num_layers = 2;
    int hidden_dim = 64;
    int num_heads = 4;
    int ffn_dim = 256;
    int vocab_size = 0;  // total ids including PAD/MASK/UNK
    int max_train_len = 32;
    int max_infer_len = 1024;
    PositionalMode positional_mode = PositionalMode::alibi;
    AttentionMode attention_mode = AttentionMode::bidirectional;

    bool use_alibi() const { return positional_mode == PositionalMode::alibi; }
    int head_dim() const { return hidden_dim / num_heads; }

    void validate() const;  // throws on inconsistent fields

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// slopes[h] = 2^-(h+1): geometric, strictly decreasing, positive
std::vector<double> alibi_slopes(int num_heads);

// bias[i][j] = -slope(head) * |i - j|
Mat<double> alibi_bias(int seq_len, int head_index, int num_heads);

template <class Real>
struct LayerParams {
    Mat<Real> wq, wk, wv, wo;          // hidden x hidden
    Vec<Real> bq, bk, bv, bo;          // hidden
    Vec<Real> ln1_g, ln1_b, ln2_g, ln2_b;
    Mat<Real> w1;                      // hidden x ffn
    Vec<Real> b1;                      // ffn
    Mat<Real> w2;                      // ffn x hidden
    Vec<Real> b2;                      // hidden
};

template <class Real>
struct ModelParameters {
    ModelConfig config;
    Mat<Real> embedding;  // vocab x hidden
    Mat<Real> pos_table;  // max_train_len x hidden when learned_absolute, else empty
    std::vector<LayerParams<Real>> layers;
    Vec<Real> lnf_g, lnf_b;
    Mat<Real> mbp_w;  // hidden x vocab
    Vec<Real> mbp_b;  // vocab

    // Zero tensors shaped for `config` (also the gradient/moment holder).
    static ModelParameters zeros_like(const ModelConfig& config);
    // Seeded init: weights ~ N(0, 1/fan_in), norm gains 1, biases 0.
    static ModelParameters init(const ModelConfig& config, std::uint64_t seed);

    void for_each_tensor(const std::function<void(const std::string&, Real*, std::size_t)>& fn);
    void for_each_tensor(const std::function<void(const std::string&, const Real*, std::size_t)>& fn) const;

    std::size_t num_parameters() const;
    bool all_finite() const;
    void zero();
};

using ModelParametersF = ModelParameters<float>;
using ModelParametersD = ModelParameters<double>;

ModelParameters<double> to_double(const ModelParameters<float>& p);
ModelParameters<float> to_float(const ModelParameters<double>& p);

// ---- checkpoint container ----
//
// Self-describing binary file shared by every embedder kind:
//   magic "BLUMCKP1" | u64 header length | JSON header | float32 LE payloads.
// The header carries {kind, meta, tensors:[{name, shape}]}; payloads follow
// in listed order. Loaders validate shapes before accepting.

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

struct Checkpoint {
    std::string kind;
    nlohmann::json meta;
    std::vector<NamedTensor> tensors;

    const NamedTensor& tensor(const std::string& name) const;  // throws if absent
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Transformer-specific wrappers; meta records config plus objective flags.
struct ObjectiveFlags {
    bool mbp = true;
    bool ucl = true;
    bool nbp = false;
};

void save_model_checkpoint(const std::string& path, const std::string& kind, const ObjectiveFlags& objectives,
                           const ModelParameters<float>& params);

struct LoadedModel {
    std::string kind;
    ObjectiveFlags objectives;
    ModelParameters<float> params;
};

LoadedModel load_model_checkpoint(const std::string& path);

}  // namespace blum::encoder
