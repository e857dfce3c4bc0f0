#include "blum/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "blum/rng.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");

namespace blum::encoder {

using nlohmann::json;

const char* positional_mode_name(PositionalMode m) {
    switch (m) {
        case PositionalMode::alibi: return "alibi";
        case PositionalMode::learned_absolute: return "learned_absolute";
        case PositionalMode::none: return "none";
    }
    return "?";
}

PositionalMode parse_positional_mode(const std::string& s) {
    if (s == "alibi") return PositionalMode::alibi;
    if (s == "learned_absolute") return PositionalMode::learned_absolute;
    if (s == "none") return PositionalMode::none;
    throw std::invalid_argument("unknown positional_mode '" + s + "'");
}

const char* attention_mode_name(AttentionMode m) {
    return m == AttentionMode::bidirectional ? "bidirectional" : "causal";
}

AttentionMode parse_attention_mode(const std::string& s) {
    if (s == "bidirectional") return AttentionMode::bidirectional;
    if (s == "causal") return AttentionMode::causal;
    throw std::invalid_argument("unknown attention_mode '" + s + "'");
}

void ModelConfig::validate() const {
    if (num_layers < 1) throw std::invalid_argument("ModelConfig: num_layers must be >= 1");
    if (hidden_dim < 1 || num_heads < 1 || ffn_dim < 1) throw std::invalid_argument("ModelConfig: dims must be >= 1");
    if (hidden_dim % num_heads != 0)
        throw std::invalid_argument("ModelConfig: hidden_dim must be divisible by num_heads");
    if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
    if (max_train_len < 1) throw std::invalid_argument("ModelConfig: max_train_len must be >= 1");
    if (max_infer_len < max_train_len) throw std::invalid_argument("ModelConfig: max_infer_len < max_train_len");
}

json ModelConfig::to_json() const {
    return json{{"num_layers", num_layers},
                {"hidden_dim", hidden_dim},
                {"num_heads", num_heads},
                {"ffn_dim", ffn_dim},
                {"vocab_size", vocab_size},
                {"max_train_len", max_train_len},
                {"max_infer_len", max_infer_len},
                {"positional_mode", positional_mode_name(positional_mode)},
                {"attention_mode", attention_mode_name(attention_mode)}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    c.num_layers = j.value("num_layers", c.num_layers);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_train_len = j.value("max_train_len", c.max_train_len);
    c.max_infer_len = j.value("max_infer_len", c.max_infer_len);
    c.positional_mode = parse_positional_mode(j.value("positional_mode", std::string("alibi")));
    c.attention_mode = parse_attention_mode(j.value("attention_mode", std::string("bidirectional")));
    return c;
}

std::vector<double> alibi_slopes(int num_heads) {
    std::vector<double> slopes(static_cast<std::size_t>(num_heads));
    for (int h = 0; h < num_heads; ++h) slopes[static_cast<std::size_t>(h)] = std::pow(2.0, -(h + 1));
    return slopes;
}

Mat<double> alibi_bias(int seq_len, int head_index, int num_heads) {
    if (seq_len < 1) throw std::invalid_argument("alibi_bias: seq_len must be >= 1");
    if (head_index < 0 || head_index >= num_heads) throw std::invalid_argument("alibi_bias: head_index out of range");
    const double slope = std::pow(2.0, -(head_index + 1));
    Mat<double> bias(seq_len, seq_len);
    for (int i = 0; i < seq_len; ++i)
        for (int j = 0; j < seq_len; ++j) bias(i, j) = -slope * (i > j ? i - j : j - i);
    return bias;
}

// ---- parameter traversal ----

namespace {

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    std::size_t size;
    void* data;  // Real*
};

template <class Real>
std::vector<TensorRef> tensor_refs(ModelParameters<Real>& p) {
    std::vector<TensorRef> refs;
    auto mat = [&](const std::string& name, Mat<Real>& m) {
        refs.push_back({name, {m.rows, m.cols}, m.size(), m.data()});
    };
    auto vec = [&](const std::string& name, Vec<Real>& v) {
        refs.push_back({name, {static_cast<int>(v.size())}, v.size(), v.data()});
    };
    mat("embedding", p.embedding);
    if (!p.pos_table.empty()) mat("pos_table", p.pos_table);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        auto& l = p.layers[i];
        mat(prefix + "attn.wq", l.wq);
        vec(prefix + "attn.bq", l.bq);
        mat(prefix + "attn.wk", l.wk);
        vec(prefix + "attn.bk", l.bk);
        mat(prefix + "attn.wv", l.wv);
        vec(prefix + "attn.bv", l.bv);
        mat(prefix + "attn.wo", l.wo);
        vec(prefix + "attn.bo", l.bo);
        vec(prefix + "ln1.g", l.ln1_g);
        vec(prefix + "ln1.b", l.ln1_b);
        mat(prefix + "ffn.w1", l.w1);
        vec(prefix + "ffn.b1", l.b1);
        mat(prefix + "ffn.w2", l.w2);
        vec(prefix + "ffn.b2", l.b2);
        vec(prefix + "ln2.g", l.ln2_g);
        vec(prefix + "ln2.b", l.ln2_b);
    }
    vec("final_norm.g", p.lnf_g);
    vec("final_norm.b", p.lnf_b);
    mat("mbp.w", p.mbp_w);
    vec("mbp.b", p.mbp_b);
    return refs;
}

}  // namespace

template <class Real>
ModelParameters<Real> ModelParameters<Real>::zeros_like(const ModelConfig& config) {
    config.validate();
    ModelParameters<Real> p;
    p.config = config;
    const int d = config.hidden_dim;
    p.embedding.resize(config.vocab_size, d);
    if (config.positional_mode == PositionalMode::learned_absolute) p.pos_table.resize(config.max_train_len, d);
    p.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (auto& l : p.layers) {
        l.wq.resize(d, d);
        l.wk.resize(d, d);
        l.wv.resize(d, d);
        l.wo.resize(d, d);
        l.bq.assign(static_cast<std::size_t>(d), Real(0));
        l.bk.assign(static_cast<std::size_t>(d), Real(0));
        l.bv.assign(static_cast<std::size_t>(d), Real(0));
        l.bo.assign(static_cast<std::size_t>(d), Real(0));
        l.ln1_g.assign(static_cast<std::size_t>(d), Real(0));
        l.ln1_b.assign(static_cast<std::size_t>(d), Real(0));
        l.ln2_g.assign(static_cast<std::size_t>(d), Real(0));
        l.ln2_b.assign(static_cast<std::size_t>(d), Real(0));
        l.w1.resize(d, config.ffn_dim);
        l.b1.assign(static_cast<std::size_t>(config.ffn_dim), Real(0));
        l.w2.resize(config.ffn_dim, d);
        l.b2.assign(static_cast<std::size_t>(d), Real(0));
    }
    p.lnf_g.assign(static_cast<std::size_t>(d), Real(0));
    p.lnf_b.assign(static_cast<std::size_t>(d), Real(0));
    p.mbp_w.resize(d, config.vocab_size);
    p.mbp_b.assign(static_cast<std::size_t>(config.vocab_size), Real(0));
    return p;
}

template <class Real>
ModelParameters<Real> ModelParameters<Real>::init(const ModelConfig& config, std::uint64_t seed) {
    ModelParameters<Real> p = zeros_like(config);
    // every tensor draws from its own named stream: adding or removing the
    // position table never shifts another tensor's values
    auto fill_normal = [&](const std::string& name, Real* data, std::size_t n, double stddev) {
        Rng rng(derive_seed(seed, name));
        for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<Real>(rng.normal(0.0, stddev));
    };
    const double d_std = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
    const double f_std = 1.0 / std::sqrt(static_cast<double>(config.ffn_dim));
    fill_normal("embedding", p.embedding.data(), p.embedding.size(), d_std);
    if (!p.pos_table.empty()) fill_normal("pos_table", p.pos_table.data(), p.pos_table.size(), d_std);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        auto& l = p.layers[i];
        fill_normal(prefix + "attn.wq", l.wq.data(), l.wq.size(), d_std);
        fill_normal(prefix + "attn.wk", l.wk.data(), l.wk.size(), d_std);
        fill_normal(prefix + "attn.wv", l.wv.data(), l.wv.size(), d_std);
        fill_normal(prefix + "attn.wo", l.wo.data(), l.wo.size(), d_std);
        fill_normal(prefix + "ffn.w1", l.w1.data(), l.w1.size(), d_std);
        fill_normal(prefix + "ffn.w2", l.w2.data(), l.w2.size(), f_std);
        std::fill(l.ln1_g.begin(), l.ln1_g.end(), Real(1));
        std::fill(l.ln2_g.begin(), l.ln2_g.end(), Real(1));
    }
    std::fill(p.lnf_g.begin(), p.lnf_g.end(), Real(1));
    fill_normal("mbp.w", p.mbp_w.data(), p.mbp_w.size(), d_std);
    return p;
}

template <class Real>
void ModelParameters<Real>::for_each_tensor(const std::function<void(const std::string&, Real*, std::size_t)>& fn) {
    for (auto& r : tensor_refs(*this)) fn(r.name, static_cast<Real*>(r.data), r.size);
}

template <class Real>
void ModelParameters<Real>::for_each_tensor(
    const std::function<void(const std::string&, const Real*, std::size_t)>& fn) const {
    for (auto& r : tensor_refs(const_cast<ModelParameters<Real>&>(*this)))
        fn(r.name, static_cast<const Real*>(r.data), r.size);
}

template <class Real>
std::size_t ModelParameters<Real>::num_parameters() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const Real*, std::size_t sz) { n += sz; });
    return n;
}

template <class Real>
bool ModelParameters<Real>::all_finite() const {
    bool ok = true;
    for_each_tensor([&](const std::string&, const Real* d, std::size_t sz) {
        for (std::size_t i = 0; i < sz; ++i)
            if (!std::isfinite(static_cast<double>(d[i]))) ok = false;
    });
    return ok;
}

template <class Real>
void ModelParameters<Real>::zero() {
    for_each_tensor([](const std::string&, Real* d, std::size_t sz) { std::fill(d, d + sz, Real(0)); });
}

template struct ModelParameters<float>;
template struct ModelParameters<double>;

namespace {

template <class Out, class In>
ModelParameters<Out> convert(const ModelParameters<In>& p) {
    ModelParameters<Out> out = ModelParameters<Out>::zeros_like(p.config);
    auto src = tensor_refs(const_cast<ModelParameters<In>&>(p));
    auto dst = tensor_refs(out);
    for (std::size_t t = 0; t < src.size(); ++t) {
        const In* s = static_cast<const In*>(src[t].data);
        Out* d = static_cast<Out*>(dst[t].data);
        for (std::size_t i = 0; i < src[t].size; ++i) d[i] = static_cast<Out>(s[i]);
    }
    return out;
}

}  // namespace

ModelParameters<double> to_double(const ModelParameters<float>& p) { return convert<double, float>(p); }
ModelParameters<float> to_float(const ModelParameters<double>& p) { return convert<float, double>(p); }

// ---- checkpoint container ----

namespace {
constexpr char kMagic[8] = {'B', 'L', 'U', 'M', 'C', 'K', 'P', '1'};
}

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json header;
    header["kind"] = ckpt.kind;
    header["meta"] = ckpt.meta;
    json tensors = json::array();
    for (const auto& t : ckpt.tensors) {
        std::size_t expect = 1;
        for (int s : t.shape) expect *= static_cast<std::size_t>(s);
        if (expect != t.values.size())
            throw std::invalid_argument("checkpoint: tensor '" + t.name + "' shape/value mismatch");
        tensors.push_back(json{{"name", t.name}, {"shape", t.shape}});
    }
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& t : ckpt.tensors)
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    json header = json::parse(hs);

    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.meta = header.value("meta", json::object());
    for (const auto& tj : header.at("tensors")) {
        NamedTensor t;
        t.name = tj.at("name").get<std::string>();
        t.shape = tj.at("shape").get<std::vector<int>>();
        std::size_t n = 1;
        for (int s : t.shape) {
            if (s < 0) throw std::runtime_error("checkpoint: negative dimension in tensor '" + t.name + "'");
            n *= static_cast<std::size_t>(s);
        }
        t.values.resize(n);
        in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (!in) throw std::runtime_error("truncated checkpoint payload at tensor '" + t.name + "': " + path);
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

void save_model_checkpoint(const std::string& path, const std::string& kind, const ObjectiveFlags& objectives,
                           const ModelParameters<float>& params) {
    Checkpoint ckpt;
    ckpt.kind = kind;
    ckpt.meta = json{{"config", params.config.to_json()},
                     {"objectives", json{{"mbp", objectives.mbp}, {"ucl", objectives.ucl}, {"nbp", objectives.nbp}}}};
    for (auto& r : tensor_refs(const_cast<ModelParameters<float>&>(params))) {
        NamedTensor t;
        t.name = r.name;
        t.shape = r.shape;
        const float* d = static_cast<const float*>(r.data);
        t.values.assign(d, d + r.size);
        ckpt.tensors.push_back(std::move(t));
    }
    save_checkpoint(path, ckpt);
}

LoadedModel load_model_checkpoint(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    LoadedModel m;
    m.kind = ckpt.kind;
    const json& obj = ckpt.meta.at("objectives");
    m.objectives.mbp = obj.value("mbp", false);
    m.objectives.ucl = obj.value("ucl", false);
    m.objectives.nbp = obj.value("nbp", false);
    m.params = ModelParameters<float>::zeros_like(ModelConfig::from_json(ckpt.meta.at("config")));

    auto refs = tensor_refs(m.params);
    if (refs.size() != ckpt.tensors.size())
        throw std::runtime_error("checkpoint: expected " + std::to_string(refs.size()) + " tensors, found " +
                                 std::to_string(ckpt.tensors.size()));
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const NamedTensor& t = ckpt.tensor(refs[i].name);
        if (t.shape != refs[i].shape)
            throw std::runtime_error("checkpoint: tensor '" + refs[i].name + "' has inconsistent shape");
        std::memcpy(refs[i].data, t.values.data(), t.values.size() * sizeof(float));
    }
    return m;
}

}  // namespace blum::encoder
