#include "loralab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "loralab/rng.hpp"

namespace loralab {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskedScore = -1e9;
constexpr uint32_t kSnapshotMagic = 0x4C4C4142;  // "LLAB"
constexpr uint32_t kSnapshotVersion = 1;

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 4) throw std::invalid_argument("vocab_size must be >= 4");
    if (d_model < 2 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 4)
        throw std::invalid_argument("model dims must be positive (max_seq_len >= 4)");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("d_model must be divisible by n_heads");
    if (lora_rank < 1 || lora_rank > std::min(d_model, d_ff))
        throw std::invalid_argument("lora_rank must be in [1, min(d_model, d_ff)]");
    if (lora_alpha <= 0.0) throw std::invalid_argument("lora_alpha must be positive");
    if (lora_dropout < 0.0 || lora_dropout >= 1.0)
        throw std::invalid_argument("lora_dropout must be in [0, 1)");
}

// ---- base weights -----------------------------------------------------------

void BaseWeights::for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("embedding", embedding);
    fn("pos_embedding", pos_embedding);
    for (size_t l = 0; l < layers.size(); ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        fn(p + "wq", layers[l].wq);
        fn(p + "wk", layers[l].wk);
        fn(p + "wv", layers[l].wv);
        fn(p + "wo", layers[l].wo);
        fn(p + "w1", layers[l].w1);
        fn(p + "w2", layers[l].w2);
        fn(p + "ln1_gain", layers[l].ln1_gain);
        fn(p + "ln1_bias", layers[l].ln1_bias);
        fn(p + "ln2_gain", layers[l].ln2_gain);
        fn(p + "ln2_bias", layers[l].ln2_bias);
    }
    fn("lnf_gain", lnf_gain);
    fn("lnf_bias", lnf_bias);
}

void BaseWeights::for_each_tensor(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<BaseWeights*>(this)->for_each_tensor(
        [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

uint64_t BaseWeights::content_hash() const {
    uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    auto feed = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ull;
        }
    };
    for_each_tensor([&feed](const std::string&, const Tensor& t) {
        feed(t.data(), t.numel() * sizeof(double));
    });
    return h;
}

BaseWeights init_base_weights(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xBA5E));
    BaseWeights w;
    double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    double ff_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
    w.embedding = Tensor::randn({cfg.vocab_size, cfg.d_model}, rng, 0.08);
    w.pos_embedding = Tensor::randn({cfg.max_seq_len, cfg.d_model}, rng, 0.08);
    w.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& l : w.layers) {
        l.wq = Tensor::randn({cfg.d_model, cfg.d_model}, rng, proj_std);
        l.wk = Tensor::randn({cfg.d_model, cfg.d_model}, rng, proj_std);
        l.wv = Tensor::randn({cfg.d_model, cfg.d_model}, rng, proj_std);
        l.wo = Tensor::randn({cfg.d_model, cfg.d_model}, rng, proj_std);
        l.w1 = Tensor::randn({cfg.d_model, cfg.d_ff}, rng, proj_std);
        l.w2 = Tensor::randn({cfg.d_ff, cfg.d_model}, rng, ff_std);
        l.ln1_gain = Tensor::from_data({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0));
        l.ln1_bias = Tensor::zeros({cfg.d_model});
        l.ln2_gain = Tensor::from_data({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0));
        l.ln2_bias = Tensor::zeros({cfg.d_model});
    }
    w.lnf_gain = Tensor::from_data({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0));
    w.lnf_bias = Tensor::zeros({cfg.d_model});
    return w;
}

// ---- adapters ---------------------------------------------------------------

const char* target_name(TargetMatrix t) {
    switch (t) {
        case TargetMatrix::wq: return "wq";
        case TargetMatrix::wk: return "wk";
        case TargetMatrix::wv: return "wv";
        case TargetMatrix::wo: return "wo";
        case TargetMatrix::w1: return "w1";
        case TargetMatrix::w2: return "w2";
    }
    throw std::logic_error("target_name: bad enum");
}

namespace {

// (rows of base matrix, cols of base matrix) per target
std::pair<int, int> target_dims(const ModelConfig& cfg, TargetMatrix t) {
    switch (t) {
        case TargetMatrix::wq:
        case TargetMatrix::wk:
        case TargetMatrix::wv:
        case TargetMatrix::wo: return {cfg.d_model, cfg.d_model};
        case TargetMatrix::w1: return {cfg.d_model, cfg.d_ff};
        case TargetMatrix::w2: return {cfg.d_ff, cfg.d_model};
    }
    throw std::logic_error("target_dims: bad enum");
}

}  // namespace

std::vector<LoraAdapter> init_adapters(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xADA7));
    std::vector<LoraAdapter> out;
    double a_std = 1.0 / std::sqrt(static_cast<double>(cfg.lora_rank));
    for (int l = 0; l < cfg.n_layers; ++l) {
        for (int t = 0; t < 6; ++t) {
            LoraAdapter ad;
            ad.layer = l;
            ad.target = static_cast<TargetMatrix>(t);
            auto [d, k] = target_dims(cfg, ad.target);
            ad.a = Tensor::randn({cfg.lora_rank, k}, rng, a_std, true);
            ad.b = Tensor::zeros({d, cfg.lora_rank}, true);
            ad.alpha = cfg.lora_alpha;
            ad.rank = cfg.lora_rank;
            ad.dropout_p = cfg.lora_dropout;
            out.push_back(std::move(ad));
        }
    }
    return out;
}

Tensor effective_weight(const Tensor& base_w, const LoraAdapter& ad) {
    Tensor delta = matmul(ad.b, ad.a, nullptr);
    if (delta.shape() != base_w.shape())
        throw std::invalid_argument("effective_weight: adapter dims do not match base matrix");
    Tensor out = base_w.clone();
    out.set_requires_grad(false);
    double s = ad.alpha / static_cast<double>(ad.rank);
    double* po = out.data();
    const double* pd = delta.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] += s * pd[i];
    check_finite(out, "effective_weight");
    return out;
}

// ---- snapshot ----------------------------------------------------------------

void ModelSnapshot::validate() const {
    config.validate();
    if (!base) throw std::invalid_argument("snapshot has no base weights");
    if (static_cast<int>(base->layers.size()) != config.n_layers)
        throw std::invalid_argument("snapshot base layer count does not match config");
    if (adapters.empty()) return;  // bare base
    size_t want = static_cast<size_t>(config.n_layers) * 6;
    if (adapters.size() != want)
        throw std::invalid_argument("snapshot must carry exactly six adapters per layer");
    for (size_t i = 0; i < adapters.size(); ++i) {
        const auto& ad = adapters[i];
        size_t expect = static_cast<size_t>(ad.layer) * 6 + static_cast<size_t>(ad.target);
        if (expect != i || ad.layer < 0 || ad.layer >= config.n_layers)
            throw std::invalid_argument("snapshot adapters out of order or duplicated");
        auto [d, k] = target_dims(config, ad.target);
        if (ad.a.shape() != std::vector<int>{ad.rank, k} ||
            ad.b.shape() != std::vector<int>{d, ad.rank})
            throw std::invalid_argument("adapter tensor dims are inconsistent");
    }
}

const LoraAdapter* ModelSnapshot::adapter_for(int layer, TargetMatrix t) const {
    if (adapters.empty()) return nullptr;
    size_t idx = static_cast<size_t>(layer) * 6 + static_cast<size_t>(t);
    return &adapters[idx];
}

ModelSnapshot make_base_snapshot(const ModelConfig& cfg, uint64_t base_seed) {
    ModelSnapshot s;
    s.config = cfg;
    s.base = std::make_shared<BaseWeights>(init_base_weights(cfg, base_seed));
    s.snapshot_id = 0;
    s.validate();
    return s;
}

ModelSnapshot with_fresh_adapters(const ModelSnapshot& snap, uint64_t adapter_seed) {
    ModelSnapshot s = snap;
    s.adapters = init_adapters(snap.config, adapter_seed);
    s.validate();
    return s;
}

ModelSnapshot clone_adapters(const ModelSnapshot& snap) {
    ModelSnapshot s = snap;
    for (auto& ad : s.adapters) {
        ad.a = ad.a.clone();
        ad.b = ad.b.clone();
    }
    return s;
}

// ---- forward ------------------------------------------------------------------

namespace {

// y = x * (base + (alpha/r) b a), adapter path optionally dropped out on its
// input activations. With b == 0 the adapter path contributes exactly zero.
Tensor adapted_linear(const Tensor& x, const Tensor& w, const LoraAdapter* ad, int adapter_index,
                      const DropoutMode& drop, Tape* tape) {
    Tensor y = matmul(x, w, tape);
    if (!ad) return y;
    Tensor xin = x;
    if (drop.on && ad->dropout_p > 0.0) {
        Tensor mask = dropout_mask(x.shape(), ad->dropout_p,
                                   derive_seed(drop.seed, static_cast<uint64_t>(adapter_index)));
        xin = mul(x, mask, tape);
    }
    Tensor low = matmul(xin, ad->b, tape);
    Tensor high = matmul(low, ad->a, tape);
    double s = ad->alpha / static_cast<double>(ad->rank);
    return add(y, scale(high, s, tape), tape);
}

Tensor causal_mask(int n) {
    Tensor m = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.at(i, j) = kMaskedScore;
    return m;
}

}  // namespace

Tensor forward_logits(const ModelSnapshot& snap, std::span<const int> tokens,
                      const DropoutMode& drop, Tape* tape) {
    const ModelConfig& cfg = snap.config;
    int n = static_cast<int>(tokens.size());
    if (n == 0) throw std::invalid_argument("forward_logits: empty token sequence");
    if (n > cfg.max_seq_len)
        throw std::invalid_argument("forward_logits: sequence of " + std::to_string(n) +
                                    " tokens exceeds max_seq_len=" + std::to_string(cfg.max_seq_len));
    const BaseWeights& bw = *snap.base;

    std::vector<int> positions(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) positions[static_cast<size_t>(i)] = i;

    Tensor h = add(embedding_lookup(bw.embedding, tokens, tape),
                   embedding_lookup(bw.pos_embedding, positions, tape), tape);
    Tensor mask = causal_mask(n);
    int hd = cfg.head_dim();
    double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = bw.layers[static_cast<size_t>(l)];
        int base_idx = l * 6;
        Tensor a = layer_norm_rows(h, lw.ln1_gain, lw.ln1_bias, kLnEps, tape);
        Tensor q = adapted_linear(a, lw.wq, snap.adapter_for(l, TargetMatrix::wq), base_idx + 0, drop, tape);
        Tensor k = adapted_linear(a, lw.wk, snap.adapter_for(l, TargetMatrix::wk), base_idx + 1, drop, tape);
        Tensor v = adapted_linear(a, lw.wv, snap.adapter_for(l, TargetMatrix::wv), base_idx + 2, drop, tape);
        std::vector<Tensor> heads;
        heads.reserve(static_cast<size_t>(cfg.n_heads));
        for (int hh = 0; hh < cfg.n_heads; ++hh) {
            Tensor qh = slice_cols(q, hh * hd, hd, tape);
            Tensor kh = slice_cols(k, hh * hd, hd, tape);
            Tensor vh = slice_cols(v, hh * hd, hd, tape);
            Tensor scores = add(scale(matmul_nt(qh, kh, tape), att_scale, tape), mask, tape);
            Tensor probs = softmax_rows(scores, tape);
            heads.push_back(matmul(probs, vh, tape));
        }
        Tensor attn = concat_cols(heads, tape);
        Tensor o = adapted_linear(attn, lw.wo, snap.adapter_for(l, TargetMatrix::wo), base_idx + 3, drop, tape);
        h = add(h, o, tape);
        Tensor f = layer_norm_rows(h, lw.ln2_gain, lw.ln2_bias, kLnEps, tape);
        Tensor z = gelu(adapted_linear(f, lw.w1, snap.adapter_for(l, TargetMatrix::w1), base_idx + 4, drop, tape), tape);
        Tensor y = adapted_linear(z, lw.w2, snap.adapter_for(l, TargetMatrix::w2), base_idx + 5, drop, tape);
        h = add(h, y, tape);
    }
    h = layer_norm_rows(h, bw.lnf_gain, bw.lnf_bias, kLnEps, tape);
    return matmul_nt(h, bw.embedding, tape);  // tied output projection
}

std::vector<int> generate_greedy(const ModelSnapshot& snap, std::span<const int> prompt,
                                 int max_new, int stop_token, const DropoutMode& drop) {
    if (prompt.empty()) throw std::invalid_argument("generate_greedy: empty prompt");
    if (stop_token < 0 || stop_token >= snap.config.vocab_size)
        throw std::invalid_argument("generate_greedy: stop token out of range");
    if (max_new < 0) throw std::invalid_argument("generate_greedy: negative max_new");
    std::vector<int> seq(prompt.begin(), prompt.end());
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        if (static_cast<int>(seq.size()) > snap.config.max_seq_len - 1) break;  // context full
        Tensor logits = forward_logits(snap, seq, drop, nullptr);
        int n = logits.rows(), v = logits.cols();
        std::span<const double> row(logits.data() + static_cast<size_t>(n - 1) * v,
                                    static_cast<size_t>(v));
        int tok = argmax_index(row);
        if (tok == stop_token) break;
        out.push_back(tok);
        seq.push_back(tok);
    }
    return out;
}

std::vector<double> sequence_logprobs(const ModelSnapshot& snap, std::span<const int> prompt,
                                      std::span<const int> response, const DropoutMode& drop) {
    if (prompt.empty() || response.empty())
        throw std::invalid_argument("sequence_logprobs: prompt and response must be non-empty");
    size_t total = prompt.size() + response.size();
    if (total > static_cast<size_t>(snap.config.max_seq_len))
        throw std::invalid_argument("sequence_logprobs: prompt+response exceeds max_seq_len");
    // feed everything except the final response token; its row is never used
    std::vector<int> seq(prompt.begin(), prompt.end());
    seq.insert(seq.end(), response.begin(), response.end() - 1);
    Tensor logits = forward_logits(snap, seq, drop, nullptr);
    int v = logits.cols();
    std::vector<double> out(response.size());
    for (size_t i = 0; i < response.size(); ++i) {
        size_t rowi = prompt.size() - 1 + i;
        std::span<const double> row(logits.data() + rowi * static_cast<size_t>(v),
                                    static_cast<size_t>(v));
        int tok = response[i];
        if (tok < 0 || tok >= v)
            throw std::invalid_argument("sequence_logprobs: response token out of range");
        out[i] = row[static_cast<size_t>(tok)] - log_sum_exp(row);
    }
    return out;
}

// ---- serialization ---------------------------------------------------------------

namespace {

void write_u32(std::ostream& o, uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void write_i32(std::ostream& o, int32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& o, int64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& o, double v) { o.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& i) {
    uint32_t v;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int32_t read_i32(std::istream& i) {
    int32_t v;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int64_t read_i64(std::istream& i) {
    int64_t v;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double read_f64(std::istream& i) {
    double v;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void write_tensor(std::ostream& o, const Tensor& t) {
    write_u32(o, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_i32(o, d);
    o.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

Tensor read_tensor(std::istream& i, bool requires_grad) {
    uint32_t nd = read_u32(i);
    if (nd == 0 || nd > 4) throw std::runtime_error("snapshot file: bad tensor rank");
    std::vector<int> shape(nd);
    for (auto& d : shape) d = read_i32(i);
    Tensor t = Tensor::zeros(shape, requires_grad);
    i.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!i) throw std::runtime_error("snapshot file: truncated tensor data");
    return t;
}

}  // namespace

void save_snapshot(const std::string& path, const ModelSnapshot& snap) {
    snap.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_u32(out, kSnapshotMagic);
    write_u32(out, kSnapshotVersion);
    const ModelConfig& c = snap.config;
    write_i32(out, c.vocab_size);
    write_i32(out, c.d_model);
    write_i32(out, c.n_layers);
    write_i32(out, c.n_heads);
    write_i32(out, c.d_ff);
    write_i32(out, c.max_seq_len);
    write_i32(out, c.lora_rank);
    write_f64(out, c.lora_alpha);
    write_f64(out, c.lora_dropout);
    write_i64(out, snap.snapshot_id);
    snap.base->for_each_tensor(
        [&out](const std::string&, const Tensor& t) { write_tensor(out, t); });
    write_u32(out, static_cast<uint32_t>(snap.adapters.size()));
    for (const auto& ad : snap.adapters) {
        write_i32(out, ad.layer);
        write_i32(out, static_cast<int32_t>(ad.target));
        write_f64(out, ad.alpha);
        write_i32(out, ad.rank);
        write_f64(out, ad.dropout_p);
        write_tensor(out, ad.a);
        write_tensor(out, ad.b);
    }
    if (!out) throw std::runtime_error("failed while writing: " + path);
}

ModelSnapshot load_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    if (read_u32(in) != kSnapshotMagic) throw std::runtime_error(path + ": not a snapshot file");
    uint32_t ver = read_u32(in);
    if (ver != kSnapshotVersion)
        throw std::runtime_error(path + ": unsupported snapshot version " + std::to_string(ver));
    ModelSnapshot snap;
    ModelConfig& c = snap.config;
    c.vocab_size = read_i32(in);
    c.d_model = read_i32(in);
    c.n_layers = read_i32(in);
    c.n_heads = read_i32(in);
    c.d_ff = read_i32(in);
    c.max_seq_len = read_i32(in);
    c.lora_rank = read_i32(in);
    c.lora_alpha = read_f64(in);
    c.lora_dropout = read_f64(in);
    snap.snapshot_id = read_i64(in);
    c.validate();
    snap.base = std::make_shared<BaseWeights>();
    snap.base->layers.resize(static_cast<size_t>(c.n_layers));
    snap.base->for_each_tensor(
        [&in](const std::string&, Tensor& t) { t = read_tensor(in, false); });
    uint32_t n_adapters = read_u32(in);
    for (uint32_t i = 0; i < n_adapters; ++i) {
        LoraAdapter ad;
        ad.layer = read_i32(in);
        ad.target = static_cast<TargetMatrix>(read_i32(in));
        ad.alpha = read_f64(in);
        ad.rank = read_i32(in);
        ad.dropout_p = read_f64(in);
        ad.a = read_tensor(in, true);
        ad.b = read_tensor(in, true);
        snap.adapters.push_back(std::move(ad));
    }
    if (!in) throw std::runtime_error(path + ": truncated snapshot file");
    snap.validate();
    return snap;
}

}  // namespace loralab
