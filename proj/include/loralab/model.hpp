#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "loralab/tensor.hpp"

namespace loralab {

struct ModelConfig {
    int vocab_size = 24;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 128;
    int max_seq_len = 64;
    int lora_rank = 8;
    double lora_alpha = 16.0;
    double lora_dropout = 0.1;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
    Tensor wq, wk, wv, wo;  // [d_model, d_model]
    Tensor w1;              // [d_model, d_ff]
    Tensor w2;              // [d_ff, d_model]
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

// Frozen (outside pretraining) backbone. The output projection is tied to the
// embedding table.
struct BaseWeights {
    Tensor embedding;      // [vocab, d_model]
    Tensor pos_embedding;  // [max_seq_len, d_model]
    std::vector<LayerWeights> layers;
    Tensor lnf_gain, lnf_bias;

    // fixed iteration order; used by the trainer, serialization and hashing
    void for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_tensor(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    uint64_t content_hash() const;  // FNV-1a over raw bytes, order as above
};

BaseWeights init_base_weights(const ModelConfig& cfg, uint64_t seed);

// adapted projections, in adapter-vector order within one layer
enum class TargetMatrix { wq = 0, wk = 1, wv = 2, wo = 3, w1 = 4, w2 = 5 };
const char* target_name(TargetMatrix t);

// Low-rank residual on one base matrix W[d, k]: delta = (alpha / rank) * b * a
// with b[d, rank] zero-initialized and a[rank, k] Gaussian with stddev
// 1/sqrt(rank). Input activations hit b first: x -> x*b -> (x*b)*a.
struct LoraAdapter {
    int layer = 0;
    TargetMatrix target = TargetMatrix::wq;
    Tensor a;
    Tensor b;
    double alpha = 16.0;
    int rank = 8;
    double dropout_p = 0.1;
};

// one adapter per (layer, target), order: layer-major then TargetMatrix order
std::vector<LoraAdapter> init_adapters(const ModelConfig& cfg, uint64_t seed);

// base_w + (alpha / rank) * b * a, materialized
Tensor effective_weight(const Tensor& base_w, const LoraAdapter& ad);

// A model state: shared frozen base + owned adapters. snapshot_id 0 is the
// untrained base (zero adapters or none at all); training bumps the id.
struct ModelSnapshot {
    ModelConfig config;
    std::shared_ptr<BaseWeights> base;
    std::vector<LoraAdapter> adapters;  // empty (bare base) or 6 * n_layers
    int64_t snapshot_id = 0;

    void validate() const;
    const LoraAdapter* adapter_for(int layer, TargetMatrix t) const;
};

ModelSnapshot make_base_snapshot(const ModelConfig& cfg, uint64_t base_seed);
// same base, freshly initialized adapters (b == 0), id preserved
ModelSnapshot with_fresh_adapters(const ModelSnapshot& snap, uint64_t adapter_seed);
// deep-copies adapter tensors (continual training), shares the base
ModelSnapshot clone_adapters(const ModelSnapshot& snap);

struct DropoutMode {
    bool on = false;
    uint64_t seed = 0;
    static DropoutMode off() { return {false, 0}; }
    static DropoutMode with_seed(uint64_t s) { return {true, s}; }
};

// Full forward pass: token ids -> [len, vocab] logits. Causal masking, next
// token at position i is predicted from logits row i. Pure function of
// (snapshot, tokens, dropout mode); pass a tape to record for backward.
Tensor forward_logits(const ModelSnapshot& snap, std::span<const int> tokens,
                      const DropoutMode& drop, Tape* tape = nullptr);

// Greedy argmax decode (ties toward the lowest token id). Returns generated
// tokens, stop token excluded. Stops at stop_token, max_new tokens, or a full
// context window.
std::vector<int> generate_greedy(const ModelSnapshot& snap, std::span<const int> prompt,
                                 int max_new, int stop_token,
                                 const DropoutMode& drop = DropoutMode::off());

// log p(response[i] | prompt, response[..i]) for each response token
std::vector<double> sequence_logprobs(const ModelSnapshot& snap, std::span<const int> prompt,
                                      std::span<const int> response,
                                      const DropoutMode& drop = DropoutMode::off());

// single-file binary snapshot, format-versioned, bit-exact round trip
void save_snapshot(const std::string& path, const ModelSnapshot& snap);
ModelSnapshot load_snapshot(const std::string& path);

}  // namespace loralab
