#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loralab/model.hpp"
#include "loralab/tasks.hpp"

namespace loralab {

struct TrainConfig {
    double lr = 3e-4;
    double weight_decay = 0.01;  // decoupled, applied only to params flagged decay
    // The corrected update shrinks decayed weights: w -= lr * (ghat + wd * w).
    // true restores the sign as originally published, which grows them.
    bool paper_sign = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 15;
    int batch_size = 16;
    double grad_clip = 0.0;  // global-norm clip, 0 disables
    bool adapter_dropout = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainableParam {
    Tensor tensor;
    bool decay = false;
    std::string name;
};

struct OptimizerState {
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Slot> slots;
    long long step_count = 0;

    static OptimizerState init(const std::vector<TrainableParam>& params);
};

// One Adam step with bias correction plus decoupled decay on flagged params.
// With zero gradients and zero moments the gradient part is exactly zero, so
// a decayed weight shrinks by exactly (1 - lr * wd) per step.
void adam_step_hybrid(std::vector<TrainableParam>& params, OptimizerState& state,
                      const TrainConfig& cfg);

struct TrainReport {
    std::vector<double> epoch_mean_loss;  // mean cross entropy per supervised token
    int skipped_overlength = 0;
    long long optimizer_steps = 0;
};

struct TrainResult {
    ModelSnapshot snapshot;
    TrainReport report;
};

// Fine-tunes the adapters of `snap` on `examples` (continual: starts from the
// incoming adapter weights, fresh optimizer moments). The base stays frozen.
// Loss is the summed cross entropy over answer and stop positions, gradients
// scaled by the number of supervised tokens in the batch. Returns a new
// snapshot with snapshot_id + 1; the input is not modified. Examples whose
// tokenized form exceeds the context window are skipped and counted.
TrainResult train(const ModelSnapshot& snap, const std::vector<Example>& examples,
                  const TrainConfig& cfg);

// First fit after seeding the labeled set: requires the pristine base
// (snapshot_id 0, no adapters), attaches fresh adapters and trains them.
TrainResult warmup(const ModelSnapshot& base, std::uint64_t adapter_seed,
                   const std::vector<Example>& examples, const TrainConfig& cfg);

// Trains the backbone itself (no adapters) with plain Adam; the decay flag is
// off for every tensor. Returns a bare-base snapshot with snapshot_id 0.
TrainResult pretrain_base(const ModelConfig& mcfg, std::uint64_t init_seed,
                          const std::vector<Example>& examples, const TrainConfig& cfg);

}  // namespace loralab
