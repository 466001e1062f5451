#include "loralab/trainer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "loralab/rng.hpp"
#include "loralab/uncertainty.hpp"

namespace loralab {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
    if (lr * weight_decay >= 1.0) {
        throw std::invalid_argument("lr * weight_decay must be < 1 (decay step would overshoot)");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be >= 0");
}

OptimizerState OptimizerState::init(const std::vector<TrainableParam>& params) {
    OptimizerState st;
    st.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.slots[i].m.assign(params[i].tensor.numel(), 0.0);
        st.slots[i].v.assign(params[i].tensor.numel(), 0.0);
    }
    return st;
}

void adam_step_hybrid(std::vector<TrainableParam>& params, OptimizerState& state,
                      const TrainConfig& cfg) {
    if (state.slots.size() != params.size()) {
        throw std::logic_error("optimizer state does not match parameter list");
    }
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        TrainableParam& p = params[i];
        OptimizerState::Slot& slot = state.slots[i];
        if (slot.m.size() != p.tensor.numel()) {
            throw std::logic_error("optimizer slot size mismatch for " + p.name);
        }
        double* w = p.tensor.data();
        double* g = p.tensor.grad();
        const std::size_t n = p.tensor.numel();
        for (std::size_t j = 0; j < n; ++j) {
            slot.m[j] = cfg.beta1 * slot.m[j] + (1.0 - cfg.beta1) * g[j];
            slot.v[j] = cfg.beta2 * slot.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = slot.m[j] / bc1;
            const double vhat = slot.v[j] / bc2;
            double step = mhat / (std::sqrt(vhat) + cfg.eps);
            if (p.decay && cfg.weight_decay > 0.0) {
                step += cfg.paper_sign ? -cfg.weight_decay * w[j] : cfg.weight_decay * w[j];
            }
            w[j] -= cfg.lr * step;
        }
    }
}

namespace {

struct PreparedExample {
    std::vector<int> feed;       // prompt + continuation minus the final token
    std::vector<int> targets;    // per-row target ids, 0 on unsupervised rows
    std::vector<double> weights; // 1 on answer/stop rows, else 0
    long long answer_tokens = 0;
    int64_t id = 0;
};

bool prepare_example(const Example& ex, int max_seq_len, PreparedExample& out) {
    const std::vector<int> prompt = prompt_tokens(ex);
    const std::vector<int> cont = continuation_tokens(ex);
    out.feed = prompt;
    out.feed.insert(out.feed.end(), cont.begin(), cont.end() - 1);
    if (static_cast<int>(out.feed.size()) > max_seq_len) return false;
    out.targets.assign(out.feed.size(), 0);
    out.weights.assign(out.feed.size(), 0.0);
    for (std::size_t i = 0; i < cont.size(); ++i) {
        const std::size_t row = prompt.size() - 1 + i;
        out.targets[row] = cont[i];
        out.weights[row] = 1.0;
    }
    out.answer_tokens = static_cast<long long>(cont.size());
    out.id = ex.id;
    return true;
}

double global_grad_norm(const std::vector<TrainableParam>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        const double* g = p.tensor.grad();
        for (std::size_t j = 0; j < p.tensor.numel(); ++j) sq += g[j] * g[j];
    }
    return std::sqrt(sq);
}

TrainReport run_training(const ModelSnapshot& model, const std::vector<Example>& examples,
                         const TrainConfig& cfg, std::vector<TrainableParam>& params,
                         bool use_dropout) {
    TrainReport report;
    std::vector<PreparedExample> prepared;
    prepared.reserve(examples.size());
    for (const auto& ex : examples) {
        PreparedExample pe;
        if (prepare_example(ex, model.config.max_seq_len, pe)) {
            prepared.push_back(std::move(pe));
        } else {
            report.skipped_overlength += 1;
        }
    }
    if (prepared.empty()) return report;

    OptimizerState state = OptimizerState::init(params);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(prepared.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, 101, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        long long epoch_tokens = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            for (auto& p : params) p.tensor.zero_grad();
            long long batch_tokens = 0;
            for (std::size_t k = begin; k < end; ++k) {
                const PreparedExample& pe = prepared[order[k]];
                DropoutMode drop = DropoutMode::off();
                if (use_dropout) {
                    drop = DropoutMode::with_seed(derive_seed(cfg.seed, 202,
                                                              static_cast<std::uint64_t>(epoch),
                                                              static_cast<std::uint64_t>(pe.id)));
                }
                Tape tape;
                Tensor logits = forward_logits(model, pe.feed, drop, &tape);
                Tensor loss = cross_entropy_rows(logits, pe.targets, pe.weights, &tape);
                tape.backward(loss);
                epoch_loss += loss.value();
                batch_tokens += pe.answer_tokens;
            }
            const double inv = 1.0 / static_cast<double>(batch_tokens);
            for (auto& p : params) {
                double* g = p.tensor.grad();
                for (std::size_t j = 0; j < p.tensor.numel(); ++j) g[j] *= inv;
            }
            if (cfg.grad_clip > 0.0) {
                const double norm = global_grad_norm(params);
                if (norm > cfg.grad_clip) {
                    const double s = cfg.grad_clip / norm;
                    for (auto& p : params) {
                        double* g = p.tensor.grad();
                        for (std::size_t j = 0; j < p.tensor.numel(); ++j) g[j] *= s;
                    }
                }
            }
            adam_step_hybrid(params, state, cfg);
            epoch_tokens += batch_tokens;
        }
        report.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_tokens));
        report.optimizer_steps = state.step_count;
    }
    return report;
}

std::vector<TrainableParam> adapter_params(ModelSnapshot& snap) {
    std::vector<TrainableParam> params;
    params.reserve(snap.adapters.size() * 2);
    for (auto& ad : snap.adapters) {
        const std::string stem =
            "layer" + std::to_string(ad.layer) + "." + target_name(ad.target);
        params.push_back({ad.a, false, stem + ".a"});
        params.push_back({ad.b, true, stem + ".b"});
    }
    return params;
}

}  // namespace

TrainResult train(const ModelSnapshot& snap, const std::vector<Example>& examples,
                  const TrainConfig& cfg) {
    cfg.validate();
    snap.validate();
    if (snap.adapters.empty()) {
        throw std::invalid_argument("train: snapshot has no adapters to fine-tune");
    }
    ModelSnapshot next = clone_adapters(snap);
    next.snapshot_id = snap.snapshot_id + 1;
    std::vector<TrainableParam> params = adapter_params(next);
    TrainReport report = run_training(next, examples, cfg, params, cfg.adapter_dropout);
    return {std::move(next), std::move(report)};
}

TrainResult warmup(const ModelSnapshot& base, std::uint64_t adapter_seed,
                   const std::vector<Example>& examples, const TrainConfig& cfg) {
    if (base.snapshot_id != 0 || !base.adapters.empty()) {
        throw std::invalid_argument("warmup: expected the pristine base snapshot");
    }
    return train(with_fresh_adapters(base, adapter_seed), examples, cfg);
}

TrainResult pretrain_base(const ModelConfig& mcfg, std::uint64_t init_seed,
                          const std::vector<Example>& examples, const TrainConfig& cfg) {
    cfg.validate();
    mcfg.validate();
    ModelSnapshot snap = make_base_snapshot(mcfg, init_seed);
    std::vector<TrainableParam> params;
    snap.base->for_each_tensor([&](const std::string& name, Tensor& t) {
        t.set_requires_grad(true);
        params.push_back({t, false, name});
    });
    TrainReport report = run_training(snap, examples, cfg, params, false);
    snap.base->for_each_tensor([&](const std::string&, Tensor& t) {
        t.set_requires_grad(false);
        t.zero_grad();
    });
    snap.snapshot_id = 0;
    return {std::move(snap), std::move(report)};
}

}  // namespace loralab
