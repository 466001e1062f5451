#pragma once

// Shared helpers for the test suites: a micro model configuration small
// enough for finite differences, and a central-difference gradient checker
// that replays a caller-supplied loss closure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "loralab/model.hpp"
#include "loralab/tensor.hpp"

namespace testutil {

inline loralab::ModelConfig micro_config() {
    loralab::ModelConfig cfg;
    cfg.vocab_size = 11;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_seq_len = 12;
    cfg.lora_rank = 2;
    cfg.lora_alpha = 4.0;
    cfg.lora_dropout = 0.1;
    return cfg;
}

// Base snapshot with every weight zeroed and all layer-norm gains zero, so
// the final hidden state equals lnf_bias at every position regardless of the
// input tokens. With lnf_bias = e_0 and the tied output projection, the logit
// of token v is embedding[v][0]; `spikes` sets exactly those entries. The
// result: a model with one fixed, fully controlled next-token distribution.
inline loralab::ModelSnapshot constant_logit_snapshot(
    const loralab::ModelConfig& cfg, const std::vector<std::pair<int, double>>& spikes) {
    loralab::ModelSnapshot snap = loralab::make_base_snapshot(cfg, 1);
    snap.base->for_each_tensor([](const std::string&, loralab::Tensor& t) {
        std::fill(t.data(), t.data() + t.numel(), 0.0);
    });
    snap.base->lnf_bias.data()[0] = 1.0;
    for (const auto& [token, logit] : spikes) {
        snap.base->embedding.at(token, 0) = logit;
    }
    return snap;
}

struct ParamFd {
    std::string name;
    double max_rel = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Central finite differences against already-populated gradients. `eval` must
// recompute the loss from the parameters' current values on a fresh graph and
// must not touch any gradient buffer. Relative error is measured against the
// larger of the two estimates with a small absolute floor.
inline std::vector<ParamFd> fd_check_each(
    std::vector<std::pair<std::string, loralab::Tensor>>& params,
    const std::function<double()>& eval, double h = 1e-5) {
    std::vector<ParamFd> out;
    out.reserve(params.size());
    for (auto& [name, t] : params) {
        ParamFd rep;
        rep.name = name;
        const double* g = t.grad();
        double* d = t.data();
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double keep = d[i];
            d[i] = keep + h;
            const double up = eval();
            d[i] = keep - h;
            const double dn = eval();
            d[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double rel =
                std::abs(g[i] - fd) / std::max({1e-7, std::abs(g[i]), std::abs(fd)});
            ++rep.checked;
            if (rel > rep.max_rel) {
                rep.max_rel = rel;
                rep.worst_index = i;
            }
        }
        out.push_back(std::move(rep));
    }
    return out;
}

inline double fd_max_rel(std::vector<std::pair<std::string, loralab::Tensor>>& params,
                         const std::function<double()>& eval, double h = 1e-5) {
    double worst = 0.0;
    for (const auto& rep : fd_check_each(params, eval, h)) worst = std::max(worst, rep.max_rel);
    return worst;
}

}  // namespace testutil
