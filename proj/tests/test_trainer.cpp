#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "loralab/metrics.hpp"
#include "loralab/rng.hpp"
#include "loralab/trainer.hpp"
#include "testutil.hpp"

using namespace loralab;

namespace {

Example toy(int64_t id, std::vector<int> prompt, std::vector<int> gold) {
    Example ex;
    ex.id = id;
    ex.prompt = std::move(prompt);
    ex.gold = std::move(gold);
    return ex;
}

// four distinguishable prompt->answer pairs inside the micro vocabulary
std::vector<Example> memorizable_set() {
    return {
        toy(1, {3, 4}, {5}),
        toy(2, {4, 3}, {6}),
        toy(3, {5, 6}, {7}),
        toy(4, {6, 5}, {8}),
    };
}

// same answer tokens, disjoint prompts: a stand-in pretraining corpus
std::vector<Example> pretrain_set() {
    return {
        toy(101, {7, 8}, {5}),  toy(102, {8, 7}, {6}), toy(103, {9, 10}, {7}),
        toy(104, {10, 9}, {8}), toy(105, {3, 7}, {5}), toy(106, {4, 8}, {6}),
    };
}

// Adapters fine-tune against a frozen backbone, so memorization tests need a
// base whose (tied) embedding rows carry usable logit scale; a raw random
// init caps the reachable loss. Pretraining provides that, as in production.
const ModelSnapshot& pretrained_micro_base() {
    static const ModelSnapshot snap = [] {
        TrainConfig cfg;
        cfg.lr = 0.01;
        cfg.weight_decay = 0.0;
        cfg.epochs = 200;
        cfg.batch_size = 3;
        cfg.adapter_dropout = false;
        cfg.seed = 500;
        return pretrain_base(testutil::micro_config(), 501, pretrain_set(), cfg).snapshot;
    }();
    return snap;
}

double fro_norm(const Tensor& t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) sq += t.data()[i] * t.data()[i];
    return std::sqrt(sq);
}

double adapter_delta(const ModelSnapshot& a, const ModelSnapshot& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.adapters.size(); ++i) {
        for (std::size_t j = 0; j < a.adapters[i].a.numel(); ++j)
            worst = std::max(worst,
                             std::abs(a.adapters[i].a.data()[j] - b.adapters[i].a.data()[j]));
        for (std::size_t j = 0; j < a.adapters[i].b.numel(); ++j)
            worst = std::max(worst,
                             std::abs(a.adapters[i].b.data()[j] - b.adapters[i].b.data()[j]));
    }
    return worst;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    TrainConfig bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.weight_decay = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.lr = 2.0;
    bad.weight_decay = 0.5;  // lr * wd == 1: the decay step would zero weights
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("first optimizer step follows the bias-corrected closed form") {
    Tensor w = Tensor::from_data({2}, {1.0, -2.0});
    w.grad()[0] = 3.0;
    w.grad()[1] = -0.5;
    std::vector<TrainableParam> params{{w, false, "w"}};
    OptimizerState state = OptimizerState::init(params);

    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;

    // replicate the published update for step 1 on zero moments
    double expected[2];
    const double g[2] = {3.0, -0.5};
    const double w0[2] = {1.0, -2.0};
    for (int j = 0; j < 2; ++j) {
        double m = (1.0 - cfg.beta1) * g[j];
        double v = (1.0 - cfg.beta2) * g[j] * g[j];
        double mhat = m / (1.0 - cfg.beta1);
        double vhat = v / (1.0 - cfg.beta2);
        expected[j] = w0[j] - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps));
    }
    adam_step_hybrid(params, state, cfg);
    CHECK(w.data()[0] == doctest::Approx(expected[0]).epsilon(1e-14));
    CHECK(w.data()[1] == doctest::Approx(expected[1]).epsilon(1e-14));
    CHECK(state.step_count == 1);

    // step 1 with eps ~ 0 reduces to a signed lr-sized step
    CHECK(std::abs((w0[0] - w.data()[0]) - cfg.lr) < 1e-8);
}

TEST_CASE("zero-gradient steps decay flagged weights by exactly (1 - lr*wd)") {
    Tensor b = Tensor::from_data({2, 2}, {0.4, -1.2, 2.5, 0.7});
    Tensor a = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
    b.grad();  // allocate zeroed gradient buffers
    a.grad();
    std::vector<TrainableParam> params{{a, false, "a"}, {b, true, "b"}};
    OptimizerState state = OptimizerState::init(params);

    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;

    const double norm0 = fro_norm(b);
    const int k = 7;
    for (int i = 0; i < k; ++i) adam_step_hybrid(params, state, cfg);

    const double shrink = std::pow(1.0 - cfg.lr * cfg.weight_decay, k);
    CHECK(fro_norm(b) == doctest::Approx(norm0 * shrink).epsilon(1e-12));
    // the undecayed tensor is untouched, bit for bit
    CHECK(a.data()[0] == 1.0);
    CHECK(a.data()[3] == 4.0);
}

TEST_CASE("the published decay sign grows weights instead") {
    Tensor b = Tensor::from_data({1, 2}, {1.0, -1.0});
    b.grad();
    std::vector<TrainableParam> params{{b, true, "b"}};
    OptimizerState state = OptimizerState::init(params);

    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    cfg.paper_sign = true;

    const double norm0 = fro_norm(b);
    adam_step_hybrid(params, state, cfg);
    CHECK(fro_norm(b) == doctest::Approx(norm0 * (1.0 + cfg.lr * cfg.weight_decay)).epsilon(1e-12));
}

TEST_CASE("warmup memorizes a tiny dataset and leaves the base frozen") {
    const ModelSnapshot& base = pretrained_micro_base();
    const std::uint64_t base_hash = base.base->content_hash();
    std::vector<Example> data = memorizable_set();

    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.weight_decay = 0.0;
    cfg.epochs = 300;
    cfg.batch_size = 2;
    cfg.adapter_dropout = false;
    cfg.seed = 9;

    TrainResult fit = warmup(base, 6, data, cfg);
    REQUIRE(fit.report.epoch_mean_loss.size() == 300);
    CHECK(fit.report.epoch_mean_loss.front() > fit.report.epoch_mean_loss.back());
    CHECK(fit.report.epoch_mean_loss.back() < 0.05);
    CHECK(accuracy_exact_match(fit.snapshot, data) == 1.0);
    CHECK(fit.snapshot.snapshot_id == 1);

    // the backbone never moves; only adapters carry the fit
    CHECK(fit.snapshot.base->content_hash() == base_hash);
    CHECK(fit.snapshot.base.get() == base.base.get());
    double bmax = 0.0;
    for (const auto& ad : fit.snapshot.adapters)
        for (std::size_t i = 0; i < ad.b.numel(); ++i)
            bmax = std::max(bmax, std::abs(ad.b.data()[i]));
    CHECK(bmax > 0.0);
}

TEST_CASE("training is bitwise deterministic in config and seed") {
    ModelConfig mcfg = testutil::micro_config();
    ModelSnapshot start = with_fresh_adapters(make_base_snapshot(mcfg, 11), 12);
    std::vector<Example> data = memorizable_set();

    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 2;
    cfg.seed = 77;

    TrainResult one = train(start, data, cfg);
    TrainResult two = train(start, data, cfg);
    CHECK(one.report.epoch_mean_loss == two.report.epoch_mean_loss);
    CHECK(adapter_delta(one.snapshot, two.snapshot) == 0.0);

    cfg.seed = 78;  // different shuffle and dropout masks
    TrainResult three = train(start, data, cfg);
    CHECK(adapter_delta(one.snapshot, three.snapshot) > 0.0);

    // the input snapshot is left untouched by training
    for (const auto& ad : start.adapters)
        for (std::size_t i = 0; i < ad.b.numel(); ++i) CHECK(ad.b.data()[i] == 0.0);
    CHECK(start.snapshot_id == 0);
}

TEST_CASE("continual training starts from the incoming adapters") {
    const ModelSnapshot& base = pretrained_micro_base();
    std::vector<Example> data = memorizable_set();

    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.weight_decay = 0.0;
    cfg.epochs = 30;
    cfg.batch_size = 2;
    cfg.adapter_dropout = false;
    cfg.seed = 3;

    TrainResult first = warmup(base, 4, data, cfg);
    TrainResult second = train(first.snapshot, data, cfg);
    CHECK(second.snapshot.snapshot_id == 2);
    // continuing from a partial fit keeps improving on the same data
    CHECK(second.report.epoch_mean_loss.back() < first.report.epoch_mean_loss.back());
}

TEST_CASE("an empty or fully overlong set performs no optimizer steps") {
    ModelConfig mcfg = testutil::micro_config();
    ModelSnapshot start = with_fresh_adapters(make_base_snapshot(mcfg, 31), 32);

    TrainConfig cfg;
    cfg.epochs = 4;

    TrainResult none = train(start, {}, cfg);
    CHECK(none.report.epoch_mean_loss.empty());
    CHECK(none.report.optimizer_steps == 0);
    CHECK(none.report.skipped_overlength == 0);
    CHECK(adapter_delta(none.snapshot, start) == 0.0);

    // prompt(10) + answer cue + gold(2) + stop - 1 = 13 rows > max_seq_len 12
    std::vector<Example> overlong{toy(9, {3, 4, 5, 6, 3, 4, 5, 6, 3, 4}, {5, 6})};
    TrainResult skipped = train(start, overlong, cfg);
    CHECK(skipped.report.skipped_overlength == 1);
    CHECK(skipped.report.optimizer_steps == 0);
    CHECK(adapter_delta(skipped.snapshot, start) == 0.0);
}

TEST_CASE("overlong examples are skipped while the rest still trains") {
    ModelConfig mcfg = testutil::micro_config();
    ModelSnapshot start = with_fresh_adapters(make_base_snapshot(mcfg, 41), 42);
    std::vector<Example> data = memorizable_set();
    data.push_back(toy(9, {3, 4, 5, 6, 3, 4, 5, 6, 3, 4}, {5, 6}));

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;

    TrainResult fit = train(start, data, cfg);
    CHECK(fit.report.skipped_overlength == 1);
    // 4 usable examples, batches of 2, 3 epochs
    CHECK(fit.report.optimizer_steps == 2 * 3);
    CHECK(adapter_delta(fit.snapshot, start) > 0.0);
}

TEST_CASE("warmup and train reject the wrong starting snapshot") {
    ModelConfig mcfg = testutil::micro_config();
    ModelSnapshot base = make_base_snapshot(mcfg, 51);
    std::vector<Example> data = memorizable_set();
    TrainConfig cfg;
    cfg.epochs = 1;

    CHECK_THROWS_AS(train(base, data, cfg), std::invalid_argument);  // no adapters

    ModelSnapshot adapted = with_fresh_adapters(base, 52);
    CHECK_THROWS_AS(warmup(adapted, 53, data, cfg), std::invalid_argument);

    ModelSnapshot stale = base;
    stale.snapshot_id = 2;
    CHECK_THROWS_AS(warmup(stale, 54, data, cfg), std::invalid_argument);
}

TEST_CASE("pretraining fits the backbone itself and returns a bare base") {
    ModelConfig mcfg = testutil::micro_config();
    std::vector<Example> data = memorizable_set();

    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    cfg.epochs = 60;
    cfg.batch_size = 2;
    cfg.seed = 61;

    TrainResult pre = pretrain_base(mcfg, 62, data, cfg);
    CHECK(pre.snapshot.snapshot_id == 0);
    CHECK(pre.snapshot.adapters.empty());
    REQUIRE(pre.report.epoch_mean_loss.size() == 60);
    CHECK(pre.report.epoch_mean_loss.back() < pre.report.epoch_mean_loss.front());

    // weights moved away from the raw initialization and grads are released
    ModelSnapshot raw = make_base_snapshot(mcfg, 62);
    CHECK(pre.snapshot.base->content_hash() != raw.base->content_hash());
    pre.snapshot.base->for_each_tensor([](const std::string&, const Tensor& t) {
        CHECK(!t.requires_grad());
    });
}

TEST_CASE("gradient clipping caps the size of the first update") {
    ModelConfig mcfg = testutil::micro_config();
    ModelSnapshot start = with_fresh_adapters(make_base_snapshot(mcfg, 71), 72);
    std::vector<Example> one{toy(1, {3, 4}, {5})};

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 1;
    cfg.adapter_dropout = false;

    TrainConfig clipped = cfg;
    clipped.grad_clip = 1e-12;  // scales the batch gradient to almost nothing

    TrainResult free_fit = train(start, one, cfg);
    TrainResult clip_fit = train(start, one, clipped);
    CHECK(adapter_delta(free_fit.snapshot, start) > 0.0);
    CHECK(adapter_delta(clip_fit.snapshot, start) > 0.0);
    CHECK(adapter_delta(clip_fit.snapshot, start) < adapter_delta(free_fit.snapshot, start));
}
