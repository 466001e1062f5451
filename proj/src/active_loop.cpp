#include "loralab/active_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include "loralab/format.hpp"
#include "loralab/parallel.hpp"
#include "loralab/rng.hpp"

namespace fs = std::filesystem;

namespace loralab {

namespace {

// seed stream tags: warm-up draw, random-round draw, MC pass streams
constexpr std::uint64_t kWarmupSalt = 0x77A3;
constexpr std::uint64_t kRandomRoundSalt = 0x5E1;
constexpr std::uint64_t kMcSalt = 0x5C0;

}  // namespace

Pool::Pool(const std::vector<Example>& examples) : examples_(examples) {
    if (examples_.empty()) throw std::invalid_argument("pool: no examples");
    std::sort(examples_.begin(), examples_.end(),
              [](const Example& a, const Example& b) { return a.id < b.id; });
    unlabeled_.reserve(examples_.size());
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        if (i > 0 && examples_[i].id == examples_[i - 1].id) {
            throw std::invalid_argument("pool: duplicate example id " +
                                        std::to_string(examples_[i].id));
        }
        unlabeled_.push_back(examples_[i].id);
    }
}

const Example& Pool::example(int64_t id) const {
    auto it = std::lower_bound(examples_.begin(), examples_.end(), id,
                               [](const Example& e, int64_t v) { return e.id < v; });
    if (it == examples_.end() || it->id != id) {
        throw std::invalid_argument("pool: unknown example id " + std::to_string(id));
    }
    return *it;
}

std::vector<Example> Pool::labeled_examples() const {
    std::vector<Example> out;
    out.reserve(labeled_.size());
    for (int64_t id : labeled_) out.push_back(example(id));
    return out;
}

void Pool::mark_labeled(const std::vector<int64_t>& ids) {
    for (int64_t id : ids) {
        auto it = std::lower_bound(unlabeled_.begin(), unlabeled_.end(), id);
        if (it == unlabeled_.end() || *it != id) {
            throw std::invalid_argument("pool: id " + std::to_string(id) + " is not unlabeled");
        }
        unlabeled_.erase(it);
        labeled_.insert(std::lower_bound(labeled_.begin(), labeled_.end(), id), id);
    }
}

const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::random_pick: return "random";
        case StrategyKind::max_entropy: return "me";
        case StrategyKind::pred_entropy: return "pe";
        case StrategyKind::max_entropy_dynamic: return "me_dyn";
        case StrategyKind::pred_entropy_dynamic: return "pe_dyn";
    }
    throw std::logic_error("unknown strategy kind");
}

StrategyKind strategy_from_name(const std::string& name) {
    if (name == "random") return StrategyKind::random_pick;
    if (name == "me") return StrategyKind::max_entropy;
    if (name == "pe") return StrategyKind::pred_entropy;
    if (name == "me_dyn") return StrategyKind::max_entropy_dynamic;
    if (name == "pe_dyn") return StrategyKind::pred_entropy_dynamic;
    throw std::invalid_argument("unknown strategy '" + name + "'");
}

ScoreKind Strategy::score_kind() const {
    switch (kind) {
        case StrategyKind::max_entropy:
        case StrategyKind::max_entropy_dynamic: return ScoreKind::max_entropy;
        case StrategyKind::pred_entropy:
        case StrategyKind::pred_entropy_dynamic: return ScoreKind::pred_entropy;
        case StrategyKind::random_pick: break;
    }
    throw std::logic_error("random strategy has no score kind");
}

int ALRunConfig::rounds() const { return (budget - warmup_size) / query_size; }

void ALRunConfig::validate(int pool_size) const {
    if (warmup_size < 1) throw std::invalid_argument("warmup_size must be >= 1");
    if (query_size < 1) throw std::invalid_argument("query_size must be >= 1");
    if (budget < warmup_size) throw std::invalid_argument("budget must cover the warm-up");
    if ((budget - warmup_size) % query_size != 0) {
        throw std::invalid_argument("budget - warmup_size must be a multiple of query_size");
    }
    if (budget > pool_size) throw std::invalid_argument("budget exceeds the pool size");
    if (mc_passes < 1) throw std::invalid_argument("mc_passes must be >= 1");
    decode.validate();
    train.validate();
}

std::vector<int64_t> query_selection(const std::vector<UncertaintyRecord>& scored,
                                     const std::vector<int64_t>& unlabeled, int m) {
    if (m < 1) throw std::invalid_argument("query_selection: m must be >= 1");
    if (scored.size() != unlabeled.size()) {
        throw std::invalid_argument("query_selection: scores do not cover the unlabeled set");
    }
    std::vector<int64_t> scored_ids;
    scored_ids.reserve(scored.size());
    for (const auto& r : scored) scored_ids.push_back(r.id);
    std::sort(scored_ids.begin(), scored_ids.end());
    if (!std::equal(scored_ids.begin(), scored_ids.end(), unlabeled.begin(), unlabeled.end())) {
        throw std::invalid_argument("query_selection: scores do not cover the unlabeled set");
    }
    std::vector<const UncertaintyRecord*> order;
    order.reserve(scored.size());
    for (const auto& r : scored) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->id < b->id;
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(m), order.size());
    std::vector<int64_t> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(order[i]->id);
    return out;
}

namespace {

double final_loss(const TrainReport& r) {
    return r.epoch_mean_loss.empty() ? 0.0 : r.epoch_mean_loss.back();
}

std::string join_ids(const std::vector<int64_t>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out += ';';
        out += std::to_string(ids[i]);
    }
    return out;
}

// The annotation step of the loop. Synthetic examples already carry gold, so
// "labeling" re-derives each answer from the prompt and cross-checks it.
void oracle_check(const Pool& pool, const std::vector<int64_t>& ids) {
    for (int64_t id : ids) {
        const Example& ex = pool.example(id);
        if (closed_form_answer(ex.family, ex.prompt) != ex.gold) {
            throw std::runtime_error("oracle mismatch for example " + std::to_string(id));
        }
    }
}

class PhaseLog {
public:
    explicit PhaseLog(const std::string& path) {
        if (!path.empty()) {
            out_.open(path);
            if (!out_) throw std::runtime_error("cannot write " + path);
        }
    }
    template <typename Fn>
    auto timed(const std::string& phase, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            log(phase, t0);
        } else {
            auto r = fn();
            log(phase, t0);
            return r;
        }
    }

private:
    void log(const std::string& phase, std::chrono::steady_clock::time_point t0) {
        if (!out_.is_open()) return;
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", secs);
        out_ << phase << " " << buf << "s\n";
        out_.flush();
    }
    std::ofstream out_;
};

void write_config_echo(const std::string& path, const Strategy& strategy, const ALSeeds& seeds,
                       const ALRunConfig& cfg, const LambdaSchedule& sched, int rounds,
                       const ModelConfig& mc) {
    nlohmann::ordered_json j;
    j["strategy"] = strategy_name(strategy.kind);
    j["seeds"] = {{"model", seeds.model}, {"train", seeds.train}, {"select", seeds.select}};
    j["warmup_size"] = cfg.warmup_size;
    j["query_size"] = cfg.query_size;
    j["budget"] = cfg.budget;
    j["rounds"] = rounds;
    j["mc_passes"] = cfg.mc_passes;
    j["eval_every_round"] = cfg.eval_every_round;
    j["schedule"] = {{"kind", schedule_kind_name(sched.kind)},
                     {"floor", sched.floor},
                     {"horizon", sched.horizon},
                     {"rate", sched.rate}};
    j["decode"] = {{"max_new_tokens", cfg.decode.max_new_tokens}};
    j["train"] = {{"lr", cfg.train.lr},
                  {"weight_decay", cfg.train.weight_decay},
                  {"paper_sign", cfg.train.paper_sign},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"eps", cfg.train.eps},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"grad_clip", cfg.train.grad_clip},
                  {"adapter_dropout", cfg.train.adapter_dropout}};
    j["model"] = {{"vocab_size", mc.vocab_size},     {"d_model", mc.d_model},
                  {"n_layers", mc.n_layers},         {"n_heads", mc.n_heads},
                  {"d_ff", mc.d_ff},                 {"max_seq_len", mc.max_seq_len},
                  {"lora_rank", mc.lora_rank},       {"lora_alpha", mc.lora_alpha},
                  {"lora_dropout", mc.lora_dropout}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

[[noreturn]] void rethrow_with_round(int t) {
    const std::string tag = "round " + std::to_string(t) + ": ";
    try {
        throw;
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(tag + e.what());
    } catch (const std::logic_error& e) {
        throw std::logic_error(tag + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(tag + e.what());
    }
}

}  // namespace

ALRunResult run_active_loop(const std::vector<Example>& pool_examples,
                            const std::vector<Example>& test_examples,
                            const ModelSnapshot& base, const Strategy& strategy,
                            const ALSeeds& seeds, const ALRunConfig& cfg,
                            const std::string& out_dir, const std::string& base_scores_cache) {
    cfg.validate(static_cast<int>(pool_examples.size()));
    base.validate();
    if (base.snapshot_id != 0 || !base.adapters.empty()) {
        throw std::invalid_argument("run_active_loop: expected the pristine base snapshot");
    }
    if (test_examples.empty()) {
        throw std::invalid_argument("run_active_loop: empty test set");
    }
    if (strategy.is_dynamic() && base.config.lora_dropout <= 0.0) {
        throw std::invalid_argument("dynamic strategies need lora_dropout > 0 for MC passes");
    }
    const int n_rounds = cfg.rounds();
    LambdaSchedule sched = cfg.schedule;
    if (sched.kind == ScheduleKind::linear && sched.horizon <= 0) {
        sched.horizon = std::max(1, n_rounds);
    }
    if (strategy.is_dynamic()) sched.validate();

    const bool emit = !out_dir.empty();
    if (emit) {
        fs::create_directories(out_dir);
        if (!strategy.is_random() && n_rounds > 0) {
            fs::create_directories(fs::path(out_dir) / "uncertainty");
        }
        if (cfg.save_snapshots) fs::create_directories(fs::path(out_dir) / "snapshots");
    }
    PhaseLog phase(emit ? (fs::path(out_dir) / "timing.log").string() : "");

    Pool pool(pool_examples);
    ALRunResult result;
    std::vector<std::tuple<int, int, double>> train_rows;  // (round, epoch) -> loss

    // warm-up: random draw, oracle labels, fresh adapters, first fit
    std::vector<int64_t> warm_ids = pool.unlabeled();
    Rng warm_rng(derive_seed(seeds.select, kWarmupSalt));
    warm_rng.shuffle(warm_ids);
    warm_ids.resize(static_cast<std::size_t>(cfg.warmup_size));
    oracle_check(pool, warm_ids);
    pool.mark_labeled(warm_ids);

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seeds.train, 0);
    TrainResult fit = phase.timed("warmup_train", [&] {
        return warmup(base, seeds.model, pool.labeled_examples(), tc);
    });
    ModelSnapshot snap = std::move(fit.snapshot);
    double acc = phase.timed("warmup_eval", [&] {
        return accuracy_exact_match(snap, test_examples);
    });
    result.curve.push_back({cfg.warmup_size, acc});
    result.rounds.push_back({-1, 0.0, static_cast<int>(pool_examples.size()), warm_ids,
                             final_loss(fit.report), acc, cfg.warmup_size, ""});
    for (std::size_t e = 0; e < fit.report.epoch_mean_loss.size(); ++e) {
        train_rows.emplace_back(-1, static_cast<int>(e), fit.report.epoch_mean_loss[e]);
    }
    if (emit && cfg.save_snapshots) {
        save_snapshot((fs::path(out_dir) / "snapshots" / "warmup.bin").string(), snap);
    }

    std::map<int64_t, double> base_scores;
    if (strategy.is_dynamic() && n_rounds > 0) {
        if (!base_scores_cache.empty() && fs::exists(base_scores_cache)) {
            base_scores = read_score_map(base_scores_cache);
        } else {
            base_scores = phase.timed("base_scores", [&] {
                return precompute_base_scores(base, pool_examples, cfg.decode,
                                              strategy.score_kind());
            });
            if (!base_scores_cache.empty()) write_score_map(base_scores_cache, base_scores);
        }
        for (const auto& ex : pool_examples) {
            if (base_scores.find(ex.id) == base_scores.end()) {
                throw std::runtime_error("base score cache is missing id " +
                                         std::to_string(ex.id));
            }
        }
        if (emit) write_score_map((fs::path(out_dir) / "base_scores.csv").string(), base_scores);
    }

    for (int t = 0; t < n_rounds; ++t) {
        try {
            const std::vector<int64_t> unl = pool.unlabeled();
            std::vector<int64_t> selected;
            std::string scores_csv;
            double lam = 0.0;
            if (strategy.is_random()) {
                std::vector<int64_t> ids = unl;
                Rng rr(derive_seed(seeds.select, kRandomRoundSalt, static_cast<std::uint64_t>(t)));
                rr.shuffle(ids);
                ids.resize(std::min<std::size_t>(ids.size(),
                                                 static_cast<std::size_t>(cfg.query_size)));
                selected = ids;
            } else {
                const ScoreKind kind = strategy.score_kind();
                if (strategy.is_dynamic()) lam = lambda_value(sched, t);
                std::vector<UncertaintyRecord> scored(unl.size());
                phase.timed("round_" + std::to_string(t) + "_score", [&] {
                    parallel_for(static_cast<int>(unl.size()), worker_count_from_env(), [&](int i) {
                        const Example& ex = pool.example(unl[static_cast<std::size_t>(i)]);
                        UncertaintyRecord r;
                        r.id = ex.id;
                        if (strategy.is_dynamic()) {
                            r.lambda = lam;
                            r.score_base = base_scores.at(ex.id);
                            r.score_fine = mc_score(
                                snap, ex, cfg.decode, kind, cfg.mc_passes,
                                derive_seed(seeds.select, kMcSalt, static_cast<std::uint64_t>(t),
                                            static_cast<std::uint64_t>(ex.id)));
                            r.score = mix_scores(r.score_base, r.score_fine, lam);
                        } else {
                            const double s = score_example(snap, ex, cfg.decode, kind);
                            r.score_fine = s;
                            r.score = s;
                        }
                        scored[static_cast<std::size_t>(i)] = r;
                    });
                });
                if (emit) {
                    scores_csv = "uncertainty/round_" + std::to_string(t) + ".csv";
                    write_uncertainty_csv((fs::path(out_dir) / scores_csv).string(), scored);
                }
                selected = query_selection(scored, unl, cfg.query_size);
            }
            oracle_check(pool, selected);
            pool.mark_labeled(selected);

            tc.seed = derive_seed(seeds.train, static_cast<std::uint64_t>(t) + 1);
            TrainResult tr = phase.timed("round_" + std::to_string(t) + "_train", [&] {
                return train(snap, pool.labeled_examples(), tc);
            });
            snap = std::move(tr.snapshot);
            const bool eval_now = cfg.eval_every_round || t == n_rounds - 1;
            acc = std::numeric_limits<double>::quiet_NaN();
            if (eval_now) {
                acc = phase.timed("round_" + std::to_string(t) + "_eval", [&] {
                    return accuracy_exact_match(snap, test_examples);
                });
            }
            const int labeled_after = static_cast<int>(pool.labeled().size());
            if (eval_now) result.curve.push_back({labeled_after, acc});
            result.rounds.push_back({t, lam, static_cast<int>(unl.size()), selected,
                                     final_loss(tr.report), acc, labeled_after, scores_csv});
            for (std::size_t e = 0; e < tr.report.epoch_mean_loss.size(); ++e) {
                train_rows.emplace_back(t, static_cast<int>(e), tr.report.epoch_mean_loss[e]);
            }
            if (emit && cfg.save_snapshots) {
                save_snapshot(
                    (fs::path(out_dir) / "snapshots" / ("round_" + std::to_string(t) + ".bin"))
                        .string(),
                    snap);
            }
        } catch (...) {
            rethrow_with_round(t);
        }
    }

    result.auc = result.curve.size() >= 2 ? auc_normalized(result.curve)
                                          : std::numeric_limits<double>::quiet_NaN();
    result.final_snapshot = std::move(snap);

    if (emit) {
        write_config_echo((fs::path(out_dir) / "config.json").string(), strategy, seeds, cfg,
                          sched, n_rounds, base.config);
        write_curve_csv((fs::path(out_dir) / "curve.csv").string(), result.curve);
        {
            std::ofstream out((fs::path(out_dir) / "rounds.csv").string());
            if (!out) throw std::runtime_error("cannot write rounds.csv");
            out << "round,lambda,unlabeled_before,selected,train_loss,accuracy,labeled_after,"
                   "scores_csv\n";
            for (const auto& r : result.rounds) {
                out << r.round << "," << g17(r.lambda) << "," << r.unlabeled_before << ","
                    << join_ids(r.selected) << "," << g17(r.train_loss) << "," << g17(r.accuracy)
                    << "," << r.labeled_after << "," << r.scores_csv << "\n";
            }
        }
        {
            std::ofstream out((fs::path(out_dir) / "train_log.csv").string());
            if (!out) throw std::runtime_error("cannot write train_log.csv");
            out << "round,epoch,loss\n";
            for (const auto& [round, epoch, loss] : train_rows) {
                out << round << "," << epoch << "," << g17(loss) << "\n";
            }
        }
    }
    return result;
}

}  // namespace loralab
