#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "loralab/active_loop.hpp"
#include "loralab/rng.hpp"

using namespace loralab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("loralab_loop_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelConfig loop_config() {
    ModelConfig cfg;
    cfg.vocab_size = symbol_vocab_size();
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

// 32 six-bit parity questions: 24 pool + 8 held-out test
TaskSpec parity_spec() {
    TaskSpec spec;
    spec.family = TaskFamily::binary_parity;
    spec.count = 32;
    spec.seed = 71;
    spec.parity_bits = 6;
    spec.parity_max_ones = 6;
    return spec;
}

std::vector<Example> pool_examples() {
    auto all = generate_examples(parity_spec());
    return {all.begin(), all.begin() + 24};
}

std::vector<Example> test_examples() {
    auto all = generate_examples(parity_spec());
    return {all.begin() + 24, all.end()};
}

const ModelSnapshot& shared_base() {
    static const ModelSnapshot base = make_base_snapshot(loop_config(), 11);
    return base;
}

// warm-up 4, two query rounds of 4, two short epochs per fit
ALRunConfig small_cfg() {
    ALRunConfig cfg;
    cfg.warmup_size = 4;
    cfg.query_size = 4;
    cfg.budget = 12;
    cfg.train.lr = 0.01;
    cfg.train.weight_decay = 0.01;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg.train.adapter_dropout = false;
    cfg.decode.max_new_tokens = 4;
    cfg.mc_passes = 2;
    return cfg;
}

ALSeeds seeds_abc() { return {101, 202, 303}; }

UncertaintyRecord rec(int64_t id, double score) {
    UncertaintyRecord r;
    r.id = id;
    r.score_fine = score;
    r.score = score;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("pool keeps ids sorted and partitions on labeling") {
    auto data = pool_examples();
    std::reverse(data.begin(), data.end());  // construction order must not matter
    Pool pool(data);

    REQUIRE(pool.unlabeled().size() == 24);
    CHECK(std::is_sorted(pool.unlabeled().begin(), pool.unlabeled().end()));
    CHECK(pool.labeled().empty());

    const int64_t some_id = pool.unlabeled()[5];
    CHECK(pool.example(some_id).id == some_id);

    pool.mark_labeled({pool.unlabeled()[3], pool.unlabeled()[0]});
    CHECK(pool.labeled().size() == 2);
    CHECK(pool.unlabeled().size() == 22);
    CHECK(std::is_sorted(pool.labeled().begin(), pool.labeled().end()));
    CHECK(std::is_sorted(pool.unlabeled().begin(), pool.unlabeled().end()));

    auto labeled = pool.labeled_examples();
    REQUIRE(labeled.size() == 2);
    CHECK(labeled[0].id == pool.labeled()[0]);
    CHECK(labeled[1].id == pool.labeled()[1]);

    // the two sets always partition the original ids
    std::set<int64_t> seen(pool.labeled().begin(), pool.labeled().end());
    seen.insert(pool.unlabeled().begin(), pool.unlabeled().end());
    CHECK(seen.size() == 24);
}

TEST_CASE("pool rejects empty input, duplicates, unknown ids and double labeling") {
    CHECK_THROWS_AS(Pool{std::vector<Example>{}}, std::invalid_argument);

    auto dup = pool_examples();
    dup.push_back(dup.front());
    CHECK_THROWS_AS(Pool{dup}, std::invalid_argument);

    Pool pool(pool_examples());
    CHECK_THROWS_AS((void)pool.example(-7), std::invalid_argument);
    CHECK_THROWS_AS(pool.mark_labeled({-7}), std::invalid_argument);

    const int64_t id = pool.unlabeled().front();
    pool.mark_labeled({id});
    CHECK_THROWS_AS(pool.mark_labeled({id}), std::invalid_argument);
}

TEST_CASE("strategy names round trip and classify") {
    const StrategyKind kinds[] = {StrategyKind::random_pick, StrategyKind::max_entropy,
                                  StrategyKind::pred_entropy, StrategyKind::max_entropy_dynamic,
                                  StrategyKind::pred_entropy_dynamic};
    for (StrategyKind k : kinds) {
        CHECK(strategy_from_name(strategy_name(k)) == k);
    }
    CHECK(std::string(strategy_name(StrategyKind::max_entropy_dynamic)) == "me_dyn");
    CHECK_THROWS_AS(strategy_from_name("entropy"), std::invalid_argument);

    CHECK(Strategy{StrategyKind::random_pick}.is_random());
    CHECK_FALSE(Strategy{StrategyKind::max_entropy}.is_random());
    CHECK_FALSE(Strategy{StrategyKind::max_entropy}.is_dynamic());
    CHECK(Strategy{StrategyKind::max_entropy_dynamic}.is_dynamic());
    CHECK(Strategy{StrategyKind::pred_entropy_dynamic}.is_dynamic());

    CHECK(Strategy{StrategyKind::max_entropy}.score_kind() == ScoreKind::max_entropy);
    CHECK(Strategy{StrategyKind::max_entropy_dynamic}.score_kind() == ScoreKind::max_entropy);
    CHECK(Strategy{StrategyKind::pred_entropy}.score_kind() == ScoreKind::pred_entropy);
    CHECK(Strategy{StrategyKind::pred_entropy_dynamic}.score_kind() == ScoreKind::pred_entropy);
    CHECK_THROWS_AS(Strategy{StrategyKind::random_pick}.score_kind(), std::logic_error);
}

TEST_CASE("run config round arithmetic and validation") {
    ALRunConfig cfg;  // 50 + 9 * 50
    CHECK(cfg.rounds() == 9);
    cfg.validate(2000);

    ALRunConfig small = small_cfg();
    CHECK(small.rounds() == 2);
    small.validate(24);

    small.budget = small.warmup_size;  // a pure warm-up run is legal
    CHECK(small.rounds() == 0);
    small.validate(24);

    auto reject = [](auto&& mutate) {
        ALRunConfig c = small_cfg();
        mutate(c);
        CHECK_THROWS_AS(c.validate(24), std::invalid_argument);
    };
    reject([](ALRunConfig& c) { c.warmup_size = 0; });
    reject([](ALRunConfig& c) { c.query_size = 0; });
    reject([](ALRunConfig& c) { c.budget = 3; });           // below the warm-up
    reject([](ALRunConfig& c) { c.budget = 14; });          // not a whole round
    reject([](ALRunConfig& c) { c.budget = 28; });          // exceeds the pool
    reject([](ALRunConfig& c) { c.mc_passes = 0; });
    reject([](ALRunConfig& c) { c.decode.max_new_tokens = 0; });
    reject([](ALRunConfig& c) { c.train.lr = 0.0; });
}

TEST_CASE("query selection takes the top scores with deterministic ties") {
    const std::vector<int64_t> unl{1, 2, 3, 4, 5};
    const std::vector<UncertaintyRecord> scored{rec(4, 0.1), rec(2, 0.9), rec(1, 0.5),
                                                rec(5, 0.9), rec(3, 0.2)};

    // descending score; the 0.9 tie resolves toward id 2
    CHECK(query_selection(scored, unl, 3) == std::vector<int64_t>{2, 5, 1});
    CHECK(query_selection(scored, unl, 1) == std::vector<int64_t>{2});

    // asking for more than remains returns everything, still ordered
    CHECK(query_selection(scored, unl, 9) == std::vector<int64_t>{2, 5, 1, 3, 4});

    // an all-tied batch degenerates to ascending ids
    std::vector<UncertaintyRecord> flat;
    for (int64_t id : unl) flat.push_back(rec(id, 7.0));
    CHECK(query_selection(flat, unl, 3) == std::vector<int64_t>{1, 2, 3});
}

TEST_CASE("query selection rejects bad m and coverage mismatches") {
    const std::vector<int64_t> unl{1, 2, 3};
    const std::vector<UncertaintyRecord> scored{rec(1, 0.1), rec(2, 0.2), rec(3, 0.3)};

    CHECK_THROWS_AS(query_selection(scored, unl, 0), std::invalid_argument);

    std::vector<UncertaintyRecord> missing{rec(1, 0.1), rec(2, 0.2)};
    CHECK_THROWS_AS(query_selection(missing, unl, 1), std::invalid_argument);

    std::vector<UncertaintyRecord> foreign{rec(1, 0.1), rec(2, 0.2), rec(9, 0.3)};
    CHECK_THROWS_AS(query_selection(foreign, unl, 1), std::invalid_argument);

    std::vector<UncertaintyRecord> doubled{rec(1, 0.1), rec(2, 0.2), rec(2, 0.3)};
    CHECK_THROWS_AS(query_selection(doubled, unl, 1), std::invalid_argument);
}

TEST_CASE("max-entropy loop: curve, logs and snapshot bookkeeping") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();

    ALRunResult r = run_active_loop(pool, test, shared_base(),
                                    Strategy{StrategyKind::max_entropy}, seeds_abc(), cfg, "");

    // one curve point per evaluation: warm-up plus each of the two rounds
    REQUIRE(r.curve.size() == 3);
    CHECK(r.curve[0].labeled == 4);
    CHECK(r.curve[1].labeled == 8);
    CHECK(r.curve[2].labeled == 12);
    for (const auto& p : r.curve) {
        CHECK(p.accuracy >= 0.0);
        CHECK(p.accuracy <= 1.0);
    }
    CHECK(std::isfinite(r.auc));
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);

    REQUIRE(r.rounds.size() == 3);
    CHECK(r.rounds[0].round == -1);
    CHECK(r.rounds[1].round == 0);
    CHECK(r.rounds[2].round == 1);
    CHECK(r.rounds[0].unlabeled_before == 24);
    CHECK(r.rounds[1].unlabeled_before == 20);
    CHECK(r.rounds[2].unlabeled_before == 16);

    std::set<int64_t> taken;
    for (const auto& log : r.rounds) {
        CHECK(log.lambda == 0.0);  // never mixes
        CHECK(log.selected.size() == 4);
        CHECK(log.train_loss > 0.0);
        CHECK(log.accuracy == r.curve[&log - r.rounds.data()].accuracy);
        CHECK(log.scores_csv.empty());  // no output directory, nothing written
        taken.insert(log.selected.begin(), log.selected.end());
    }
    CHECK(taken.size() == 12);  // every selection is disjoint
    CHECK(r.rounds[2].labeled_after == 12);

    // warm-up fit is snapshot 1, each round adds one more
    CHECK(r.final_snapshot.snapshot_id == 3);
    CHECK_FALSE(r.final_snapshot.adapters.empty());
    r.final_snapshot.validate();

    // bitwise repeatability, and the selection seed actually steers the draw
    ALRunResult again = run_active_loop(pool, test, shared_base(),
                                        Strategy{StrategyKind::max_entropy}, seeds_abc(), cfg, "");
    REQUIRE(again.curve.size() == r.curve.size());
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
        CHECK(again.curve[i].accuracy == r.curve[i].accuracy);
    }
    CHECK(again.auc == r.auc);
    for (std::size_t i = 0; i < r.rounds.size(); ++i) {
        CHECK(again.rounds[i].selected == r.rounds[i].selected);
    }

    ALSeeds other = seeds_abc();
    other.select = 999;
    ALRunResult moved = run_active_loop(pool, test, shared_base(),
                                        Strategy{StrategyKind::max_entropy}, other, cfg, "");
    CHECK(moved.rounds[0].selected != r.rounds[0].selected);
}

TEST_CASE("round scores reproduce the public scoring path") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();
    const ALSeeds seeds = seeds_abc();
    TempDir tmp;

    ALRunResult r =
        run_active_loop(pool, test, shared_base(), Strategy{StrategyKind::pred_entropy}, seeds,
                        cfg, (tmp.path / "pe").string());

    // replay the warm-up fit through the public trainer: same labeled set
    // (ascending ids), same derived seed
    std::vector<int64_t> warm_ids = r.rounds[0].selected;
    std::sort(warm_ids.begin(), warm_ids.end());
    std::vector<Example> labeled;
    for (const auto& ex : pool) {
        if (std::find(warm_ids.begin(), warm_ids.end(), ex.id) != warm_ids.end()) {
            labeled.push_back(ex);
        }
    }
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seeds.train, 0);
    ModelSnapshot replay = warmup(shared_base(), seeds.model, labeled, tc).snapshot;

    auto rows = read_uncertainty_csv((tmp.path / "pe" / "uncertainty" / "round_0.csv").string());
    REQUIRE(rows.size() == 20);
    for (const auto& row : rows) {
        const Example& ex = *std::find_if(pool.begin(), pool.end(),
                                          [&](const Example& e) { return e.id == row.id; });
        const double expect = score_example(replay, ex, cfg.decode, ScoreKind::pred_entropy);
        CHECK(row.score == expect);
        CHECK(row.score_fine == expect);  // plain strategies never mix
        CHECK(row.score_base == 0.0);
        CHECK(row.lambda == 0.0);
    }

    // and the logged selection is exactly the top-4 of those scores
    CHECK(r.rounds[1].selected == query_selection(rows, [&] {
        std::vector<int64_t> unl;
        for (const auto& row : rows) unl.push_back(row.id);
        std::sort(unl.begin(), unl.end());
        return unl;
    }(), cfg.query_size));
}

TEST_CASE("dynamic loop mixes cached base scores under the schedule") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();
    TempDir tmp;
    const fs::path dir = tmp.path / "dyn";

    ALRunResult r = run_active_loop(pool, test, shared_base(),
                                    Strategy{StrategyKind::max_entropy_dynamic}, seeds_abc(), cfg,
                                    dir.string());

    for (const char* name : {"config.json", "rounds.csv", "curve.csv", "train_log.csv",
                             "timing.log", "base_scores.csv"}) {
        CHECK(fs::exists(dir / name));
    }
    CHECK(fs::exists(dir / "uncertainty" / "round_0.csv"));
    CHECK(fs::exists(dir / "uncertainty" / "round_1.csv"));
    CHECK(r.rounds[1].scores_csv == "uncertainty/round_0.csv");
    CHECK(r.rounds[2].scores_csv == "uncertainty/round_1.csv");

    // the default linear schedule resolves its horizon to the 2 query rounds
    CHECK(r.rounds[0].lambda == 0.0);
    CHECK(r.rounds[1].lambda == 1.0);
    CHECK(r.rounds[2].lambda == 0.5);

    // base scores cover the whole pool and are dropout-free scores of the base
    auto base_scores = read_score_map((dir / "base_scores.csv").string());
    REQUIRE(base_scores.size() == pool.size());
    for (const auto& ex : pool) {
        REQUIRE(base_scores.count(ex.id) == 1);
        CHECK(base_scores.at(ex.id) ==
              score_example(shared_base(), ex, cfg.decode, ScoreKind::max_entropy));
    }

    // every scored row carries the round's lambda and the exact mixture
    for (int t = 0; t < 2; ++t) {
        auto rows = read_uncertainty_csv(
            (dir / "uncertainty" / ("round_" + std::to_string(t) + ".csv")).string());
        REQUIRE(static_cast<int>(rows.size()) == 20 - 4 * t);
        const double lam = r.rounds[static_cast<std::size_t>(t) + 1].lambda;
        for (const auto& row : rows) {
            CHECK(row.lambda == lam);
            CHECK(row.score_base == base_scores.at(row.id));
            CHECK(row.score == mix_scores(row.score_base, row.score_fine, row.lambda));
            CHECK(row.score_fine > 0.0);  // entropies of a soft model stay positive
        }
    }

    // at lambda == 1 the mixture ignores the fine scores entirely
    auto round0 = read_uncertainty_csv((dir / "uncertainty" / "round_0.csv").string());
    for (const auto& row : round0) CHECK(row.score == row.score_base);

    // artifact round trips and shapes
    auto curve = read_curve_csv((dir / "curve.csv").string());
    REQUIRE(curve.size() == r.curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve[i].labeled == r.curve[i].labeled);
        CHECK(curve[i].accuracy == r.curve[i].accuracy);
    }

    auto round_lines = lines_of(dir / "rounds.csv");
    REQUIRE(round_lines.size() == 4);  // header + warm-up + 2 rounds
    CHECK(round_lines[0] ==
          "round,lambda,unlabeled_before,selected,train_loss,accuracy,labeled_after,scores_csv");
    CHECK(round_lines[1].substr(0, 3) == "-1,");
    CHECK(round_lines[2].substr(0, 2) == "0,");
    CHECK(round_lines[3].substr(0, 2) == "1,");

    auto train_lines = lines_of(dir / "train_log.csv");
    REQUIRE(train_lines.size() == 7);  // header + 3 fits x 2 epochs
    CHECK(train_lines[0] == "round,epoch,loss");
    CHECK(train_lines[1].substr(0, 5) == "-1,0,");
    CHECK(train_lines[2].substr(0, 5) == "-1,1,");
    CHECK(train_lines[3].substr(0, 4) == "0,0,");
    CHECK(train_lines[6].substr(0, 4) == "1,1,");

    // timing lines are "<phase> <seconds>s" and cover every phase of the run
    auto timing = lines_of(dir / "timing.log");
    std::set<std::string> phases;
    for (const auto& line : timing) {
        const auto space = line.find(' ');
        REQUIRE(space != std::string::npos);
        phases.insert(line.substr(0, space));
        const std::string rest = line.substr(space + 1);
        REQUIRE(rest.size() > 1);
        CHECK(rest.back() == 's');
        CHECK(std::stod(rest.substr(0, rest.size() - 1)) >= 0.0);
    }
    for (const char* phase : {"warmup_train", "warmup_eval", "base_scores", "round_0_score",
                              "round_0_train", "round_0_eval", "round_1_score", "round_1_train",
                              "round_1_eval"}) {
        CHECK(phases.count(phase) == 1);
    }

    // the config echo names the strategy, seeds and resolved schedule
    std::string config_text = slurp(dir / "config.json");
    CHECK(config_text.find("\"strategy\": \"me_dyn\"") != std::string::npos);
    CHECK(config_text.find("\"rounds\": 2") != std::string::npos);
    CHECK(config_text.find("\"horizon\": 2") != std::string::npos);
    CHECK(config_text.find("\"model\"") != std::string::npos);
}

TEST_CASE("artifacts are byte-stable across reruns and worker counts") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();
    TempDir tmp;

    run_active_loop(pool, test, shared_base(), Strategy{StrategyKind::max_entropy_dynamic},
                    seeds_abc(), cfg, (tmp.path / "a").string());

    ::setenv("LORALAB_WORKERS", "3", 1);
    run_active_loop(pool, test, shared_base(), Strategy{StrategyKind::max_entropy_dynamic},
                    seeds_abc(), cfg, (tmp.path / "b").string());
    ::unsetenv("LORALAB_WORKERS");

    // identical bytes everywhere except the wall-clock log
    for (const char* name : {"config.json", "rounds.csv", "curve.csv", "train_log.csv",
                             "base_scores.csv", "uncertainty/round_0.csv",
                             "uncertainty/round_1.csv"}) {
        CHECK(slurp(tmp.path / "a" / name) == slurp(tmp.path / "b" / name));
    }
}

TEST_CASE("base score cache is written when absent and trusted when present") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();
    TempDir tmp;
    const std::string cache = (tmp.path / "cache.csv").string();

    ALRunResult first = run_active_loop(pool, test, shared_base(),
                                        Strategy{StrategyKind::max_entropy_dynamic}, seeds_abc(),
                                        cfg, (tmp.path / "r1").string(), cache);
    REQUIRE(fs::exists(cache));
    CHECK(slurp(cache) == slurp(tmp.path / "r1" / "base_scores.csv"));

    // a warm cache reproduces the run exactly
    ALRunResult second = run_active_loop(pool, test, shared_base(),
                                         Strategy{StrategyKind::max_entropy_dynamic}, seeds_abc(),
                                         cfg, (tmp.path / "r2").string(), cache);
    CHECK(slurp(tmp.path / "r1" / "curve.csv") == slurp(tmp.path / "r2" / "curve.csv"));
    CHECK(second.auc == first.auc);

    // a poisoned cache is trusted verbatim: constant base scores + lambda == 1
    // at round 0 force the selection down to the lowest unlabeled ids
    std::map<int64_t, double> flat;
    for (const auto& ex : pool) flat[ex.id] = 0.5;
    const std::string poisoned = (tmp.path / "flat.csv").string();
    write_score_map(poisoned, flat);
    ALRunResult forced = run_active_loop(pool, test, shared_base(),
                                         Strategy{StrategyKind::max_entropy_dynamic}, seeds_abc(),
                                         cfg, (tmp.path / "r3").string(), poisoned);
    auto echoed = read_score_map((tmp.path / "r3" / "base_scores.csv").string());
    for (const auto& [id, score] : echoed) CHECK(score == 0.5);

    std::vector<int64_t> warm_ids = forced.rounds[0].selected;
    std::sort(warm_ids.begin(), warm_ids.end());
    std::vector<int64_t> lowest;
    for (const auto& ex : pool) {
        if (std::find(warm_ids.begin(), warm_ids.end(), ex.id) == warm_ids.end()) {
            lowest.push_back(ex.id);
        }
    }
    std::sort(lowest.begin(), lowest.end());
    lowest.resize(4);
    CHECK(forced.rounds[1].selected == lowest);

    // an incomplete cache is refused before any round starts
    flat.erase(pool.back().id);
    const std::string partial = (tmp.path / "partial.csv").string();
    write_score_map(partial, flat);
    CHECK_THROWS_AS(run_active_loop(pool, test, shared_base(),
                                    Strategy{StrategyKind::max_entropy_dynamic}, seeds_abc(), cfg,
                                    "", partial),
                    std::runtime_error);
}

TEST_CASE("sparse evaluation and zero-round runs") {
    const auto pool = pool_examples();
    const auto test = test_examples();

    ALRunConfig sparse = small_cfg();
    sparse.eval_every_round = false;
    ALRunResult r = run_active_loop(pool, test, shared_base(),
                                    Strategy{StrategyKind::max_entropy}, seeds_abc(), sparse, "");
    REQUIRE(r.curve.size() == 2);  // warm-up and the final round only
    CHECK(r.curve[0].labeled == 4);
    CHECK(r.curve[1].labeled == 12);
    CHECK(std::isnan(r.rounds[1].accuracy));  // skipped mid-run evaluation
    CHECK_FALSE(std::isnan(r.rounds[2].accuracy));
    CHECK(std::isfinite(r.auc));

    TempDir tmp;
    ALRunConfig warm_only = small_cfg();
    warm_only.budget = warm_only.warmup_size;
    ALRunResult w = run_active_loop(pool, test, shared_base(), Strategy{StrategyKind::random_pick},
                                    seeds_abc(), warm_only, (tmp.path / "w").string());
    REQUIRE(w.curve.size() == 1);
    CHECK(std::isnan(w.auc));  // a single point has no area
    CHECK(w.rounds.size() == 1);
    CHECK(w.final_snapshot.snapshot_id == 1);
    CHECK(fs::exists(tmp.path / "w" / "rounds.csv"));
    CHECK_FALSE(fs::exists(tmp.path / "w" / "uncertainty"));
    CHECK(lines_of(tmp.path / "w" / "rounds.csv").size() == 2);
}

TEST_CASE("random runs skip scoring but obey the same bookkeeping") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();
    TempDir tmp;

    // dropout-free weights are fine here: random never runs MC passes
    ModelConfig dry = loop_config();
    dry.lora_dropout = 0.0;
    ModelSnapshot dry_base = make_base_snapshot(dry, 11);

    ALRunResult r = run_active_loop(pool, test, dry_base, Strategy{StrategyKind::random_pick},
                                    seeds_abc(), cfg, (tmp.path / "rnd").string());
    REQUIRE(r.rounds.size() == 3);
    for (const auto& log : r.rounds) {
        CHECK(log.selected.size() == 4);
        CHECK(log.lambda == 0.0);
        CHECK(log.scores_csv.empty());
    }
    CHECK_FALSE(fs::exists(tmp.path / "rnd" / "uncertainty"));
    CHECK_FALSE(fs::exists(tmp.path / "rnd" / "base_scores.csv"));
    CHECK(fs::exists(tmp.path / "rnd" / "curve.csv"));

    // per-round draws differ: the two query rounds almost surely disagree in
    // content, and rerunning reproduces them exactly
    ALRunResult again = run_active_loop(pool, test, dry_base, Strategy{StrategyKind::random_pick},
                                        seeds_abc(), cfg, "");
    CHECK(again.rounds[1].selected == r.rounds[1].selected);
    CHECK(again.rounds[2].selected == r.rounds[2].selected);
}

TEST_CASE("run preconditions are enforced") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();
    const Strategy me{StrategyKind::max_entropy};

    // only the pristine pretrained snapshot may seed a run
    TrainConfig tc = cfg.train;
    tc.seed = 5;
    ModelSnapshot tuned = warmup(shared_base(), 11, {pool[0], pool[1]}, tc).snapshot;
    CHECK_THROWS_AS(run_active_loop(pool, test, tuned, me, seeds_abc(), cfg, ""),
                    std::invalid_argument);

    ModelSnapshot dressed = with_fresh_adapters(shared_base(), 11);
    CHECK_THROWS_AS(run_active_loop(pool, test, dressed, me, seeds_abc(), cfg, ""),
                    std::invalid_argument);

    CHECK_THROWS_AS(run_active_loop(pool, {}, shared_base(), me, seeds_abc(), cfg, ""),
                    std::invalid_argument);

    // dynamic strategies need a dropout rate for their MC passes
    ModelConfig dry = loop_config();
    dry.lora_dropout = 0.0;
    ModelSnapshot dry_base = make_base_snapshot(dry, 11);
    CHECK_THROWS_AS(run_active_loop(pool, test, dry_base,
                                    Strategy{StrategyKind::max_entropy_dynamic}, seeds_abc(), cfg,
                                    ""),
                    std::invalid_argument);

    ALRunConfig greedy = small_cfg();
    greedy.budget = 28;  // pool only holds 24
    CHECK_THROWS_AS(run_active_loop(pool, test, shared_base(), me, seeds_abc(), greedy, ""),
                    std::invalid_argument);
}

TEST_CASE("oracle refuses corrupted labels and round errors carry the round") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    const ALRunConfig cfg = small_cfg();
    const Strategy me{StrategyKind::max_entropy};

    // flip every gold label: the warm-up annotation check must refuse
    auto flipped = pool;
    for (auto& ex : flipped) {
        ex.gold[0] = ex.gold[0] == token_true_() ? token_false_() : token_true_();
    }
    try {
        run_active_loop(flipped, test, shared_base(), me, seeds_abc(), cfg, "");
        FAIL("corrupted pool was accepted");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("oracle mismatch") != std::string::npos);
    }

    // learn the warm-up draw from a clean run, then plant an over-long prompt
    // on an example that only round 0 will touch
    ALRunResult clean = run_active_loop(pool, test, shared_base(), me, seeds_abc(), cfg, "");
    const auto& warm = clean.rounds[0].selected;
    auto broken = pool;
    auto& victim = *std::find_if(broken.begin(), broken.end(), [&](const Example& ex) {
        return std::find(warm.begin(), warm.end(), ex.id) == warm.end();
    });
    victim.prompt.assign(13, token_digit(0));  // rendered form exceeds max_seq_len

    try {
        run_active_loop(broken, test, shared_base(), me, seeds_abc(), cfg, "");
        FAIL("over-long prompt was scored");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).rfind("round 0: ", 0) == 0);
    }
}

TEST_CASE("snapshots are persisted on request") {
    const auto pool = pool_examples();
    const auto test = test_examples();
    TempDir tmp;

    ALRunConfig cfg = small_cfg();
    cfg.budget = 8;  // one query round
    cfg.save_snapshots = true;
    ALRunResult r = run_active_loop(pool, test, shared_base(),
                                    Strategy{StrategyKind::max_entropy}, seeds_abc(), cfg,
                                    (tmp.path / "s").string());

    REQUIRE(fs::exists(tmp.path / "s" / "snapshots" / "warmup.bin"));
    REQUIRE(fs::exists(tmp.path / "s" / "snapshots" / "round_0.bin"));

    ModelSnapshot warm = load_snapshot((tmp.path / "s" / "snapshots" / "warmup.bin").string());
    CHECK(warm.snapshot_id == 1);

    ModelSnapshot last = load_snapshot((tmp.path / "s" / "snapshots" / "round_0.bin").string());
    last.validate();
    CHECK(last.snapshot_id == r.final_snapshot.snapshot_id);
    CHECK(accuracy_exact_match(last, test) == r.curve.back().accuracy);
}
