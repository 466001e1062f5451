#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loralab/metrics.hpp"
#include "loralab/model.hpp"
#include "loralab/tasks.hpp"
#include "loralab/trainer.hpp"
#include "loralab/uncertainty.hpp"

namespace loralab {

// Labeled/unlabeled split over a fixed example pool. Ids stay sorted so every
// iteration order downstream is deterministic; the two sets always partition
// the pool.
class Pool {
public:
    explicit Pool(const std::vector<Example>& examples);

    const std::vector<int64_t>& unlabeled() const { return unlabeled_; }
    const std::vector<int64_t>& labeled() const { return labeled_; }
    const Example& example(int64_t id) const;
    std::vector<Example> labeled_examples() const;  // ascending id
    void mark_labeled(const std::vector<int64_t>& ids);

private:
    std::vector<Example> examples_;  // sorted by id
    std::vector<int64_t> unlabeled_;
    std::vector<int64_t> labeled_;
};

enum class StrategyKind {
    random_pick,
    max_entropy,
    pred_entropy,
    max_entropy_dynamic,
    pred_entropy_dynamic,
};

// short names used in configs and output paths
const char* strategy_name(StrategyKind k);  // random, me, pe, me_dyn, pe_dyn
StrategyKind strategy_from_name(const std::string& name);

// The dynamic kinds score with MC-dropout passes on the current adapters and
// mix with the cached base score under the lambda schedule; the plain kinds
// take a single dropout-free score of the current model; random never scores.
struct Strategy {
    StrategyKind kind = StrategyKind::random_pick;

    bool is_random() const { return kind == StrategyKind::random_pick; }
    bool is_dynamic() const {
        return kind == StrategyKind::max_entropy_dynamic ||
               kind == StrategyKind::pred_entropy_dynamic;
    }
    ScoreKind score_kind() const;  // throws for random_pick
};

struct ALSeeds {
    std::uint64_t model = 0;   // adapter init
    std::uint64_t train = 0;   // per-round training streams
    std::uint64_t select = 0;  // warm-up draw, random picks, MC passes
};

struct ALRunConfig {
    int warmup_size = 50;
    int query_size = 50;
    int budget = 500;         // warmup_size + rounds() * query_size
    TrainConfig train;        // per-round seed is derived, the field is ignored
    DecodeParams decode;
    int mc_passes = 8;
    LambdaSchedule schedule;  // linear horizon <= 0 means "rounds()"
    bool eval_every_round = true;  // false: evaluate only after warm-up and the last round
    bool save_snapshots = false;

    int rounds() const;  // query rounds after warm-up, may be 0
    void validate(int pool_size) const;
};

// Top-m by score, ties toward the lower id; returns everything when fewer
// than m remain. `scored` must cover exactly the unlabeled ids. Result is in
// selection (descending score) order.
std::vector<int64_t> query_selection(const std::vector<UncertaintyRecord>& scored,
                                     const std::vector<int64_t>& unlabeled, int m);

struct ALRoundLog {
    int round = 0;  // -1 is the warm-up fit
    double lambda = 0.0;
    int unlabeled_before = 0;
    std::vector<int64_t> selected;
    double train_loss = 0.0;   // final epoch mean
    double accuracy = 0.0;     // NaN on skipped evaluations
    int labeled_after = 0;
    std::string scores_csv;    // relative path, empty when nothing was scored
};

struct ALRunResult {
    std::vector<CurvePoint> curve;  // one point per evaluation
    double auc = 0.0;               // NaN when the curve has a single point
    std::vector<ALRoundLog> rounds;
    ModelSnapshot final_snapshot;
};

// One complete run: random warm-up fit, then rounds of score -> query ->
// label -> train -> eval. The oracle step re-derives every selected answer
// from the prompt and refuses mismatched gold. Artifacts land in out_dir
// (pass "" to skip all file output): config.json, rounds.csv, curve.csv,
// train_log.csv, timing.log, uncertainty/round_<t>.csv per scored round and
// base_scores.csv for dynamic strategies. Wall times go only to timing.log so
// the CSVs are reproducible byte for byte. If base_scores_cache names an
// existing file it is loaded instead of rescoring the pool; a missing cache
// file is written after scoring. Errors from inside a query round carry the
// round number.
ALRunResult run_active_loop(const std::vector<Example>& pool_examples,
                            const std::vector<Example>& test_examples,
                            const ModelSnapshot& base, const Strategy& strategy,
                            const ALSeeds& seeds, const ALRunConfig& cfg,
                            const std::string& out_dir, const std::string& base_scores_cache = "");

}  // namespace loralab
