#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loralab/active_loop.hpp"
#include "loralab/model.hpp"
#include "loralab/tasks.hpp"
#include "loralab/trainer.hpp"

namespace loralab {

// Sizes of the three disjoint example sets carved from one generation pass.
struct DataConfig {
    int pool = 2000;
    int test = 400;
};

struct PretrainConfig {
    int corpus_size = 1600;
    int epochs = 6;
    int batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 99;
};

struct ProbeConfig {
    int top_n = 100;
    bool spearman = false;
    int overtrain_epochs = 80;
    int overtrain_examples = 64;
    int overtrain_batch = 4;  // small batches -> many more optimizer steps
    std::uint64_t overtrain_seed = 7;
};

// Everything a full experiment needs; serialized as strict JSON (unknown keys
// are rejected by name). configs/reference.json is the serialized default
// instance and doubles as the format documentation.
struct ExperimentConfig {
    int schema_version = 1;
    std::string output_dir = "out";
    TaskSpec task;  // count is derived from data + pretrain sizes
    DataConfig data;
    ModelConfig model;
    PretrainConfig pretrain;
    TrainConfig train;  // seed is derived per run
    ALRunConfig al;     // its nested train/decode come from `train` and al.decode
    std::vector<StrategyKind> strategies{StrategyKind::random_pick, StrategyKind::max_entropy,
                                         StrategyKind::max_entropy_dynamic};
    std::vector<std::uint64_t> repeat_seeds{1, 2, 3};
    ProbeConfig probe;

    void validate() const;
    int total_examples() const { return data.pool + data.test + pretrain.corpus_size; }

    std::string data_dir() const { return output_dir + "/data"; }
    std::string base_snapshot_path() const { return output_dir + "/base/base.bin"; }
    std::string run_dir(StrategyKind s, std::uint64_t seed) const;
    std::string report_dir() const { return output_dir + "/report"; }
    std::string probe_dir() const { return output_dir + "/probe"; }
};

ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::string& path);

// Per-repeat seed streams for one run.
ALSeeds run_seeds(std::uint64_t repeat_seed);

// Subcommand bodies. All of them throw on failure: std::invalid_argument and
// std::runtime_error for user/config/data errors, std::logic_error for broken
// internal invariants. Progress lines go to stdout.

// Generates pool/test/pretrain JSONL files into data_dir(). Refuses to touch
// an existing non-empty data dir unless force is set.
void cmd_gen_data(const ExperimentConfig& cfg, bool force);

// Trains the backbone on pretrain.jsonl and freezes it into base/base.bin
// (snapshot_id 0) plus a per-epoch loss log.
void cmd_pretrain(const ExperimentConfig& cfg);

// Runs every configured strategy x repeat seed; each run writes its own
// directory under runs/. Existing directories of the same runs are replaced.
void cmd_run(const ExperimentConfig& cfg);

// Aggregates runs/: per-strategy mean AUC and RIPL against the baseline
// strategy's mean AUC; writes report/report.csv and report/curves.csv.
void cmd_report(const ExperimentConfig& cfg, const std::string& baseline);

// kind == "confidence_density": histogram of wrong-answer confidence for the
// pretrained base and for a deliberately overtrained adapter snapshot.
// kind == "entropy_correlation": cross-iteration correlation matrix and
// scatter pairs replayed from a finished plain max-entropy run (run_dir).
void cmd_probe(const ExperimentConfig& cfg, const std::string& kind, const std::string& run_dir);

}  // namespace loralab
