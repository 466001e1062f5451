#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loralab/model.hpp"
#include "loralab/tasks.hpp"

namespace loralab {

struct DecodeParams {
    int max_new_tokens = 16;

    void validate() const;
};

enum class ScoreKind { max_entropy, pred_entropy };

const char* score_kind_name(ScoreKind k);

// Maximum-entropy score: greedily decode up to max_new_tokens and sum the
// entropy (nats) of the next-token distribution at every step taken,
// including the step that emits the stop token. No length normalization.
// At least one step is always scored.
double max_entropy_score(const ModelSnapshot& snap, const std::vector<int>& prompt,
                         const DecodeParams& params, DropoutMode drop = DropoutMode::off());

// Predictive-entropy score: sum of -log p(response_i | prompt, response_<i)
// over the given response tokens. The response must be non-empty; callers
// score the gold answer followed by the stop token.
double predictive_entropy_score(const ModelSnapshot& snap, const std::vector<int>& prompt,
                                const std::vector<int>& response,
                                DropoutMode drop = DropoutMode::off());

// Tokenized prompt/gold-continuation views of an example. The continuation
// is the gold answer tokens followed by the stop token, mirroring the
// supervised positions used by the trainer.
std::vector<int> prompt_tokens(const Example& ex);
std::vector<int> continuation_tokens(const Example& ex);

// One dropout-free score of the given kind.
double score_example(const ModelSnapshot& snap, const Example& ex, const DecodeParams& params,
                     ScoreKind kind, DropoutMode drop = DropoutMode::off());

// Monte Carlo score: mean over `passes` forward passes with dropout active,
// pass k (1-based) seeded with derive_seed(seed, k); passes >= 1. With a zero
// dropout rate every pass collapses to the deterministic score.
double mc_score(const ModelSnapshot& snap, const Example& ex, const DecodeParams& params,
                ScoreKind kind, int passes, std::uint64_t seed);

// Scores every example once with dropout off. Requires the pristine
// pretrained snapshot (snapshot_id == 0) so cached base scores cannot be
// silently computed from a fine-tuned model.
std::map<int64_t, double> precompute_base_scores(const ModelSnapshot& snap,
                                                 const std::vector<Example>& pool,
                                                 const DecodeParams& params, ScoreKind kind);

void write_score_map(const std::string& path, const std::map<int64_t, double>& scores);
std::map<int64_t, double> read_score_map(const std::string& path);

// Mixing weight schedule for dynamic strategies. t counts query rounds,
// t = 0 at the first selection after warm-up.
enum class ScheduleKind { constant, linear, exponential };

const char* schedule_kind_name(ScheduleKind k);
ScheduleKind schedule_kind_from_name(const std::string& name);

struct LambdaSchedule {
    ScheduleKind kind = ScheduleKind::linear;
    double floor = 0.0;   // lower bound on lambda, in [0, 1]
    int horizon = 0;      // linear: rounds until the floor is reached; <= 0 resolves
                          // to the consumer's round count before use
    double rate = 0.9;    // exponential: lambda(t) = rate^t

    void validate() const;
};

double lambda_value(const LambdaSchedule& sched, int t);

// mu = lambda * mu_base + (1 - lambda) * mu_fine, lambda in [0, 1].
double mix_scores(double mu_base, double mu_fine, double lambda);

struct UncertaintyRecord {
    int64_t id = 0;
    double score_base = 0.0;
    double score_fine = 0.0;
    double lambda = 0.0;
    double score = 0.0;
};

void write_uncertainty_csv(const std::string& path, const std::vector<UncertaintyRecord>& rows);
std::vector<UncertaintyRecord> read_uncertainty_csv(const std::string& path);

}  // namespace loralab
