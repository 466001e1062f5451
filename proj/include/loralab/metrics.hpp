#pragma once

#include <string>
#include <vector>

#include "loralab/model.hpp"
#include "loralab/tasks.hpp"

namespace loralab {

// Greedy decode and compare against the gold token sequence; a prediction
// counts only on exact match. The decode budget is the longest gold answer in
// the set plus one step for the stop token.
double accuracy_exact_match(const ModelSnapshot& snap, const std::vector<Example>& examples);

struct CurvePoint {
    int labeled = 0;      // labeled examples consumed when the point was measured
    double accuracy = 0.0;
};

// Area under the learning curve, trapezoid rule, normalized by the labeled
// span so the result lives in [0, 1] whenever the accuracies do.
double auc_normalized(const std::vector<CurvePoint>& curve);

// Relative improvement over the passive baseline: (al - pl) / (1 - pl).
double ripl(double auc_active, double auc_passive);

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> read_curve_csv(const std::string& path);

// Confidence on wrongly answered true/false questions. At the first answer
// position the probability mass on the two label tokens is renormalized; the
// share of the larger one is the confidence, in [0.5, 1]. Examples whose
// two-way read already matches gold are excluded. Counts fall into 20 equal
// bins over [0.5, 1.0].
struct ConfidenceProbeResult {
    std::vector<double> wrong_confidences;  // dataset order
    std::vector<int> bin_counts;            // 20 bins
    double mean_confidence = 0.0;           // 0 when nothing was wrong
    int wrong_count = 0;
    int total = 0;
};

ConfidenceProbeResult confidence_probe(const ModelSnapshot& snap,
                                       const std::vector<Example>& examples);

// Correlation between score vectors from successive iterations (at least
// two), restricted to the top_n columns ranked by row 0 (ties toward lower
// id). rows[i] is aligned with ids. Pearson by default, Spearman with average
// ranks on request. Diagonal entries are 1; a zero-variance row correlates 0
// with every other. top_n beyond the available columns clamps and flags.
struct EntropyCorrelationResult {
    std::vector<int64_t> ids;  // selected columns, ascending
    std::vector<std::vector<double>> matrix;
    int used_n = 0;
    bool clamped = false;  // top_n exceeded the available columns
};

EntropyCorrelationResult entropy_correlation(const std::vector<std::vector<double>>& rows,
                                             const std::vector<int64_t>& ids, int top_n,
                                             bool spearman);

}  // namespace loralab
