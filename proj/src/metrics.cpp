#include "loralab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "loralab/format.hpp"
#include "loralab/parallel.hpp"
#include "loralab/uncertainty.hpp"

namespace loralab {

double accuracy_exact_match(const ModelSnapshot& snap, const std::vector<Example>& examples) {
    if (examples.empty()) throw std::invalid_argument("accuracy: empty evaluation set");
    int max_gold = 0;
    for (const auto& ex : examples) {
        max_gold = std::max(max_gold, static_cast<int>(ex.gold.size()));
    }
    const int max_new = max_gold + 1;  // room for the stop token
    std::vector<char> hit(examples.size(), 0);
    parallel_for(static_cast<int>(examples.size()), worker_count_from_env(), [&](int i) {
        const Example& ex = examples[static_cast<std::size_t>(i)];
        std::vector<int> got =
            generate_greedy(snap, prompt_tokens(ex), max_new, token_stop());
        hit[static_cast<std::size_t>(i)] = (got == ex.gold) ? 1 : 0;
    });
    long long correct = std::count(hit.begin(), hit.end(), 1);
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double auc_normalized(const std::vector<CurvePoint>& curve) {
    if (curve.size() < 2) throw std::invalid_argument("auc: need at least two curve points");
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double dx = static_cast<double>(curve[i].labeled - curve[i - 1].labeled);
        if (dx <= 0.0) throw std::invalid_argument("auc: labeled counts must increase");
        area += 0.5 * (curve[i].accuracy + curve[i - 1].accuracy) * dx;
    }
    return area / static_cast<double>(curve.back().labeled - curve.front().labeled);
}

double ripl(double auc_active, double auc_passive) {
    if (!(auc_active >= 0.0 && auc_active <= 1.0) || !(auc_passive >= 0.0 && auc_passive <= 1.0)) {
        throw std::invalid_argument("ripl: AUC inputs must be in [0, 1]");
    }
    if (auc_passive >= 1.0) throw std::invalid_argument("ripl: passive AUC must be < 1");
    return (auc_active - auc_passive) / (1.0 - auc_passive);
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "labeled,accuracy\n";
    for (const auto& p : curve) out << p.labeled << "," << g17(p.accuracy) << "\n";
    if (!out.good()) throw std::runtime_error("write failed for " + path);
}

std::vector<CurvePoint> read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) != std::vector<std::string>{"labeled", "accuracy"}) {
        throw std::runtime_error(path + ": missing labeled,accuracy header");
    }
    std::vector<CurvePoint> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        if (cols.size() != 2) throw std::runtime_error(path + ": malformed row '" + line + "'");
        out.push_back({static_cast<int>(parse_int(cols[0], "labeled")),
                       parse_double(cols[1], "accuracy")});
    }
    return out;
}

ConfidenceProbeResult confidence_probe(const ModelSnapshot& snap,
                                       const std::vector<Example>& examples) {
    if (examples.empty()) throw std::invalid_argument("confidence probe: empty set");
    const std::vector<int> gold_true{token_true_()};
    const std::vector<int> gold_false{token_false_()};
    struct Slot {
        bool wrong = false;
        double share = 0.0;
    };
    std::vector<Slot> slots(examples.size());
    parallel_for(static_cast<int>(examples.size()), worker_count_from_env(), [&](int i) {
        const Example& ex = examples[static_cast<std::size_t>(i)];
        if (ex.gold != gold_true && ex.gold != gold_false) {
            throw std::invalid_argument("confidence probe: example " + std::to_string(ex.id) +
                                        " is not a true/false question");
        }
        std::vector<int> prompt = prompt_tokens(ex);
        Tensor logits = forward_logits(snap, prompt, DropoutMode::off());
        const int row = static_cast<int>(prompt.size()) - 1;
        const int vocab = logits.shape()[1];
        std::vector<double> logit_row(static_cast<std::size_t>(vocab));
        for (int j = 0; j < vocab; ++j) logit_row[static_cast<std::size_t>(j)] = logits.at(row, j);
        std::vector<double> probs = softmax_vector(logit_row);
        const double pt = probs[static_cast<std::size_t>(token_true_())];
        const double pf = probs[static_cast<std::size_t>(token_false_())];
        const bool pred_true = pt >= pf;
        Slot& s = slots[static_cast<std::size_t>(i)];
        s.wrong = (pred_true != (ex.gold == gold_true));
        s.share = std::max(pt, pf) / (pt + pf);
    });
    ConfidenceProbeResult res;
    res.bin_counts.assign(20, 0);
    res.total = static_cast<int>(examples.size());
    double sum = 0.0;
    for (const auto& s : slots) {
        if (!s.wrong) continue;
        res.wrong_count += 1;
        res.wrong_confidences.push_back(s.share);
        sum += s.share;
        int bin = static_cast<int>((s.share - 0.5) / 0.5 * 20.0);
        bin = std::clamp(bin, 0, 19);
        res.bin_counts[static_cast<std::size_t>(bin)] += 1;
    }
    if (res.wrong_count > 0) res.mean_confidence = sum / res.wrong_count;
    return res;
}

namespace {

// average ranks, ties share the mean of their positions
std::vector<double> rank_transform(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace

EntropyCorrelationResult entropy_correlation(const std::vector<std::vector<double>>& rows,
                                             const std::vector<int64_t>& ids, int top_n,
                                             bool spearman) {
    if (rows.size() < 2) throw std::invalid_argument("entropy correlation: need at least 2 rows");
    if (ids.empty()) throw std::invalid_argument("entropy correlation: no ids");
    for (const auto& r : rows) {
        if (r.size() != ids.size()) {
            throw std::invalid_argument("entropy correlation: row length does not match ids");
        }
    }
    if (top_n < 2) throw std::invalid_argument("entropy correlation: top_n must be >= 2");

    EntropyCorrelationResult res;
    res.clamped = top_n > static_cast<int>(ids.size());
    res.used_n = std::min<int>(top_n, static_cast<int>(ids.size()));

    // rank columns by the first row, high scores first, ties toward lower id
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rows[0][a] != rows[0][b]) return rows[0][a] > rows[0][b];
        return ids[a] < ids[b];
    });
    order.resize(static_cast<std::size_t>(res.used_n));
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    res.ids.reserve(order.size());
    for (std::size_t c : order) res.ids.push_back(ids[c]);

    std::vector<std::vector<double>> sel(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        sel[r].reserve(order.size());
        for (std::size_t c : order) sel[r].push_back(rows[r][c]);
        if (spearman) sel[r] = rank_transform(sel[r]);
    }

    const std::size_t m = rows.size();
    res.matrix.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        res.matrix[i][i] = 1.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            const double c = pearson(sel[i], sel[j]);
            res.matrix[i][j] = c;
            res.matrix[j][i] = c;
        }
    }
    return res;
}

}  // namespace loralab
