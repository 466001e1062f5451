#include "loralab/uncertainty.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "loralab/format.hpp"
#include "loralab/parallel.hpp"
#include "loralab/rng.hpp"

namespace loralab {

void DecodeParams::validate() const {
    if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
}

const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::max_entropy: return "max_entropy";
        case ScoreKind::pred_entropy: return "pred_entropy";
    }
    throw std::logic_error("unknown score kind");
}

namespace {

std::vector<double> logits_row(const Tensor& logits, int row) {
    const int cols = logits.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(j)] = logits.at(row, j);
    return out;
}

}  // namespace

double max_entropy_score(const ModelSnapshot& snap, const std::vector<int>& prompt,
                         const DecodeParams& params, DropoutMode drop) {
    params.validate();
    if (prompt.empty()) throw std::invalid_argument("max_entropy_score: empty prompt");
    std::vector<int> seq = prompt;
    const int stop = token_stop();
    double total = 0.0;
    int steps = 0;
    while (steps < params.max_new_tokens) {
        // The first step is always scored; forward_logits rejects prompts
        // that exceed the context window.
        if (steps > 0 && static_cast<int>(seq.size()) > snap.config.max_seq_len) break;
        Tensor logits = forward_logits(snap, seq, drop);
        std::vector<double> row = logits_row(logits, static_cast<int>(seq.size()) - 1);
        total += entropy_of_distribution(softmax_vector(row));
        ++steps;
        int next = static_cast<int>(argmax_index(row));
        if (next == stop) break;
        seq.push_back(next);
    }
    return total;
}

double predictive_entropy_score(const ModelSnapshot& snap, const std::vector<int>& prompt,
                                const std::vector<int>& response, DropoutMode drop) {
    if (prompt.empty()) throw std::invalid_argument("predictive_entropy_score: empty prompt");
    if (response.empty()) throw std::invalid_argument("predictive_entropy_score: empty response");
    std::vector<int> feed = prompt;
    feed.insert(feed.end(), response.begin(), response.end() - 1);
    Tensor logits = forward_logits(snap, feed, drop);
    const int vocab = logits.shape()[1];
    double total = 0.0;
    for (std::size_t i = 0; i < response.size(); ++i) {
        const int row = static_cast<int>(prompt.size() + i) - 1;
        const int tok = response[i];
        if (tok < 0 || tok >= vocab) {
            throw std::invalid_argument("predictive_entropy_score: token out of range");
        }
        double mx = logits.at(row, 0);
        for (int j = 1; j < vocab; ++j) mx = std::max(mx, logits.at(row, j));
        double sum = 0.0;
        for (int j = 0; j < vocab; ++j) sum += std::exp(logits.at(row, j) - mx);
        const double lse = mx + std::log(sum);
        total += lse - logits.at(row, tok);
    }
    return total;
}

std::vector<int> prompt_tokens(const Example& ex) { return render_prompt(ex); }

std::vector<int> continuation_tokens(const Example& ex) {
    std::vector<int> toks = ex.gold;
    toks.push_back(token_stop());
    return toks;
}

double score_example(const ModelSnapshot& snap, const Example& ex, const DecodeParams& params,
                     ScoreKind kind, DropoutMode drop) {
    switch (kind) {
        case ScoreKind::max_entropy:
            return max_entropy_score(snap, prompt_tokens(ex), params, drop);
        case ScoreKind::pred_entropy:
            return predictive_entropy_score(snap, prompt_tokens(ex), continuation_tokens(ex), drop);
    }
    throw std::logic_error("unknown score kind");
}

double mc_score(const ModelSnapshot& snap, const Example& ex, const DecodeParams& params,
                ScoreKind kind, int passes, std::uint64_t seed) {
    if (passes < 1) throw std::invalid_argument("mc_score: passes must be >= 1");
    double sum = 0.0;
    for (int k = 1; k <= passes; ++k) {
        DropoutMode drop = DropoutMode::with_seed(derive_seed(seed, static_cast<std::uint64_t>(k)));
        sum += score_example(snap, ex, params, kind, drop);
    }
    return sum / static_cast<double>(passes);
}

std::map<int64_t, double> precompute_base_scores(const ModelSnapshot& snap,
                                                 const std::vector<Example>& pool,
                                                 const DecodeParams& params, ScoreKind kind) {
    if (snap.snapshot_id != 0) {
        throw std::invalid_argument(
            "precompute_base_scores: expected the pretrained base snapshot (snapshot_id 0)");
    }
    std::vector<double> slots(pool.size(), 0.0);
    parallel_for(static_cast<int>(pool.size()), worker_count_from_env(), [&](int i) {
        slots[static_cast<std::size_t>(i)] =
            score_example(snap, pool[static_cast<std::size_t>(i)], params, kind, DropoutMode::off());
    });
    std::map<int64_t, double> out;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!out.emplace(pool[i].id, slots[i]).second) {
            throw std::invalid_argument("precompute_base_scores: duplicate example id");
        }
    }
    return out;
}

void write_score_map(const std::string& path, const std::map<int64_t, double>& scores) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "id,score\n";
    for (const auto& [id, score] : scores) out << id << "," << g17(score) << "\n";
    if (!out.good()) throw std::runtime_error("write failed for " + path);
}

std::map<int64_t, double> read_score_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"id", "score"}) {
        throw std::runtime_error(path + ": missing id,score header");
    }
    std::map<int64_t, double> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        if (cols.size() != 2) throw std::runtime_error(path + ": malformed row '" + line + "'");
        int64_t id = parse_int(cols[0], "id");
        if (!out.emplace(id, parse_double(cols[1], "score")).second) {
            throw std::runtime_error(path + ": duplicate id " + cols[0]);
        }
    }
    return out;
}

const char* schedule_kind_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::exponential: return "exponential";
    }
    throw std::logic_error("unknown schedule kind");
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "constant") return ScheduleKind::constant;
    if (name == "linear") return ScheduleKind::linear;
    if (name == "exponential") return ScheduleKind::exponential;
    throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

void LambdaSchedule::validate() const {
    if (!(floor >= 0.0 && floor <= 1.0)) throw std::invalid_argument("lambda floor must be in [0, 1]");
    if (kind == ScheduleKind::linear && horizon < 1) {
        throw std::invalid_argument("linear schedule needs horizon >= 1");
    }
    if (kind == ScheduleKind::exponential && !(rate > 0.0 && rate <= 1.0)) {
        throw std::invalid_argument("exponential schedule needs rate in (0, 1]");
    }
}

double lambda_value(const LambdaSchedule& sched, int t) {
    sched.validate();
    if (t < 0) throw std::invalid_argument("lambda_value: t must be >= 0");
    switch (sched.kind) {
        case ScheduleKind::constant: return sched.floor;
        case ScheduleKind::linear:
            return std::max(sched.floor, 1.0 - static_cast<double>(t) / sched.horizon);
        case ScheduleKind::exponential:
            return std::max(sched.floor, std::pow(sched.rate, t));
    }
    throw std::logic_error("unknown schedule kind");
}

double mix_scores(double mu_base, double mu_fine, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in [0, 1]");
    return lambda * mu_base + (1.0 - lambda) * mu_fine;
}

void write_uncertainty_csv(const std::string& path, const std::vector<UncertaintyRecord>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "id,score_base,score_fine,lambda,score\n";
    for (const auto& r : rows) {
        out << r.id << "," << g17(r.score_base) << "," << g17(r.score_fine) << "," << g17(r.lambda)
            << "," << g17(r.score) << "\n";
    }
    if (!out.good()) throw std::runtime_error("write failed for " + path);
}

std::vector<UncertaintyRecord> read_uncertainty_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    const std::vector<std::string> want{"id", "score_base", "score_fine", "lambda", "score"};
    if (!std::getline(in, line) || split_csv_line(line) != want) {
        throw std::runtime_error(path + ": missing uncertainty header");
    }
    std::vector<UncertaintyRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        if (cols.size() != want.size()) {
            throw std::runtime_error(path + ": malformed row '" + line + "'");
        }
        UncertaintyRecord r;
        r.id = parse_int(cols[0], "id");
        r.score_base = parse_double(cols[1], "score_base");
        r.score_fine = parse_double(cols[2], "score_fine");
        r.lambda = parse_double(cols[3], "lambda");
        r.score = parse_double(cols[4], "score");
        out.push_back(r);
    }
    return out;
}

}  // namespace loralab
