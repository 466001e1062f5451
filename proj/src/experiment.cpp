#include "loralab/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "loralab/format.hpp"
#include "loralab/metrics.hpp"
#include "loralab/parallel.hpp"
#include "loralab/rng.hpp"
#include "loralab/uncertainty.hpp"

namespace fs = std::filesystem;

namespace loralab {

namespace {

void check_keys(const nlohmann::json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw std::invalid_argument("config: " + (scope.empty() ? std::string("root") : scope) +
                                    " must be an object");
    }
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw std::invalid_argument(
                "config: unknown key '" +
                (scope.empty() ? item.key() : scope + "." + item.key()) + "'");
        }
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T def) {
    if (!j.contains(key)) return def;
    return j.at(key).get<T>();
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (schema_version != 1) {
        throw std::invalid_argument("config: unsupported schema_version " +
                                    std::to_string(schema_version));
    }
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir must not be empty");
    if (data.pool < 1) throw std::invalid_argument("config: data.pool must be >= 1");
    if (data.test < 1) throw std::invalid_argument("config: data.test must be >= 1");
    if (pretrain.corpus_size < 0) {
        throw std::invalid_argument("config: pretrain.corpus_size must be >= 0");
    }
    if (pretrain.epochs < 1) throw std::invalid_argument("config: pretrain.epochs must be >= 1");
    if (pretrain.batch_size < 1) {
        throw std::invalid_argument("config: pretrain.batch_size must be >= 1");
    }
    if (!(pretrain.lr > 0.0)) throw std::invalid_argument("config: pretrain.lr must be > 0");

    TaskSpec full = task;
    full.count = total_examples();
    full.validate();
    model.validate();
    if (model.vocab_size < symbol_vocab_size()) {
        throw std::invalid_argument("config: model.vocab_size is below the symbol vocabulary (" +
                                    std::to_string(symbol_vocab_size()) + ")");
    }
    train.validate();
    ALRunConfig resolved = al;
    resolved.train = train;
    resolved.validate(data.pool);

    if (strategies.empty()) throw std::invalid_argument("config: strategies must not be empty");
    std::set<StrategyKind> sset(strategies.begin(), strategies.end());
    if (sset.size() != strategies.size()) {
        throw std::invalid_argument("config: duplicate strategy");
    }
    if (repeat_seeds.empty()) {
        throw std::invalid_argument("config: repeat_seeds must not be empty");
    }
    std::set<std::uint64_t> rset(repeat_seeds.begin(), repeat_seeds.end());
    if (rset.size() != repeat_seeds.size()) {
        throw std::invalid_argument("config: duplicate repeat seed");
    }
    if (probe.top_n < 2) throw std::invalid_argument("config: probe.top_n must be >= 2");
    if (probe.overtrain_epochs < 1) {
        throw std::invalid_argument("config: probe.overtrain_epochs must be >= 1");
    }
    if (probe.overtrain_examples < 1 || probe.overtrain_examples > data.pool) {
        throw std::invalid_argument("config: probe.overtrain_examples must be in [1, data.pool]");
    }
    if (probe.overtrain_batch < 1) {
        throw std::invalid_argument("config: probe.overtrain_batch must be >= 1");
    }
}

std::string ExperimentConfig::run_dir(StrategyKind s, std::uint64_t seed) const {
    return output_dir + "/runs/" + strategy_name(s) + "/seed_" + std::to_string(seed);
}

ExperimentConfig config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        check_keys(j, "",
                   {"schema_version", "output_dir", "task", "data", "model", "pretrain", "train",
                    "al", "strategies", "repeat_seeds", "probe"});
        cfg.schema_version = get_or(j, "schema_version", cfg.schema_version);
        cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
        if (j.contains("task")) {
            const auto& t = j.at("task");
            check_keys(t, "task",
                       {"family", "seed", "parity_bits", "parity_max_ones", "operand_digits",
                        "modulus", "choices", "candidate_len"});
            cfg.task.family =
                family_from_name(get_or<std::string>(t, "family", family_name(cfg.task.family)));
            cfg.task.seed = get_or<std::uint64_t>(t, "seed", cfg.task.seed);
            cfg.task.parity_bits = get_or(t, "parity_bits", cfg.task.parity_bits);
            cfg.task.parity_max_ones = get_or(t, "parity_max_ones", cfg.task.parity_max_ones);
            cfg.task.operand_digits = get_or(t, "operand_digits", cfg.task.operand_digits);
            cfg.task.modulus = get_or(t, "modulus", cfg.task.modulus);
            cfg.task.choices = get_or(t, "choices", cfg.task.choices);
            cfg.task.candidate_len = get_or(t, "candidate_len", cfg.task.candidate_len);
        }
        if (j.contains("data")) {
            const auto& d = j.at("data");
            check_keys(d, "data", {"pool", "test"});
            cfg.data.pool = get_or(d, "pool", cfg.data.pool);
            cfg.data.test = get_or(d, "test", cfg.data.test);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, "model",
                       {"vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_seq_len",
                        "lora_rank", "lora_alpha", "lora_dropout"});
            cfg.model.vocab_size = get_or(m, "vocab_size", cfg.model.vocab_size);
            cfg.model.d_model = get_or(m, "d_model", cfg.model.d_model);
            cfg.model.n_layers = get_or(m, "n_layers", cfg.model.n_layers);
            cfg.model.n_heads = get_or(m, "n_heads", cfg.model.n_heads);
            cfg.model.d_ff = get_or(m, "d_ff", cfg.model.d_ff);
            cfg.model.max_seq_len = get_or(m, "max_seq_len", cfg.model.max_seq_len);
            cfg.model.lora_rank = get_or(m, "lora_rank", cfg.model.lora_rank);
            cfg.model.lora_alpha = get_or(m, "lora_alpha", cfg.model.lora_alpha);
            cfg.model.lora_dropout = get_or(m, "lora_dropout", cfg.model.lora_dropout);
        }
        if (j.contains("pretrain")) {
            const auto& p = j.at("pretrain");
            check_keys(p, "pretrain", {"corpus_size", "epochs", "batch_size", "lr", "seed"});
            cfg.pretrain.corpus_size = get_or(p, "corpus_size", cfg.pretrain.corpus_size);
            cfg.pretrain.epochs = get_or(p, "epochs", cfg.pretrain.epochs);
            cfg.pretrain.batch_size = get_or(p, "batch_size", cfg.pretrain.batch_size);
            cfg.pretrain.lr = get_or(p, "lr", cfg.pretrain.lr);
            cfg.pretrain.seed = get_or<std::uint64_t>(p, "seed", cfg.pretrain.seed);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            check_keys(t, "train",
                       {"lr", "weight_decay", "paper_sign", "beta1", "beta2", "eps", "epochs",
                        "batch_size", "grad_clip", "adapter_dropout"});
            cfg.train.lr = get_or(t, "lr", cfg.train.lr);
            cfg.train.weight_decay = get_or(t, "weight_decay", cfg.train.weight_decay);
            cfg.train.paper_sign = get_or(t, "paper_sign", cfg.train.paper_sign);
            cfg.train.beta1 = get_or(t, "beta1", cfg.train.beta1);
            cfg.train.beta2 = get_or(t, "beta2", cfg.train.beta2);
            cfg.train.eps = get_or(t, "eps", cfg.train.eps);
            cfg.train.epochs = get_or(t, "epochs", cfg.train.epochs);
            cfg.train.batch_size = get_or(t, "batch_size", cfg.train.batch_size);
            cfg.train.grad_clip = get_or(t, "grad_clip", cfg.train.grad_clip);
            cfg.train.adapter_dropout = get_or(t, "adapter_dropout", cfg.train.adapter_dropout);
        }
        if (j.contains("al")) {
            const auto& a = j.at("al");
            check_keys(a, "al",
                       {"warmup_size", "query_size", "budget", "mc_passes", "eval_every_round",
                        "save_snapshots", "decode", "schedule"});
            cfg.al.warmup_size = get_or(a, "warmup_size", cfg.al.warmup_size);
            cfg.al.query_size = get_or(a, "query_size", cfg.al.query_size);
            cfg.al.budget = get_or(a, "budget", cfg.al.budget);
            cfg.al.mc_passes = get_or(a, "mc_passes", cfg.al.mc_passes);
            cfg.al.eval_every_round = get_or(a, "eval_every_round", cfg.al.eval_every_round);
            cfg.al.save_snapshots = get_or(a, "save_snapshots", cfg.al.save_snapshots);
            if (a.contains("decode")) {
                const auto& d = a.at("decode");
                check_keys(d, "al.decode", {"max_new_tokens"});
                cfg.al.decode.max_new_tokens =
                    get_or(d, "max_new_tokens", cfg.al.decode.max_new_tokens);
            }
            if (a.contains("schedule")) {
                const auto& s = a.at("schedule");
                check_keys(s, "al.schedule", {"kind", "floor", "horizon", "rate"});
                cfg.al.schedule.kind = schedule_kind_from_name(
                    get_or<std::string>(s, "kind", schedule_kind_name(cfg.al.schedule.kind)));
                cfg.al.schedule.floor = get_or(s, "floor", cfg.al.schedule.floor);
                cfg.al.schedule.horizon = get_or(s, "horizon", cfg.al.schedule.horizon);
                cfg.al.schedule.rate = get_or(s, "rate", cfg.al.schedule.rate);
            }
        }
        if (j.contains("strategies")) {
            cfg.strategies.clear();
            for (const auto& s : j.at("strategies")) {
                cfg.strategies.push_back(strategy_from_name(s.get<std::string>()));
            }
        }
        if (j.contains("repeat_seeds")) {
            cfg.repeat_seeds.clear();
            for (const auto& s : j.at("repeat_seeds")) {
                cfg.repeat_seeds.push_back(s.get<std::uint64_t>());
            }
        }
        if (j.contains("probe")) {
            const auto& p = j.at("probe");
            check_keys(p, "probe",
                       {"top_n", "spearman", "overtrain_epochs", "overtrain_examples",
                        "overtrain_batch", "overtrain_seed"});
            cfg.probe.top_n = get_or(p, "top_n", cfg.probe.top_n);
            cfg.probe.spearman = get_or(p, "spearman", cfg.probe.spearman);
            cfg.probe.overtrain_epochs = get_or(p, "overtrain_epochs", cfg.probe.overtrain_epochs);
            cfg.probe.overtrain_examples =
                get_or(p, "overtrain_examples", cfg.probe.overtrain_examples);
            cfg.probe.overtrain_batch = get_or(p, "overtrain_batch", cfg.probe.overtrain_batch);
            cfg.probe.overtrain_seed =
                get_or<std::uint64_t>(p, "overtrain_seed", cfg.probe.overtrain_seed);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.al.train = cfg.train;
    cfg.validate();
    return cfg;
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["schema_version"] = cfg.schema_version;
    j["output_dir"] = cfg.output_dir;
    j["task"] = {{"family", family_name(cfg.task.family)},
                 {"seed", cfg.task.seed},
                 {"parity_bits", cfg.task.parity_bits},
                 {"parity_max_ones", cfg.task.parity_max_ones},
                 {"operand_digits", cfg.task.operand_digits},
                 {"modulus", cfg.task.modulus},
                 {"choices", cfg.task.choices},
                 {"candidate_len", cfg.task.candidate_len}};
    j["data"] = {{"pool", cfg.data.pool}, {"test", cfg.data.test}};
    j["model"] = {{"vocab_size", cfg.model.vocab_size},
                  {"d_model", cfg.model.d_model},
                  {"n_layers", cfg.model.n_layers},
                  {"n_heads", cfg.model.n_heads},
                  {"d_ff", cfg.model.d_ff},
                  {"max_seq_len", cfg.model.max_seq_len},
                  {"lora_rank", cfg.model.lora_rank},
                  {"lora_alpha", cfg.model.lora_alpha},
                  {"lora_dropout", cfg.model.lora_dropout}};
    j["pretrain"] = {{"corpus_size", cfg.pretrain.corpus_size},
                     {"epochs", cfg.pretrain.epochs},
                     {"batch_size", cfg.pretrain.batch_size},
                     {"lr", cfg.pretrain.lr},
                     {"seed", cfg.pretrain.seed}};
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
    j["al"] = {{"warmup_size", cfg.al.warmup_size},
               {"query_size", cfg.al.query_size},
               {"budget", cfg.al.budget},
               {"mc_passes", cfg.al.mc_passes},
               {"eval_every_round", cfg.al.eval_every_round},
               {"save_snapshots", cfg.al.save_snapshots},
               {"decode", {{"max_new_tokens", cfg.al.decode.max_new_tokens}}},
               {"schedule",
                {{"kind", schedule_kind_name(cfg.al.schedule.kind)},
                 {"floor", cfg.al.schedule.floor},
                 {"horizon", cfg.al.schedule.horizon},
                 {"rate", cfg.al.schedule.rate}}}};
    nlohmann::ordered_json strats = nlohmann::ordered_json::array();
    for (StrategyKind s : cfg.strategies) strats.push_back(strategy_name(s));
    j["strategies"] = strats;
    j["repeat_seeds"] = cfg.repeat_seeds;
    j["probe"] = {{"top_n", cfg.probe.top_n},
                  {"spearman", cfg.probe.spearman},
                  {"overtrain_epochs", cfg.probe.overtrain_epochs},
                  {"overtrain_examples", cfg.probe.overtrain_examples},
                  {"overtrain_batch", cfg.probe.overtrain_batch},
                  {"overtrain_seed", cfg.probe.overtrain_seed}};
    return j.dump(2) + "\n";
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

ALSeeds run_seeds(std::uint64_t repeat_seed) {
    return {derive_seed(repeat_seed, 11), derive_seed(repeat_seed, 12),
            derive_seed(repeat_seed, 13)};
}

// ---- subcommands ----------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& cfg, bool force) {
    cfg.validate();
    const fs::path dir = cfg.data_dir();
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) {
            throw std::invalid_argument(dir.string() +
                                        " exists and is not empty; pass --force to regenerate");
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);

    TaskSpec spec = cfg.task;
    spec.count = cfg.total_examples();
    const std::vector<Example> all = generate_examples(spec);
    const auto pool_begin = all.begin();
    const auto test_begin = pool_begin + cfg.data.pool;
    const auto pretrain_begin = test_begin + cfg.data.test;
    const std::vector<Example> pool(pool_begin, test_begin);
    const std::vector<Example> test(test_begin, pretrain_begin);
    const std::vector<Example> pretrain(pretrain_begin, all.end());

    save_jsonl((dir / "pool.jsonl").string(), pool);
    save_jsonl((dir / "test.jsonl").string(), test);
    save_jsonl((dir / "pretrain.jsonl").string(), pretrain);
    std::cout << "task " << family_name(cfg.task.family) << ": wrote pool.jsonl (" << pool.size()
              << "), test.jsonl (" << test.size() << "), pretrain.jsonl (" << pretrain.size()
              << ") to " << dir.string() << "\n";
}

void cmd_pretrain(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path corpus_path = fs::path(cfg.data_dir()) / "pretrain.jsonl";
    if (!fs::exists(corpus_path)) {
        throw std::runtime_error("missing " + corpus_path.string() + "; run gen-data first");
    }
    const std::vector<Example> corpus = load_jsonl(corpus_path.string());
    if (corpus.empty()) throw std::runtime_error(corpus_path.string() + " has no examples");

    TrainConfig tc;
    tc.lr = cfg.pretrain.lr;
    tc.weight_decay = 0.0;
    tc.epochs = cfg.pretrain.epochs;
    tc.batch_size = cfg.pretrain.batch_size;
    tc.adapter_dropout = false;
    tc.seed = derive_seed(cfg.pretrain.seed, 2);

    TrainResult res = pretrain_base(cfg.model, derive_seed(cfg.pretrain.seed, 1), corpus, tc);
    fs::create_directories(fs::path(cfg.output_dir) / "base");
    save_snapshot(cfg.base_snapshot_path(), res.snapshot);
    {
        std::ofstream log(fs::path(cfg.output_dir) / "base" / "pretrain_log.csv");
        if (!log) throw std::runtime_error("cannot write pretrain_log.csv");
        log << "epoch,loss\n";
        for (std::size_t e = 0; e < res.report.epoch_mean_loss.size(); ++e) {
            log << e << "," << g17(res.report.epoch_mean_loss[e]) << "\n";
        }
    }
    std::cout << "pretrained base on " << corpus.size() << " examples, final loss "
              << fmt4(res.report.epoch_mean_loss.back()) << ", saved "
              << cfg.base_snapshot_path() << "\n";
}

namespace {

std::vector<Example> load_required_jsonl(const fs::path& path, const char* hint) {
    if (!fs::exists(path)) {
        throw std::runtime_error("missing " + path.string() + "; " + hint);
    }
    return load_jsonl(path.string());
}

ModelSnapshot load_base(const ExperimentConfig& cfg) {
    if (!fs::exists(cfg.base_snapshot_path())) {
        throw std::runtime_error("missing " + cfg.base_snapshot_path() + "; run pretrain first");
    }
    ModelSnapshot base = load_snapshot(cfg.base_snapshot_path());
    if (!(base.config == cfg.model)) {
        throw std::invalid_argument(
            "base snapshot was built with a different model configuration");
    }
    return base;
}

}  // namespace

void cmd_run(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<Example> pool =
        load_required_jsonl(fs::path(cfg.data_dir()) / "pool.jsonl", "run gen-data first");
    const std::vector<Example> test =
        load_required_jsonl(fs::path(cfg.data_dir()) / "test.jsonl", "run gen-data first");
    const ModelSnapshot base = load_base(cfg);

    ALRunConfig al = cfg.al;
    al.train = cfg.train;
    fs::create_directories(fs::path(cfg.output_dir) / "cache");

    for (StrategyKind kind : cfg.strategies) {
        for (std::uint64_t rs : cfg.repeat_seeds) {
            try {
                const Strategy strat{kind};
                const std::string dir = cfg.run_dir(kind, rs);
                if (fs::exists(dir)) fs::remove_all(dir);
                std::string cache;
                if (strat.is_dynamic()) {
                    cache = cfg.output_dir + "/cache/base_scores_" +
                            score_kind_name(strat.score_kind()) + ".csv";
                }
                ALRunResult res =
                    run_active_loop(pool, test, base, strat, run_seeds(rs), al, dir, cache);
                std::cout << strategy_name(kind) << " seed " << rs << " auc " << fmt4(res.auc)
                          << " final_acc " << fmt4(res.curve.back().accuracy) << "\n";
            } catch (const std::invalid_argument& e) {
                throw std::invalid_argument("strategy " + std::string(strategy_name(kind)) +
                                            " seed " + std::to_string(rs) + ": " + e.what());
            } catch (const std::logic_error& e) {
                throw std::logic_error("strategy " + std::string(strategy_name(kind)) + " seed " +
                                       std::to_string(rs) + ": " + e.what());
            } catch (const std::exception& e) {
                throw std::runtime_error("strategy " + std::string(strategy_name(kind)) +
                                         " seed " + std::to_string(rs) + ": " + e.what());
            }
        }
    }
}

void cmd_report(const ExperimentConfig& cfg, const std::string& baseline) {
    cfg.validate();
    const StrategyKind baseline_kind = strategy_from_name(baseline);

    struct StrategyRow {
        StrategyKind kind;
        std::vector<std::uint64_t> seeds;
        std::vector<double> aucs;
        double mean_auc = 0.0;
    };
    std::vector<StrategyRow> rows;
    std::vector<std::tuple<std::string, std::uint64_t, int, double>> curve_rows;

    for (StrategyKind kind : cfg.strategies) {
        StrategyRow row{kind, {}, {}, 0.0};
        for (std::uint64_t rs : cfg.repeat_seeds) {
            const fs::path curve_path = fs::path(cfg.run_dir(kind, rs)) / "curve.csv";
            if (!fs::exists(curve_path)) continue;
            const std::vector<CurvePoint> curve = read_curve_csv(curve_path.string());
            row.seeds.push_back(rs);
            row.aucs.push_back(auc_normalized(curve));
            for (const auto& p : curve) {
                curve_rows.emplace_back(strategy_name(kind), rs, p.labeled, p.accuracy);
            }
        }
        if (!row.seeds.empty()) {
            double sum = 0.0;
            for (double a : row.aucs) sum += a;
            row.mean_auc = sum / static_cast<double>(row.aucs.size());
            rows.push_back(std::move(row));
        }
    }

    const auto baseline_row =
        std::find_if(rows.begin(), rows.end(),
                     [&](const StrategyRow& r) { return r.kind == baseline_kind; });
    if (baseline_row == rows.end()) {
        throw std::runtime_error("no finished runs for baseline strategy '" + baseline +
                                 "' under " + cfg.output_dir + "/runs");
    }
    const double base_auc = baseline_row->mean_auc;

    fs::create_directories(cfg.report_dir());
    {
        std::ofstream out(fs::path(cfg.report_dir()) / "report.csv");
        if (!out) throw std::runtime_error("cannot write report.csv");
        out << "strategy,n_runs,auc,auc_x100,ripl,ripl_x100\n";
        for (const auto& r : rows) {
            const double rp = ripl(r.mean_auc, base_auc);
            out << strategy_name(r.kind) << "," << r.seeds.size() << "," << g17(r.mean_auc) << ","
                << fmt2(100.0 * r.mean_auc) << "," << g17(rp) << "," << fmt2(100.0 * rp) << "\n";
        }
    }
    {
        std::ofstream out(fs::path(cfg.report_dir()) / "curves.csv");
        if (!out) throw std::runtime_error("cannot write curves.csv");
        out << "strategy,seed,labeled,accuracy\n";
        for (const auto& [name, seed, labeled, acc] : curve_rows) {
            out << name << "," << seed << "," << labeled << "," << g17(acc) << "\n";
        }
    }

    std::cout << "strategy      runs  auc     ripl_vs_" << baseline << "\n";
    for (const auto& r : rows) {
        const double rp = ripl(r.mean_auc, base_auc);
        char line[128];
        std::snprintf(line, sizeof(line), "%-12s %5zu  %6.2f  %+6.2f\n", strategy_name(r.kind),
                      r.seeds.size(), 100.0 * r.mean_auc, 100.0 * rp);
        std::cout << line;
    }
    std::cout << "wrote " << cfg.report_dir() << "/report.csv and curves.csv\n";
}

namespace {

void write_confidence_outputs(const fs::path& dir, const std::string& tag,
                              const ConfidenceProbeResult& res) {
    {
        std::ofstream out(dir / ("confidence_" + tag + "_hist.csv"));
        if (!out) throw std::runtime_error("cannot write confidence histogram");
        out << "bin_low,bin_high,count\n";
        for (std::size_t b = 0; b < res.bin_counts.size(); ++b) {
            const double lo = 0.5 + 0.025 * static_cast<double>(b);
            out << g17(lo) << "," << g17(lo + 0.025) << "," << res.bin_counts[b] << "\n";
        }
    }
    {
        std::ofstream out(dir / ("confidence_" + tag + "_values.csv"));
        if (!out) throw std::runtime_error("cannot write confidence values");
        out << "confidence\n";
        for (double v : res.wrong_confidences) out << g17(v) << "\n";
    }
}

void probe_confidence_density(const ExperimentConfig& cfg) {
    if (cfg.task.family != TaskFamily::binary_parity) {
        throw std::invalid_argument(
            "confidence_density probe needs a true/false task (binary_parity)");
    }
    const ModelSnapshot base = load_base(cfg);
    const std::vector<Example> test =
        load_required_jsonl(fs::path(cfg.data_dir()) / "test.jsonl", "run gen-data first");
    const std::vector<Example> pool =
        load_required_jsonl(fs::path(cfg.data_dir()) / "pool.jsonl", "run gen-data first");

    // Deliberately overfit a small labeled subset to expose overconfidence.
    // Regularization is switched off on purpose: the probe contrasts plain
    // unregularized fine-tuning against the frozen base; the mainline trainer
    // keeps decay + dropout exactly to avoid this regime.
    std::vector<Example> subset = pool;
    Rng rng(derive_seed(cfg.probe.overtrain_seed, 0x0B5E));
    rng.shuffle(subset);
    subset.resize(static_cast<std::size_t>(cfg.probe.overtrain_examples));
    TrainConfig tc = cfg.train;
    tc.epochs = cfg.probe.overtrain_epochs;
    tc.batch_size = cfg.probe.overtrain_batch;
    tc.weight_decay = 0.0;
    tc.adapter_dropout = false;
    tc.seed = derive_seed(cfg.probe.overtrain_seed, 1);
    TrainResult fit = warmup(base, derive_seed(cfg.probe.overtrain_seed, 2), subset, tc);

    const ConfidenceProbeResult base_res = confidence_probe(base, test);
    const ConfidenceProbeResult over_res = confidence_probe(fit.snapshot, test);

    fs::create_directories(cfg.probe_dir());
    write_confidence_outputs(cfg.probe_dir(), "base", base_res);
    write_confidence_outputs(cfg.probe_dir(), "overtrained", over_res);
    {
        std::ofstream out(fs::path(cfg.probe_dir()) / "confidence_summary.csv");
        if (!out) throw std::runtime_error("cannot write confidence_summary.csv");
        out << "snapshot,total,wrong,mean_confidence\n";
        out << "base," << base_res.total << "," << base_res.wrong_count << ","
            << g17(base_res.mean_confidence) << "\n";
        out << "overtrained," << over_res.total << "," << over_res.wrong_count << ","
            << g17(over_res.mean_confidence) << "\n";
    }
    std::cout << "base:        wrong " << base_res.wrong_count << "/" << base_res.total
              << ", mean confidence " << fmt4(base_res.mean_confidence) << "\n";
    std::cout << "overtrained: wrong " << over_res.wrong_count << "/" << over_res.total
              << ", mean confidence " << fmt4(over_res.mean_confidence) << "\n";
    std::cout << "wrote confidence probe CSVs to " << cfg.probe_dir() << "\n";
}

void probe_entropy_correlation(const ExperimentConfig& cfg, const std::string& run_dir) {
    if (run_dir.empty()) {
        throw std::invalid_argument("entropy_correlation probe needs --run-dir");
    }
    const fs::path run(run_dir);
    const fs::path cfg_path = run / "config.json";
    if (!fs::exists(cfg_path)) {
        throw std::runtime_error("missing " + cfg_path.string() + "; not a finished run?");
    }
    nlohmann::json rj;
    {
        std::ifstream in(cfg_path);
        try {
            in >> rj;
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(cfg_path.string() + ": " + e.what());
        }
    }
    const std::string run_strategy = rj.at("strategy").get<std::string>();
    if (run_strategy != "me") {
        throw std::invalid_argument(
            "entropy_correlation probe expects a plain max-entropy run (strategy 'me'), got '" +
            run_strategy + "'");
    }
    const int n_rounds = rj.at("rounds").get<int>();
    if (n_rounds < 1) throw std::invalid_argument("run has no query rounds to correlate");
    DecodeParams decode;
    decode.max_new_tokens = rj.at("decode").at("max_new_tokens").get<int>();

    std::vector<std::map<int64_t, double>> per_round(static_cast<std::size_t>(n_rounds));
    for (int t = 0; t < n_rounds; ++t) {
        const fs::path p = run / "uncertainty" / ("round_" + std::to_string(t) + ".csv");
        for (const auto& rec : read_uncertainty_csv(p.string())) {
            per_round[static_cast<std::size_t>(t)][rec.id] = rec.score;
        }
    }
    std::vector<int64_t> ids;
    for (const auto& [id, s] : per_round.back()) ids.push_back(id);

    const ModelSnapshot base = load_base(cfg);
    const std::vector<Example> pool =
        load_required_jsonl(fs::path(cfg.data_dir()) / "pool.jsonl", "run gen-data first");
    const Pool lookup(pool);

    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n_rounds) + 1,
                                          std::vector<double>(ids.size(), 0.0));
    parallel_for(static_cast<int>(ids.size()), worker_count_from_env(), [&](int i) {
        const Example& ex = lookup.example(ids[static_cast<std::size_t>(i)]);
        rows[0][static_cast<std::size_t>(i)] =
            score_example(base, ex, decode, ScoreKind::max_entropy);
    });
    for (int t = 0; t < n_rounds; ++t) {
        const auto& m = per_round[static_cast<std::size_t>(t)];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto it = m.find(ids[i]);
            if (it == m.end()) {
                throw std::runtime_error("round " + std::to_string(t) + " scores are missing id " +
                                         std::to_string(ids[i]));
            }
            rows[static_cast<std::size_t>(t) + 1][i] = it->second;
        }
    }

    EntropyCorrelationResult res =
        entropy_correlation(rows, ids, cfg.probe.top_n, cfg.probe.spearman);
    if (res.clamped) {
        std::cout << "note: top_n clamped to " << res.used_n << " surviving examples\n";
    }

    std::vector<std::string> labels{"base"};
    for (int t = 0; t < n_rounds; ++t) labels.push_back("round_" + std::to_string(t));

    fs::create_directories(cfg.probe_dir());
    {
        std::ofstream out(fs::path(cfg.probe_dir()) / "entropy_matrix.csv");
        if (!out) throw std::runtime_error("cannot write entropy_matrix.csv");
        out << "row";
        for (const auto& l : labels) out << "," << l;
        out << "\n";
        for (std::size_t i = 0; i < res.matrix.size(); ++i) {
            out << labels[i];
            for (double v : res.matrix[i]) out << "," << g17(v);
            out << "\n";
        }
    }
    // column index per selected id for the scatter extracts
    std::map<int64_t, std::size_t> col_of;
    for (std::size_t c = 0; c < ids.size(); ++c) col_of[ids[c]] = c;
    const auto write_scatter = [&](std::size_t a, std::size_t b) {
        const fs::path p = fs::path(cfg.probe_dir()) /
                           ("entropy_scatter_" + std::to_string(a) + "_" + std::to_string(b) +
                            ".csv");
        std::ofstream out(p);
        if (!out) throw std::runtime_error("cannot write " + p.string());
        out << "id," << labels[a] << "," << labels[b] << "\n";
        for (int64_t id : res.ids) {
            const std::size_t c = col_of.at(id);
            out << id << "," << g17(rows[a][c]) << "," << g17(rows[b][c]) << "\n";
        }
    };
    write_scatter(0, 1);
    if (rows.size() > 6) write_scatter(5, 6);
    std::cout << "wrote entropy correlation matrix (" << res.matrix.size() << "x"
              << res.matrix.size() << ") over top " << res.used_n << " examples to "
              << cfg.probe_dir() << "\n";
}

}  // namespace

void cmd_probe(const ExperimentConfig& cfg, const std::string& kind, const std::string& run_dir) {
    cfg.validate();
    if (kind == "confidence_density") {
        probe_confidence_density(cfg);
    } else if (kind == "entropy_correlation") {
        probe_entropy_correlation(cfg, run_dir);
    } else {
        throw std::invalid_argument("unknown probe kind '" + kind +
                                    "' (confidence_density or entropy_correlation)");
    }
}

}  // namespace loralab
