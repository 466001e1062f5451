#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "loralab/active_loop.hpp"
#include "loralab/experiment.hpp"

namespace {

loralab::ExperimentConfig load_config(const std::string& path,
                                      const std::string& output_override) {
    loralab::ExperimentConfig cfg;
    if (!path.empty()) cfg = loralab::load_config_file(path);
    if (!output_override.empty()) cfg.output_dir = output_override;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"active-learning experiments for a small LoRA language model"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string output_override;
    app.add_option("--config", config_path,
                   "experiment config JSON; built-in defaults apply when omitted")
        ->check(CLI::ExistingFile);
    app.add_option("--output", output_override, "override output_dir from the config");

    bool force = false;
    auto* gen = app.add_subcommand("gen-data", "generate pool/test/pretrain JSONL datasets");
    gen->add_flag("--force", force, "replace an existing non-empty data directory");

    auto* pre = app.add_subcommand("pretrain", "train and freeze the base model");

    std::vector<std::uint64_t> seeds;
    std::vector<std::string> strategy_names;
    auto* run = app.add_subcommand("run", "run the active-learning loop per strategy and seed");
    run->add_option("--seeds", seeds, "override repeat seeds (comma separated)")->delimiter(',');
    run->add_option("--strategies", strategy_names, "override strategies (comma separated)")
        ->delimiter(',');

    std::string baseline = "random";
    auto* rep = app.add_subcommand("report", "aggregate finished runs into report CSVs");
    rep->add_option("--seeds", seeds, "restrict to these repeat seeds (comma separated)")
        ->delimiter(',');
    rep->add_option("--strategies", strategy_names,
                    "restrict to these strategies (comma separated)")
        ->delimiter(',');
    rep->add_option("--baseline", baseline, "strategy whose mean AUC anchors the lift column")
        ->capture_default_str();

    std::string probe_kind;
    std::string probe_run_dir;
    auto* prb = app.add_subcommand("probe", "run a diagnostic probe");
    prb->add_option("kind", probe_kind, "confidence_density or entropy_correlation")->required();
    prb->add_option("--run-dir", probe_run_dir,
                    "finished plain max-entropy run directory (entropy_correlation)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        loralab::ExperimentConfig cfg = load_config(config_path, output_override);
        if (!seeds.empty()) cfg.repeat_seeds = seeds;
        if (!strategy_names.empty()) {
            cfg.strategies.clear();
            for (const auto& name : strategy_names) {
                cfg.strategies.push_back(loralab::strategy_from_name(name));
            }
        }
        if (gen->parsed()) {
            loralab::cmd_gen_data(cfg, force);
        } else if (pre->parsed()) {
            loralab::cmd_pretrain(cfg);
        } else if (run->parsed()) {
            loralab::cmd_run(cfg);
        } else if (rep->parsed()) {
            loralab::cmd_report(cfg, baseline);
        } else if (prb->parsed()) {
            loralab::cmd_probe(cfg, probe_kind, probe_run_dir);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::logic_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
