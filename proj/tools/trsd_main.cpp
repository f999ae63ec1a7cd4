// Command-line front end for the truncated-reasoning self-distillation
// testbed: data generation, teacher bootstrap, distillation, budget-swept
// evaluation, and trace dumps.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "trsd/cli_commands.hpp"
#include "trsd/errors.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out_dir;
    long long seed = -1;
    int workers = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config, "JSON config file");
    cmd->add_option("-o,--out-dir", args.out_dir, "output directory (overrides config)");
    cmd->add_option("-s,--seed", args.seed, "root seed (overrides config)");
    cmd->add_option("-w,--workers", args.workers, "worker threads (overrides config)");
}

trsd::RunConfig resolve(const CommonArgs& args) {
    trsd::RunConfig cfg = trsd::load_run_config(args.config);
    if (!args.out_dir.empty()) {
        cfg.out_dir = args.out_dir;
    }
    if (args.seed >= 0) {
        cfg.seed = static_cast<uint64_t>(args.seed);
        cfg.sft.seed = trsd::stream_key(cfg.seed, "sft");
        cfg.distill.seed = trsd::stream_key(cfg.seed, "distill");
    }
    if (args.workers > 0) {
        cfg.workers = args.workers;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale truncated-reasoning self-distillation testbed"};
    app.require_subcommand(1);

    CommonArgs args;
    bool force = false, resume = false;
    std::string filter;
    int dump_count = 10;

    CLI::App* gen = app.add_subcommand("gen-data", "generate task datasets");
    add_common(gen, args);
    CLI::App* sft = app.add_subcommand("train-sft", "bootstrap the reasoning teacher");
    add_common(sft, args);
    sft->add_flag("--force", force, "overwrite an existing teacher checkpoint");
    CLI::App* dist = app.add_subcommand("distill", "truncated-reasoning self-distillation");
    add_common(dist, args);
    dist->add_flag("--resume", resume, "continue from the latest student checkpoint");
    dist->add_flag("--force", force, "overwrite existing student checkpoints");
    CLI::App* ev = app.add_subcommand("evaluate", "budget sweep + checkpoint selection");
    add_common(ev, args);
    CLI::App* dump = app.add_subcommand("dump-traces", "side-by-side baseline/TRSD traces");
    add_common(dump, args);
    dump->add_option("--filter", filter, "both-correct or both-wrong");
    dump->add_option("--count", dump_count, "number of prompts to dump");
    CLI::App* rep = app.add_subcommand("report", "rebuild comparison tables and plots");
    add_common(rep, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const trsd::RunConfig cfg = resolve(args);
        if (gen->parsed()) {
            trsd::cmd_gen_data(cfg);
        } else if (sft->parsed()) {
            trsd::cmd_train_sft(cfg, force);
        } else if (dist->parsed()) {
            trsd::cmd_distill(cfg, resume, force);
        } else if (ev->parsed()) {
            trsd::cmd_evaluate(cfg);
        } else if (dump->parsed()) {
            trsd::cmd_dump_traces(cfg, filter, dump_count);
        } else if (rep->parsed()) {
            trsd::cmd_report(cfg);
        }
    } catch (const trsd::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
