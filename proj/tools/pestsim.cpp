#include <cstdio>
#include <exception>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "pestsim/errors.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kInfeasible = 4;

}  // namespace

int main(int argc, char** argv) {
    using namespace pestsim;
    CLI::App app{"pestsim: simulated grain-probe pest monitor, dataset curation and classifiers"};
    app.require_subcommand(1);

    cli::SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Run a seeded collection campaign plus reference drops");
    c_sim->add_option("--config", sim.config, "Run configuration file")->required();
    c_sim->add_option("--out", sim.out, "Output directory")->required();

    cli::CurateArgs cur;
    auto* c_cur = app.add_subcommand("curate", "Curate simulated records into labelled datasets");
    c_cur->add_option("--in", cur.in, "Directory written by simulate")->required();
    c_cur->add_option("--out", cur.out, "Output directory")->required();
    c_cur->add_option("--config", cur.config, "Run configuration (default: <in>/config.resolved)");
    c_cur->add_flag("--oversample-first", cur.oversample_first, "Oversample before splitting (duplicates may cross splits)");

    cli::BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench-layout", "Compare diode layouts and drive circuits on bench drops");
    c_bench->add_option("--config", bench.config, "Run configuration file")->required();
    c_bench->add_option("--out", bench.out, "Output directory (overrides output_dir)");

    const std::vector<std::string> tasks = {"counting", "species"};
    const std::vector<std::string> ablations = {"cmm", "pos_enc", "attention", "aggregation"};

    cli::TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train the counting network or the species classifier");
    c_train->add_option("--task", tr.task, "counting or species")->required()->check(CLI::IsMember(tasks));
    c_train->add_option("--data", tr.data, "Directory written by curate")->required();
    c_train->add_option("--out", tr.out, "Model output directory")->required();
    c_train->add_option("--config", tr.config, "Run configuration (default: <data>/config.resolved)");
    c_train->add_option("--ablate", tr.ablate, "Component to knock out")->check(CLI::IsMember(ablations));

    cli::EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Evaluate a model on the test split");
    c_eval->add_option("--task", ev.task, "counting or species")->required()->check(CLI::IsMember(tasks));
    c_eval->add_option("--data", ev.data, "Directory written by curate")->required();
    c_eval->add_option("--model", ev.model, "Directory written by train");
    c_eval->add_option("--out", ev.out, "Directory for metrics and confusion matrices");
    c_eval->add_option("--config", ev.config, "Run configuration (default: <data>/config.resolved)");
    c_eval->add_option("--ablate", ev.ablate, "Train and evaluate this knockout variant")
        ->check(CLI::IsMember(ablations));
    c_eval->add_flag("--per-device", ev.per_device, "Also report metrics per device");

    cli::ReportArgs rep;
    auto* c_rep = app.add_subcommand("report", "Aggregate run directories into plot-ready CSV files");
    c_rep->add_option("--in", rep.in, "Run directory (searched recursively)")->required();
    c_rep->add_option("--out", rep.out, "CSV output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    try {
        if (c_sim->parsed()) return cli::simulate(sim);
        if (c_cur->parsed()) return cli::curate(cur);
        if (c_bench->parsed()) return cli::bench_layout(bench);
        if (c_train->parsed()) return cli::train(tr);
        if (c_eval->parsed()) return cli::eval(ev);
        if (c_rep->parsed()) return cli::report(rep);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error [{}]: {}\n", e.key(), e.what());
        return kConfigError;
    } catch (const InfeasibleError& e) {
        fmt::print(stderr, "infeasible [{}]: {}\n", e.constraint(), e.what());
        return kInfeasible;
    } catch (const DataError& e) {
        fmt::print(stderr, "data error: {}\n", e.what());
        return kDataError;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kDataError;
    }
    return 0;
}
