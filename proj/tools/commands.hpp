// Subcommand implementations for the pestsim command line.
#pragma once

#include <optional>
#include <string>

namespace pestsim::cli {

struct SimulateArgs {
    std::string config;
    std::string out;
};

struct CurateArgs {
    std::string in;
    std::string out;
    std::string config;  ///< empty: use <in>/config.resolved
    bool oversample_first = false;
};

struct BenchArgs {
    std::string config;
    std::string out;  ///< overrides output_dir from the config
};

struct TrainArgs {
    std::string task;
    std::string data;
    std::string out;
    std::string config;  ///< empty: use <data>/config.resolved
    std::string ablate;
};

struct EvalArgs {
    std::string task;
    std::string data;
    std::string model;  ///< trained model directory
    std::string out;
    std::string config;
    std::string ablate;  ///< train this knockout variant instead of loading a model
    bool per_device = false;
};

struct ReportArgs {
    std::string in;
    std::string out;
};

int simulate(const SimulateArgs& a);
int curate(const CurateArgs& a);
int bench_layout(const BenchArgs& a);
int train(const TrainArgs& a);
int eval(const EvalArgs& a);
int report(const ReportArgs& a);

}  // namespace pestsim::cli
