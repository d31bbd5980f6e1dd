// Glue between curated datasets and the learners, plus the layout/circuit bench.
#pragma once

#include <string>
#include <vector>

#include "pestsim/circuit.hpp"
#include "pestsim/cmmformer.hpp"
#include "pestsim/config.hpp"
#include "pestsim/curation.hpp"
#include "pestsim/dropsim.hpp"
#include "pestsim/metrics.hpp"

namespace pestsim::pipeline {

struct CountingData {
    Matrix x;
    std::vector<int> y;
    std::vector<std::string> ids;
    std::vector<std::string> devices;
};

/// Feature rows of the counting entries in `split` (duplicates included).
CountingData counting_data(const curation::CuratedDataset& ds, curation::Split split, std::size_t bins = 16);

std::vector<cmm::LabeledWave> species_data(const curation::CuratedDataset& ds, curation::Split split);

/// Reference waveforms per device, capped at `capacity` per pool.
cmm::Pools reference_pools(const curation::CuratedDataset& ds, std::size_t capacity);

/// Overall and per-device confusion matrices.
struct Evaluation {
    metrics::ConfusionMatrix overall;
    std::map<std::string, metrics::ConfusionMatrix> per_device;
};

Evaluation evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                    const std::vector<std::string>& devices, const std::vector<std::string>& class_names);

/// Peak excursion of each channel over the pre-event baseline [mV].
std::array<double, 2> peak_excursion_mv(const dropsim::SynthResult& stream, const circuit::CircuitParams& p);

struct BenchRow {
    std::string combination;
    std::string device;  ///< "all" for the pooled row
    double mean_eta = 0.0;  ///< [mV]
    double sd_eta = 0.0;
    std::size_t drops = 0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    circuit::TuneResult tailored;
};

inline constexpr std::array<const char*, 3> kBenchCombinations = {"sym+conv", "asym+conv", "asym+tailored"};

BenchResult bench_layout(const config::RunConfig& cfg);
std::string bench_csv(const BenchResult& result);

}  // namespace pestsim::pipeline
