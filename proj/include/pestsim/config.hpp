// Flat "key = value" run configuration covering every module, with strict
// key checking and a canonical resolved form.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pestsim/cmmformer.hpp"
#include "pestsim/curation.hpp"
#include "pestsim/device.hpp"
#include "pestsim/dropsim.hpp"
#include "pestsim/features.hpp"

namespace pestsim::config {

struct BenchConfig {
    std::size_t devices = 3;
    std::size_t drops = 10;
    std::string species = "Cp";
    double conventional_r_r = 10000.0;
    double conventional_r_e = 470.0;
    double max_response_time = 100e-6;  ///< [s]
    double linearity_margin = 1.5;      ///< [V]
    double r_r_min = 1000.0, r_r_max = 100000.0;
    double r_e_min = 22.0, r_e_max = 1000.0;
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::string output_dir;
    std::size_t n_devices = 2;
    std::size_t reference_drops = 100;
    DeviceConfig device;  ///< template; id and seed are set per device
    dropsim::CampaignConfig campaign;
    curation::CurationConfig curation;
    cmm::ModelConfig model;
    cmm::TrainConfig train;
    features::CountingTrainConfig counting;
    BenchConfig bench;
    std::uint64_t eval_seed = 5;

    /// Devices "dev0", "dev1", ... with seeds derived from `seed`.
    std::vector<DeviceConfig> devices() const;
    /// Campaign settings with the device list filled in.
    dropsim::CampaignConfig campaign_config() const;
    void validate() const;
};

/// Parses config text; unknown keys, duplicates and bad values throw ConfigError.
RunConfig parse(const std::string& text);
RunConfig load(const std::filesystem::path& path);
/// Applies PESTSIM_SEED when set.
void apply_environment(RunConfig& cfg);

/// Every key in sorted order, one "key = value" per line. output_dir is left
/// out so a rerun elsewhere reproduces the file byte for byte.
std::string resolved(const RunConfig& cfg);

std::vector<std::string> known_keys();

}  // namespace pestsim::config
