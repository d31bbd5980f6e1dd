// Drop scenarios, per-sample signal synthesis through optics + circuit, and
// seeded collection campaigns fed through the acquisition firmware.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pestsim/device.hpp"
#include "pestsim/record.hpp"

namespace pestsim::dropsim {

enum class Species { Sz, Rd, Tc, Os, Cp, BlackSphere, Debris };
inline constexpr std::array<Species, 5> kPestSpecies = {Species::Sz, Species::Rd, Species::Tc, Species::Os,
                                                        Species::Cp};

std::string to_string(Species s);
Species species_from_string(const std::string& name);
/// Index in kPestSpecies, or -1 for non-pest profiles.
int pest_index(Species s);

struct SpeciesProfile {
    Species name = Species::Sz;
    double body_length = 3.6;      ///< [mm]; also the vertical extent of the drop
    double occluder_ratio = 0.35;  ///< effective radius = body_length * ratio / 2
    double fall_speed_mean = 1.0;  ///< [m/s]
    double fall_speed_sd = 0.2;    ///< [m/s]
    double tumble_amplitude = 0.05;

    double radius() const { return body_length * occluder_ratio / 2.0; }
};

SpeciesProfile default_profile(Species s);

enum class Scenario { NormalSingle, SpanTwoCycles, DebrisNoPest, ConsecutiveDouble, FluctuationNoPest, Reference };
inline constexpr std::array<Scenario, 5> kCampaignScenarios = {
    Scenario::NormalSingle, Scenario::SpanTwoCycles, Scenario::DebrisNoPest, Scenario::ConsecutiveDouble,
    Scenario::FluctuationNoPest};

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);
/// Pests physically present in a scenario (0, 1 or 2).
int pest_count(Scenario s);

struct DropEvent {
    SpeciesProfile profile;
    double entry_t = 0.0;  ///< [mm]
    double entry_r = 0.0;  ///< [mm]
    double speed = 1.0;    ///< [m/s]
    Scenario scenario = Scenario::NormalSingle;
    std::uint64_t seed = 0;
    /// Species being collected when the event happened (label source for
    /// pest-free scenarios). Defaults to the profile's species.
    std::string batch_species;
};

/// Number of samples per channel in one synthesized event stream.
inline constexpr std::size_t kStreamSamples = 448;

struct SynthResult {
    std::vector<Count> ch1;
    std::vector<Count> ch2;
    GroundTruth truth;
    std::vector<double> pulse_centres;  ///< sample index of each occluder crossing
};

/// Baseline process alone (drift + white noise) with the same noise draws
/// synth_event would use for `seed`.
SynthResult baseline_stream(const DeviceConfig& device, std::uint64_t seed, std::size_t samples = kStreamSamples);

SynthResult synth_event(const DropEvent& event, const DeviceConfig& device);

/// Scenario mix order: NormalSingle, SpanTwoCycles, DebrisNoPest,
/// ConsecutiveDouble, FluctuationNoPest.
std::array<double, 5> default_species_mix();
std::array<double, 5> default_scenario_mix();

struct CampaignConfig {
    std::size_t n_events = 100;
    std::array<double, 5> species_mix = default_species_mix();
    std::array<double, 5> scenario_mix = default_scenario_mix();
    std::vector<DeviceConfig> devices = {DeviceConfig{}};
    std::uint64_t seed = 42;

    void validate() const;
};

struct TruthRow {
    std::uint64_t event_id = 0;
    std::string device_id;
    std::string scenario;
    std::string species;
    int count = 0;
    std::vector<std::string> record_ids;
};

struct CampaignResult {
    std::vector<WaveformRecord> records;
    std::vector<TruthRow> truth;
};

/// Draws the event for index `i` of a campaign (device assignment is round-robin).
DropEvent draw_event(const CampaignConfig& cfg, std::uint64_t i);

CampaignResult simulate_campaign(const CampaignConfig& cfg);

/// `n` black-sphere centre drops on one device, tagged as references.
std::vector<WaveformRecord> build_reference_drops(const DeviceConfig& device, std::size_t n = 100);

std::string truth_csv(const std::vector<TruthRow>& rows);
std::vector<TruthRow> parse_truth_csv(const std::string& text);

}  // namespace pestsim::dropsim
