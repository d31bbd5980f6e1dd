// A simulated monitor: geometry, circuit, firmware trigger settings, noise and
// the unit-to-unit individuality drawn once from the device seed.
#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "pestsim/circuit.hpp"
#include "pestsim/firmware.hpp"
#include "pestsim/optics.hpp"

namespace pestsim {

struct NoiseParams {
    double white_sd = 0.002;          ///< electrical noise at the ADC input [V]
    double wander_amplitude = 0.01;   ///< slow baseline drift amplitude [V]
    double wander_period = 20.0;      ///< [s]
};

struct IndividualityParams {
    double gain_sigma = 0.15;  ///< log-sd of the per-channel coupling gain
    double offset_sd = 0.05;   ///< per-channel baseline offset sd [V]
};

struct DeviceConfig {
    std::string id = "dev0";
    std::uint64_t seed = 1;
    optics::BeamGeometry geometry;
    circuit::CircuitParams circuit;
    firmware::TriggerConfig trigger;
    NoiseParams noise;
    IndividualityParams individuality;

    void validate() const;
};

/// Per-channel coupling gain and baseline offset of one manufactured unit.
struct DeviceTraits {
    std::array<double, 2> gain{1.0, 1.0};
    std::array<double, 2> offset{0.0, 0.0};
};

DeviceTraits device_traits(const DeviceConfig& device);

}  // namespace pestsim
