#include "pestsim/device.hpp"

#include <random>

#include "pestsim/errors.hpp"
#include "pestsim/rng.hpp"

namespace pestsim {

void DeviceConfig::validate() const {
    if (id.empty()) throw ContractError("device id must be non-empty");
    geometry.validate();
    circuit.validate();
    trigger.validate();
    if (noise.white_sd < 0.0 || noise.wander_amplitude < 0.0 || !(noise.wander_period > 0.0))
        throw ContractError("noise parameters out of range");
    if (individuality.gain_sigma < 0.0 || individuality.offset_sd < 0.0)
        throw ContractError("individuality spreads must be non-negative");
}

DeviceTraits device_traits(const DeviceConfig& device) {
    auto rng = make_rng(device.seed, {0xD1CE});
    std::normal_distribution<double> unit(0.0, 1.0);
    DeviceTraits traits;
    for (int c = 0; c < 2; ++c) {
        traits.gain[c] = std::exp(device.individuality.gain_sigma * unit(rng));
        traits.offset[c] = device.individuality.offset_sd * unit(rng);
    }
    return traits;
}

}  // namespace pestsim
