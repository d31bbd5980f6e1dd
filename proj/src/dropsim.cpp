#include "pestsim/dropsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "pestsim/errors.hpp"
#include "pestsim/firmware.hpp"
#include "pestsim/rng.hpp"

namespace pestsim::dropsim {

std::string to_string(Species s) {
    switch (s) {
        case Species::Sz: return "Sz";
        case Species::Rd: return "Rd";
        case Species::Tc: return "Tc";
        case Species::Os: return "Os";
        case Species::Cp: return "Cp";
        case Species::BlackSphere: return "BlackSphere";
        case Species::Debris: return "Debris";
    }
    return "?";
}

Species species_from_string(const std::string& name) {
    for (auto s : {Species::Sz, Species::Rd, Species::Tc, Species::Os, Species::Cp, Species::BlackSphere,
                   Species::Debris})
        if (to_string(s) == name) return s;
    throw ContractError("unknown species '" + name + "'");
}

int pest_index(Species s) {
    for (std::size_t k = 0; k < kPestSpecies.size(); ++k)
        if (kPestSpecies[k] == s) return static_cast<int>(k);
    return -1;
}

SpeciesProfile default_profile(Species s) {
    switch (s) {
        case Species::Sz: return {s, 3.6, 0.35, 1.0, 0.2, 0.05};
        case Species::Rd: return {s, 3.0, 0.35, 1.0, 0.2, 0.05};
        case Species::Tc: return {s, 3.5, 0.35, 1.0, 0.2, 0.05};
        case Species::Os: return {s, 2.7, 0.35, 1.0, 0.2, 0.05};
        case Species::Cp: return {s, 1.6, 0.35, 1.0, 0.2, 0.05};
        // Reference sphere: 3.5 mm diameter, released from a fixed height.
        case Species::BlackSphere: return {s, 3.5, 1.0, 1.0, 0.05, 0.0};
        // Husk or powder clump: long, thin and slowed by drag.
        case Species::Debris: return {s, 6.0, 0.15, 0.4, 0.05, 0.08};
    }
    return {};
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::NormalSingle: return "NormalSingle";
        case Scenario::SpanTwoCycles: return "SpanTwoCycles";
        case Scenario::DebrisNoPest: return "DebrisNoPest";
        case Scenario::ConsecutiveDouble: return "ConsecutiveDouble";
        case Scenario::FluctuationNoPest: return "FluctuationNoPest";
        case Scenario::Reference: return "Reference";
    }
    return "?";
}

Scenario scenario_from_string(const std::string& name) {
    for (auto s : kCampaignScenarios)
        if (to_string(s) == name) return s;
    if (name == "Reference") return Scenario::Reference;
    throw ContractError("unknown scenario '" + name + "'");
}

int pest_count(Scenario s) {
    switch (s) {
        case Scenario::DebrisNoPest:
        case Scenario::FluctuationNoPest: return 0;
        case Scenario::ConsecutiveDouble: return 2;
        default: return 1;
    }
}

namespace {

constexpr double kTumbleHz = 150.0;
constexpr std::size_t kLead = 128;       // two halves of quiet baseline before any event
constexpr double kEventGapSeconds = 1.0; // dead time between events on one device

struct Crossing {
    double centre = 0.0;     // sample at which the occluder centre reaches the beam
    double hold = 0.0;       // samples spent parked in the beam
    double extent = 1.0;     // vertical extent [mm]
    double radius = 0.0;     // [mm]
    double step = 0.2;       // fall per sample [mm]
    double t = 0.0, r = 0.0; // position in the cross-section [mm]
    double tumble = 0.0;
    double tumble_phase = 0.0;

    double half_duration() const { return extent / (2.0 * step); }
};

double effective_radius(const Crossing& c, double n, double dt) {
    double z = 0.0;
    if (n < c.centre)
        z = (c.centre - n) * c.step;
    else if (n > c.centre + c.hold)
        z = (n - c.centre - c.hold) * c.step;
    const double u = 2.0 * z / c.extent;
    if (u >= 1.0) return 0.0;
    const double wobble = 1.0 + c.tumble * std::sin(2.0 * std::numbers::pi * kTumbleHz * n * dt + c.tumble_phase);
    return c.radius * std::sqrt(1.0 - u * u) * std::max(wobble, 0.0);
}

struct Burst {
    double onset = 0.0;
    std::array<double, 2> amplitude{0.0, 0.0};  // [V]
    double frequency = 300.0;                   // [Hz]
    double decay = 8.0;                         // [samples]

    double at(int channel, double n, double dt) const {
        if (n < onset || amplitude[channel] == 0.0) return 0.0;
        const double k = n - onset;
        return amplitude[channel] * std::exp(-k / decay) * std::sin(2.0 * std::numbers::pi * frequency * k * dt);
    }
};

// `start` is the sample at which the leading edge enters the beam.
Crossing make_crossing(const SpeciesProfile& prof, double t, double r, double speed, double start, double dt,
                       Rng& rng) {
    Crossing c;
    c.extent = prof.body_length;
    c.radius = prof.radius();
    c.step = speed * 1000.0 * dt;  // m/s -> mm per sample
    c.t = t;
    c.r = r;
    c.tumble = prof.tumble_amplitude;
    c.tumble_phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    c.centre = start + c.half_duration();
    return c;
}

std::pair<double, double> random_position(double radius, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double rad = radius * std::sqrt(u(rng));
    const double ang = 2.0 * std::numbers::pi * u(rng);
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

double draw_speed(const SpeciesProfile& prof, Rng& rng) {
    std::normal_distribution<double> n(prof.fall_speed_mean, prof.fall_speed_sd);
    return std::max(n(rng), 0.3 * prof.fall_speed_mean);
}

struct Scene {
    std::vector<Crossing> crossings;
    Burst burst;
};

SynthResult render(const Scene& scene, const DeviceConfig& device, std::uint64_t seed, std::size_t samples) {
    device.validate();
    const auto& p = device.circuit;
    const auto& geom = device.geometry;
    const double dt = device.trigger.sample_period;
    const auto traits = device_traits(device);
    const double e_e = circuit::emitter_intensity(p);

    auto noise_rng = make_rng(seed, {1});
    const double wander_phase = std::uniform_real_distribution<double>(0.0, device.noise.wander_period)(noise_rng);

    std::array<std::vector<double>, 2> target;
    for (auto& v : target) v.resize(samples);
    for (std::size_t n = 0; n < samples; ++n) {
        const double time = static_cast<double>(n) * dt;
        const double wander = device.noise.wander_amplitude *
                              std::sin(2.0 * std::numbers::pi * (time + wander_phase) / device.noise.wander_period);
        for (int c = 0; c < 2; ++c) {
            double shade = 0.0;
            for (const auto& x : scene.crossings) {
                const double rho = effective_radius(x, static_cast<double>(n), dt);
                if (rho <= 0.0) continue;
                shade += optics::shaded_fraction({rho, x.t, x.r}, geom, c + 1) *
                         optics::reach_weight(x.t, x.r, geom, c + 1);
            }
            shade = std::clamp(shade, 0.0, 1.0);
            const double e_r = circuit::received_intensity(traits.gain[c] * e_e, shade, p);
            target[c][n] = circuit::receiver_voltage(e_r, p).volts + traits.offset[c] + wander +
                           scene.burst.at(c, static_cast<double>(n), dt);
        }
    }

    SynthResult out;
    std::array<std::vector<Count>*, 2> dst = {&out.ch1, &out.ch2};
    std::array<std::vector<double>, 2> filtered;
    for (int c = 0; c < 2; ++c) filtered[c] = circuit::rc_response(target[c], dt, target[c].front(), p).volts;
    std::normal_distribution<double> white(0.0, 1.0);
    for (int c = 0; c < 2; ++c) dst[c]->resize(samples);
    for (std::size_t n = 0; n < samples; ++n)
        for (int c = 0; c < 2; ++c)
            (*dst[c])[n] = circuit::adc_quantize(filtered[c][n] + device.noise.white_sd * white(noise_rng), p).counts;
    for (const auto& x : scene.crossings) out.pulse_centres.push_back(x.centre + x.hold / 2.0);
    return out;
}

}  // namespace

SynthResult baseline_stream(const DeviceConfig& device, std::uint64_t seed, std::size_t samples) {
    return render(Scene{}, device, seed, samples);
}

SynthResult synth_event(const DropEvent& event, const DeviceConfig& device) {
    const double zone = device.geometry.dropzone_radius;
    if (event.entry_t * event.entry_t + event.entry_r * event.entry_r > zone * zone * (1.0 + 1e-12))
        throw ContractError("entry position outside the drop zone");
    if (!(event.speed > 0.0)) throw ContractError("drop speed must be positive");

    const double dt = device.trigger.sample_period;
    auto rng = make_rng(event.seed, {2});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto lead = static_cast<double>(kLead);

    Scene scene;
    auto add = [&](const SpeciesProfile& prof, double t, double r, double speed, double start, double hold) {
        Crossing c = make_crossing(prof, t, r, speed, start, dt, rng);
        c.hold = hold;
        scene.crossings.push_back(c);
        return c;
    };

    switch (event.scenario) {
        case Scenario::NormalSingle:
        case Scenario::DebrisNoPest:
        case Scenario::Reference:
            add(event.profile, event.entry_t, event.entry_r, event.speed, lead + 52.0 * u(rng), 0.0);
            break;
        case Scenario::SpanTwoCycles:
            // Rises late in one half and parks long enough that it leaves
            // only after the first capture has been taken.
            add(event.profile, event.entry_t, event.entry_r, event.speed, lead + 40.0 + 16.0 * u(rng),
                85.0 + 20.0 * u(rng));
            break;
        case Scenario::ConsecutiveDouble: {
            const auto first = add(event.profile, event.entry_t, event.entry_r, event.speed, lead + 20.0 * u(rng), 0.0);
            const double end1 = first.centre + first.half_duration();
            const auto [t2, r2] = random_position(zone, rng);
            const double v2 = draw_speed(event.profile, rng);
            add(event.profile, t2, r2, v2, end1 + 12.0 + 18.0 * u(rng), 0.0);
            break;
        }
        case Scenario::FluctuationNoPest:
            scene.burst.onset = lead + 52.0 * u(rng);
            for (auto& a : scene.burst.amplitude) a = 0.03 + 0.09 * u(rng);
            break;
    }

    SynthResult out = render(scene, device, event.seed, kStreamSamples);
    out.truth.scenario = to_string(event.scenario);
    out.truth.species = event.batch_species.empty() ? to_string(event.profile.name) : event.batch_species;
    out.truth.count = event.scenario == Scenario::Reference ? 1 : pest_count(event.scenario);
    out.truth.reference = event.scenario == Scenario::Reference;
    return out;
}

std::array<double, 5> default_species_mix() { return {0.23, 0.21, 0.24, 0.24, 0.08}; }

std::array<double, 5> default_scenario_mix() {
    // Counting classes 0 / 1 / 2 in proportion 140 : 12389 : 103. Pest-free
    // events split evenly between debris and fluctuation; 1% of single-pest
    // events linger across two capture cycles.
    constexpr double total = 140.0 + 12389.0 + 103.0;
    const double zero = 140.0 / total;
    const double one = 12389.0 / total;
    const double two = 103.0 / total;
    return {0.99 * one, 0.01 * one, zero / 2.0, two, zero / 2.0};
}

void CampaignConfig::validate() const {
    const auto check_mix = [](const std::array<double, 5>& mix, const char* name) {
        double sum = 0.0;
        for (double m : mix) {
            if (m < 0.0) throw ContractError(std::string(name) + " has a negative entry");
            sum += m;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw ContractError(std::string(name) + " must sum to 1");
    };
    check_mix(species_mix, "species_mix");
    check_mix(scenario_mix, "scenario_mix");
    if (devices.empty()) throw ContractError("campaign needs at least one device");
    for (const auto& d : devices) d.validate();
}

DropEvent draw_event(const CampaignConfig& cfg, std::uint64_t i) {
    auto rng = make_rng(cfg.seed, {i});
    std::discrete_distribution<int> scen(cfg.scenario_mix.begin(), cfg.scenario_mix.end());
    std::discrete_distribution<int> spec(cfg.species_mix.begin(), cfg.species_mix.end());
    const Scenario scenario = kCampaignScenarios[static_cast<std::size_t>(scen(rng))];
    const Species species = kPestSpecies[static_cast<std::size_t>(spec(rng))];
    const auto& device = cfg.devices[i % cfg.devices.size()];

    DropEvent ev;
    ev.scenario = scenario;
    ev.profile = default_profile(scenario == Scenario::DebrisNoPest ? Species::Debris : species);
    ev.batch_species = to_string(species);
    const auto [t, r] = random_position(device.geometry.dropzone_radius, rng);
    ev.entry_t = t;
    ev.entry_r = r;
    ev.speed = draw_speed(ev.profile, rng);
    ev.seed = derive_seed(cfg.seed, {i, 0xE7});
    return ev;
}

CampaignResult simulate_campaign(const CampaignConfig& cfg) {
    cfg.validate();
    CampaignResult out;
    const std::size_t nd = cfg.devices.size();
    std::vector<std::uint64_t> next_seq(nd, 0);
    std::vector<std::uint64_t> clock_us(nd, 0);

    for (std::uint64_t i = 0; i < cfg.n_events; ++i) {
        const std::size_t d = i % nd;
        const auto& device = cfg.devices[d];
        const DropEvent ev = draw_event(cfg, i);
        const auto synth = synth_event(ev, device);
        auto recs = firmware::run_acquisition(synth.ch1, synth.ch2, device.trigger);

        TruthRow row;
        row.event_id = i;
        row.device_id = device.id;
        row.scenario = synth.truth.scenario;
        row.species = synth.truth.species;
        row.count = synth.truth.count;
        for (auto& rec : recs) {
            rec.device_id = device.id;
            rec.seq = next_seq[d]++;
            rec.timestamp_us += clock_us[d];
            rec.truth = synth.truth;
            rec.truth->event_id = i;
            row.record_ids.push_back(rec.id());
            out.records.push_back(std::move(rec));
        }
        out.truth.push_back(std::move(row));
        const double span = static_cast<double>(kStreamSamples) * device.trigger.sample_period + kEventGapSeconds;
        clock_us[d] += static_cast<std::uint64_t>(std::llround(span * 1e6));
    }
    return out;
}

std::vector<WaveformRecord> build_reference_drops(const DeviceConfig& device, std::size_t n) {
    if (n == 0) throw ContractError("reference pool needs at least one drop");
    const auto prof = default_profile(Species::BlackSphere);
    const double zone = device.geometry.dropzone_radius;
    std::vector<WaveformRecord> out;
    for (std::size_t k = 0; k < n; ++k) {
        bool done = false;
        for (std::uint64_t attempt = 0; attempt < 8 && !done; ++attempt) {
            auto rng = make_rng(device.seed, {0x5EF, k, attempt});
            std::normal_distribution<double> jitter(0.0, 0.1);
            double t = jitter(rng), r = jitter(rng);
            const double rad = std::hypot(t, r);
            if (rad > zone) {
                t *= zone / rad;
                r *= zone / rad;
            }
            DropEvent ev;
            ev.profile = prof;
            ev.entry_t = t;
            ev.entry_r = r;
            ev.speed = draw_speed(prof, rng);
            ev.scenario = Scenario::Reference;
            ev.seed = derive_seed(device.seed, {0x5EF, k, attempt, 1});
            const auto synth = synth_event(ev, device);
            auto recs = firmware::run_acquisition(synth.ch1, synth.ch2, device.trigger);
            if (recs.empty()) continue;
            auto rec = std::move(recs.front());
            rec.device_id = device.id;
            rec.seq = k;
            rec.timestamp_us = 0;
            rec.truth = synth.truth;
            rec.truth->event_id = k;
            out.push_back(std::move(rec));
            done = true;
        }
        if (!done) throw DataError(fmt::format("reference drop {} on {} never triggered", k, device.id));
    }
    return out;
}

std::string truth_csv(const std::vector<TruthRow>& rows) {
    std::string out = "event_id,device_id,scenario,species,count,record_ids\n";
    for (const auto& r : rows) {
        std::string ids;
        for (std::size_t k = 0; k < r.record_ids.size(); ++k) ids += (k ? ";" : "") + r.record_ids[k];
        out += fmt::format("{},{},{},{},{},{}\n", r.event_id, r.device_id, r.scenario, r.species, r.count, ids);
    }
    return out;
}

std::vector<TruthRow> parse_truth_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<TruthRow> rows;
    if (!std::getline(in, line)) return rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 6) throw DataError("malformed truth row: " + line);
        TruthRow r;
        r.event_id = std::stoull(f[0]);
        r.device_id = f[1];
        r.scenario = f[2];
        r.species = f[3];
        r.count = std::stoi(f[4]);
        std::istringstream ids(f[5]);
        while (std::getline(ids, cell, ';'))
            if (!cell.empty()) r.record_ids.push_back(cell);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace pestsim::dropsim
