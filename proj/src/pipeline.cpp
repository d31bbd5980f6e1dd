#include "pestsim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "pestsim/errors.hpp"
#include "pestsim/features.hpp"
#include "pestsim/rng.hpp"

namespace pestsim::pipeline {

CountingData counting_data(const curation::CuratedDataset& ds, curation::Split split, std::size_t bins) {
    CountingData out;
    std::vector<std::vector<double>> rows;
    for (const auto& e : ds.counting) {
        if (e.split != split) continue;
        rows.push_back(features::extract(ds.record(e.id), bins).flatten());
        out.y.push_back(e.label);
        out.ids.push_back(e.id);
        out.devices.push_back(e.device_id);
    }
    out.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(features::feature_count(bins)));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return out;
}

std::vector<cmm::LabeledWave> species_data(const curation::CuratedDataset& ds, curation::Split split) {
    std::vector<cmm::LabeledWave> out;
    for (const auto& e : ds.species)
        if (e.split == split) out.push_back({cmm::record_matrix(ds.record(e.id)), e.device_id, e.label, e.id});
    return out;
}

cmm::Pools reference_pools(const curation::CuratedDataset& ds, std::size_t capacity) {
    cmm::Pools pools;
    for (const auto& [dev, ids] : ds.reference_pools) {
        auto& p = pools[dev];
        for (std::size_t k = 0; k < ids.size() && k < capacity; ++k) p.push_back(cmm::record_matrix(ds.reference(ids[k])));
    }
    return pools;
}

Evaluation evaluate(const std::vector<int>& truth, const std::vector<int>& predicted,
                    const std::vector<std::string>& devices, const std::vector<std::string>& class_names) {
    if (truth.size() != predicted.size() || truth.size() != devices.size())
        throw ContractError("truth, predictions and devices must align");
    Evaluation ev{metrics::ConfusionMatrix(class_names), {}};
    for (std::size_t k = 0; k < truth.size(); ++k) {
        ev.overall.add(truth[k], predicted[k]);
        ev.per_device.try_emplace(devices[k], class_names).first->second.add(truth[k], predicted[k]);
    }
    return ev;
}

std::array<double, 2> peak_excursion_mv(const dropsim::SynthResult& stream, const circuit::CircuitParams& p) {
    const auto per_channel = [&](const std::vector<Count>& ch) {
        // Events never start before sample 128, so the leading stretch is quiet.
        const std::size_t lead = std::min<std::size_t>(128, ch.size());
        std::vector<double> head(ch.begin(), ch.begin() + static_cast<std::ptrdiff_t>(lead));
        std::nth_element(head.begin(), head.begin() + static_cast<std::ptrdiff_t>(lead / 2), head.end());
        const double base = head[lead / 2];
        const double peak = *std::max_element(ch.begin(), ch.end());
        return std::max(0.0, circuit::counts_to_volts(peak, p) - circuit::counts_to_volts(base, p)) * 1000.0;
    };
    return {per_channel(stream.ch1), per_channel(stream.ch2)};
}

BenchResult bench_layout(const config::RunConfig& cfg) {
    const auto& b = cfg.bench;
    const auto profile = dropsim::default_profile(dropsim::species_from_string(b.species));
    BenchResult result;
    const auto rr = circuit::e12_ladder(b.r_r_min, b.r_r_max);
    const auto re = circuit::e12_ladder(b.r_e_min, b.r_e_max);
    result.tailored = circuit::tune_components(cfg.device.circuit, b.max_response_time, b.linearity_margin, rr, re);

    for (const char* combo : kBenchCombinations) {
        const std::string name = combo;
        DeviceConfig base = cfg.device;
        base.geometry.layout =
            name == "sym+conv" ? optics::Layout::Symmetric : optics::Layout::AsymmetricOrthogonal;
        if (name == "asym+tailored") {
            base.circuit.r_r = result.tailored.r_r;
            base.circuit.r_e = result.tailored.r_e;
        } else {
            base.circuit.r_r = b.conventional_r_r;
            base.circuit.r_e = b.conventional_r_e;
        }
        std::vector<double> pooled;
        for (std::size_t d = 0; d < b.devices; ++d) {
            DeviceConfig dev = base;
            dev.id = fmt::format("bench{}", d);
            dev.seed = derive_seed(cfg.seed, {0xBE, d});
            std::vector<double> etas;
            for (std::size_t k = 0; k < b.drops; ++k) {
                // Same drop positions for every combination.
                auto rng = make_rng(cfg.seed, {0xBE, d, k});
                std::uniform_real_distribution<double> u(0.0, 1.0);
                const double rad = dev.geometry.dropzone_radius * std::sqrt(u(rng));
                const double ang = 2.0 * M_PI * u(rng);
                dropsim::DropEvent ev;
                ev.profile = profile;
                ev.entry_t = rad * std::cos(ang);
                ev.entry_r = rad * std::sin(ang);
                ev.speed = profile.fall_speed_mean;
                ev.scenario = dropsim::Scenario::NormalSingle;
                ev.seed = derive_seed(cfg.seed, {0xBE, d, k, 1});
                const auto stream = dropsim::synth_event(ev, dev);
                const auto dv = peak_excursion_mv(stream, dev.circuit);
                etas.push_back(dv[0] + dv[1] > 0.0 ? metrics::eta(dv[0], dv[1]) : 0.0);
            }
            const auto stats = [&](const std::vector<double>& v, const std::string& device) {
                double mean = 0.0, var = 0.0;
                for (double x : v) mean += x;
                mean /= static_cast<double>(v.size());
                for (double x : v) var += (x - mean) * (x - mean);
                const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
                return BenchRow{name, device, mean, sd, v.size()};
            };
            result.rows.push_back(stats(etas, dev.id));
            pooled.insert(pooled.end(), etas.begin(), etas.end());
            if (d + 1 == b.devices) result.rows.push_back(stats(pooled, "all"));
        }
    }
    return result;
}

std::string bench_csv(const BenchResult& result) {
    std::string out = "combination,device,mean_eta_mv,sd_eta_mv,drops\n";
    for (const auto& r : result.rows)
        out += fmt::format("{},{},{:.4f},{:.4f},{}\n", r.combination, r.device, r.mean_eta, r.sd_eta, r.drops);
    return out;
}

}  // namespace pestsim::pipeline
