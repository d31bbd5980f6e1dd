#include "pestsim/circuit.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "pestsim/errors.hpp"

namespace pestsim::circuit {

void CircuitParams::validate() const {
    if (!(k1 > 0.0) || !(k2 > 0.0) || !(a > 0.0)) throw ContractError("k1, k2 and a must be positive");
    if (!(vcc > 0.0) || !(r_e > 0.0) || !(r_r > 0.0)) throw ContractError("vcc, r_e and r_r must be positive");
    if (!(c0 > 0.0) || !(v_ref > 0.0) || !(v_min > 0.0)) throw ContractError("capacitance law constants must be positive");
    if (adc_bits < 1 || adc_bits > 16) throw ContractError("adc_bits must be in [1, 16]");
}

double emitter_intensity(const CircuitParams& p) { return p.k1 * (p.a / p.r_e) + p.c1; }

double received_intensity(double e_e, double shade, const CircuitParams& p) {
    return e_e * (1.0 - shade) + p.ambient_e;
}

Voltage receiver_voltage(double e_r, const CircuitParams& p) {
    const double u = p.vcc - p.r_r * (p.k2 * e_r + p.c2);
    if (u < 0.0) return {0.0, true};
    if (u > p.vcc) return {p.vcc, true};
    return {u, false};
}

Voltage operating_point(const CircuitParams& p, double gain) {
    return receiver_voltage(received_intensity(gain * emitter_intensity(p), 0.0, p), p);
}

double junction_capacitance(double u_pd, const CircuitParams& p) {
    return p.c0 * std::sqrt(p.v_ref / std::max(u_pd, p.v_min));
}

double time_constant(double u_pd, const CircuitParams& p) { return p.r_r * junction_capacitance(u_pd, p); }

double rise_time(const CircuitParams& p) {
    return time_constant(operating_point(p).volts, p) * std::log(9.0);
}

RcResult rc_response(std::span<const double> target, double dt, double initial, const CircuitParams& p) {
    if (!(dt > 0.0)) throw ContractError("sample interval must be positive");
    RcResult out;
    out.volts.reserve(target.size());
    double v = initial;
    for (double u : target) {
        const double alpha = 1.0 - std::exp(-dt / time_constant(v, p));
        v += alpha * (u - v);
        out.volts.push_back(v);
    }
    out.state = v;
    return out;
}

AdcSample adc_quantize(double u, const CircuitParams& p) {
    const double fs = static_cast<double>(p.adc_full_scale());
    if (u < 0.0) return {0, true};
    if (u > p.vcc) return {static_cast<std::uint16_t>(p.adc_full_scale()), true};
    return {static_cast<std::uint16_t>(std::floor(u / p.vcc * fs + 0.5)), false};
}

double counts_to_volts(double counts, const CircuitParams& p) {
    return counts / static_cast<double>(p.adc_full_scale()) * p.vcc;
}

std::vector<double> e12_ladder(double lo, double hi) {
    static constexpr std::array<double, 12> kE12 = {1.0, 1.2, 1.5, 1.8, 2.2, 2.7,
                                                    3.3, 3.9, 4.7, 5.6, 6.8, 8.2};
    std::vector<double> out;
    for (int decade = -1; decade <= 9; ++decade) {
        const double scale = std::pow(10.0, decade);
        for (double m : kE12) {
            // round away representation noise, e.g. 4.7 * 1000
            const double v = std::round(m * scale * 1e6) / 1e6;
            if (v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12)) out.push_back(v);
        }
    }
    return out;
}

TuneResult tune_components(const CircuitParams& p, double max_response_time, double linearity_margin,
                           std::span<const double> r_r_ladder, std::span<const double> r_e_ladder) {
    if (r_r_ladder.empty() || r_e_ladder.empty()) throw ContractError("resistor ladders must be non-empty");
    std::vector<double> rr(r_r_ladder.begin(), r_r_ladder.end());
    std::vector<double> re(r_e_ladder.begin(), r_e_ladder.end());
    std::sort(rr.begin(), rr.end(), std::greater<>());
    std::sort(re.begin(), re.end());

    bool any_fast = false;
    for (double r_r : rr) {
        for (double r_e : re) {
            CircuitParams q = p;
            q.r_r = r_r;
            q.r_e = r_e;
            const auto op = operating_point(q);
            const double rt = rise_time(q);
            const bool fast = rt <= max_response_time;
            any_fast = any_fast || fast;
            if (fast && !op.saturated && op.volts >= linearity_margin) return {r_r, r_e, op.volts, rt};
        }
    }
    if (!any_fast)
        throw InfeasibleError("max_response_time",
                              fmt::format("no receiver resistor meets max_response_time = {} s", max_response_time));
    throw InfeasibleError("linearity_margin",
                          fmt::format("no resistor pair keeps the photodiode above linearity_margin = {} V",
                                      linearity_margin));
}

}  // namespace pestsim::circuit
