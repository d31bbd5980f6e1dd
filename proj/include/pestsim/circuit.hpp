// Emitter/receiver drive circuit, receiver RC response and ADC quantization.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pestsim::circuit {

struct CircuitParams {
    double vcc = 3.3;        ///< receiver supply [V]
    double r_e = 680.0;      ///< emitter resistor [ohm]
    double r_r = 56000.0;    ///< receiver resistor [ohm]
    double k1 = 1.0;         ///< emitter current-to-intensity slope
    double c1 = 0.0;         ///< emitter intensity offset
    double a = 100.0;        ///< emitter drive constant (I_e = a / R_e)
    double k2 = 1.7e-4;      ///< receiver intensity-to-current slope [A per unit]
    double c2 = 0.0;         ///< receiver dark current [A]
    double ambient_e = 0.02; ///< ambient intensity reaching the receiver
    double c0 = 1e-9;        ///< junction capacitance at v_ref [F]
    double v_ref = 1.0;      ///< reference bias for c0 [V]
    double v_min = 0.05;     ///< bias floor for the capacitance law [V]
    int adc_bits = 12;

    void validate() const;
    std::uint32_t adc_full_scale() const { return (1u << adc_bits) - 1u; }
};

/// E_e = k1 * a / R_e + c1
double emitter_intensity(const CircuitParams& p);

/// E_r = e_e * (1 - shade) + ambient_e. Coupling gain is folded into k2.
double received_intensity(double e_e, double shade, const CircuitParams& p);

struct Voltage {
    double volts = 0.0;
    bool saturated = false;
};

/// U_r = VCC - R_r * (k2 * e_r + c2), clamped to [0, VCC].
Voltage receiver_voltage(double e_r, const CircuitParams& p);

/// Unshaded receiver voltage for emitter intensity scaled by `gain`.
Voltage operating_point(const CircuitParams& p, double gain = 1.0);

/// C_j = c0 * sqrt(v_ref / max(U_pd, v_min))
double junction_capacitance(double u_pd, const CircuitParams& p);
double time_constant(double u_pd, const CircuitParams& p);

/// 10%-90% rise time of the first-order receiver at its unshaded operating point.
double rise_time(const CircuitParams& p);

struct RcResult {
    std::vector<double> volts;
    double state = 0.0;  ///< capacitor voltage after the last sample
};

/// First-order low-pass with a bias-dependent time constant. Each output
/// sample is the capacitor voltage after relaxing towards target[n] for dt.
RcResult rc_response(std::span<const double> target, double dt, double initial, const CircuitParams& p);

struct AdcSample {
    std::uint16_t counts = 0;
    bool saturated = false;
};

/// Round-half-up quantization onto [0, 2^adc_bits - 1].
AdcSample adc_quantize(double u, const CircuitParams& p);
double counts_to_volts(double counts, const CircuitParams& p);

/// E12 preferred values inside [lo, hi], ascending.
std::vector<double> e12_ladder(double lo, double hi);

struct TuneResult {
    double r_r = 0.0;
    double r_e = 0.0;
    double u_pd = 0.0;
    double rise_time = 0.0;
};

/// Largest receiver resistor from `r_r_ladder`, then smallest emitter resistor
/// from `r_e_ladder`, such that the unshaded receiver responds within
/// `max_response_time` and keeps at least `linearity_margin` volts across the
/// photodiode. Throws InfeasibleError naming the constraint that cannot be met.
TuneResult tune_components(const CircuitParams& p, double max_response_time, double linearity_margin,
                           std::span<const double> r_r_ladder, std::span<const double> r_e_ladder);

}  // namespace pestsim::circuit
