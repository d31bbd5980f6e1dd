#include "pestsim/optics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "pestsim/errors.hpp"

namespace pestsim::optics {

namespace {

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Sixth-degree fit of the emitter's radial profile, highest power first.
// The tiny odd terms are carried over unchanged.
constexpr std::array<double, 7> kRriCoefficients = {
    0.0027, 4e-12, -0.4593, 2e-10, -1.4844, 3e-9, 100.11};

}  // namespace

std::string to_string(Layout layout) {
    return layout == Layout::Symmetric ? "symmetric" : "asymmetric";
}

Layout layout_from_string(const std::string& name) {
    if (name == "symmetric") return Layout::Symmetric;
    if (name == "asymmetric" || name == "asymmetric_orthogonal") return Layout::AsymmetricOrthogonal;
    throw ContractError("unknown layout '" + name + "'");
}

void BeamGeometry::validate() const {
    if (!(dropzone_radius > 0.0) || !(emitter_distance > dropzone_radius))
        throw ContractError("beam geometry requires D > R > 0");
    for (double a : {emitter_half_power_angle, receiver_half_angle})
        if (!(a > 0.0) || a > 180.0) throw ContractError("beam angles must lie in (0, 180] degrees");
    if (receiver_distance && !(*receiver_distance > dropzone_radius))
        throw ContractError("receiver must sit outside the drop zone");
    if (receiver_range && !(*receiver_range > 0.0))
        throw ContractError("receiver range must be positive");
}

double BeamGeometry::receiver_distance_mm() const {
    if (receiver_distance) return *receiver_distance;
    return layout == Layout::Symmetric ? emitter_distance : emitter_distance - dropzone_radius;
}

double BeamGeometry::receiver_range_mm() const {
    return receiver_range.value_or(emitter_distance);
}

PairFrame to_pair_frame(double t, double r, const BeamGeometry& geom, int pair_index) {
    if (pair_index == 1) return {t, r};
    if (pair_index != 2) throw ContractError("pair index must be 1 or 2");
    const double phi = deg2rad(geom.second_pair_rotation);
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    return {t * c + r * s, -t * s + r * c};
}

double rri_radial(double r) {
    if (!(std::abs(r) <= kRriSupport))
        throw std::domain_error(fmt::format("radial position {} mm outside the fitted span", r));
    double acc = 0.0;
    for (double c : kRriCoefficients) acc = acc * r + c;
    return acc;
}

double rsr(double t, const BeamGeometry& geom) {
    const double d = geom.emitter_distance;
    if (!(std::abs(t) <= geom.dropzone_radius))
        throw std::domain_error(fmt::format("transverse position {} mm outside the drop zone", t));
    return std::atan(1.0 / (d + t)) / std::atan(1.0 / (d - geom.dropzone_radius));
}

double shaded_fraction(const Occluder& occ, const BeamGeometry& geom, int pair_index) {
    if (occ.radius < 0.0) throw ContractError("occluder radius must be non-negative");
    const double rr = geom.dropzone_radius;
    if (occ.transverse * occ.transverse + occ.radial * occ.radial > rr * rr * (1.0 + 1e-12))
        throw ContractError("occluder centre outside the drop zone");
    if (occ.radius == 0.0) return 0.0;

    const auto p = to_pair_frame(occ.transverse, occ.radial, geom, pair_index);
    const double shaded_angle = std::atan(occ.radius / (geom.emitter_distance + p.t));
    const double aperture = deg2rad(geom.receiver_half_angle);
    const double weight = rri_radial(std::clamp(p.r, -rr, rr)) / 100.0;
    return std::clamp(shaded_angle / aperture * weight, 0.0, 1.0);
}

namespace {

struct ReachGeometry {
    double off_axis_angle;  // between receiver boresight and the point [rad]
    double distance;        // receiver to point [mm]
};

ReachGeometry reach_geometry(double t, double r, const BeamGeometry& geom, int pair_index) {
    const auto p = to_pair_frame(t, r, geom, pair_index);
    // Receiver at (+d, 0) looking towards the origin.
    const double dx = geom.receiver_distance_mm() - p.t;
    const double dy = p.r;
    return {std::atan2(std::abs(dy), dx), std::hypot(dx, dy)};
}

}  // namespace

bool in_reach(double t, double r, const BeamGeometry& geom, int pair_index) {
    const auto g = reach_geometry(t, r, geom, pair_index);
    if (g.off_axis_angle > deg2rad(geom.receiver_half_angle) + 1e-12) return false;
    return g.distance <= geom.receiver_range_mm() + 1e-9;
}

double reach_weight(double t, double r, const BeamGeometry& geom, int pair_index, double falloff_mm) {
    const auto g = reach_geometry(t, r, geom, pair_index);
    if (g.off_axis_angle > deg2rad(geom.receiver_half_angle) + 1e-12) return 0.0;
    const double excess = g.distance - geom.receiver_range_mm();
    if (excess <= 1e-9) return 1.0;
    return std::exp(-excess / falloff_mm);
}

CoverageReport coverage_map(const BeamGeometry& geom, double grid_step) {
    if (!(grid_step > 0.0)) throw ContractError("grid step must be positive");
    geom.validate();
    const double rr = geom.dropzone_radius;
    const long half = static_cast<long>(std::ceil(rr / grid_step));
    long both = 0, one = 0, blind = 0;
    for (long i = -half; i <= half; ++i) {
        const double t = static_cast<double>(i) * grid_step;
        for (long j = -half; j <= half; ++j) {
            const double r = static_cast<double>(j) * grid_step;
            if (t * t + r * r > rr * rr) continue;
            const int hits = int(in_reach(t, r, geom, 1)) + int(in_reach(t, r, geom, 2));
            (hits == 2 ? both : hits == 1 ? one : blind)++;
        }
    }
    CoverageReport rep;
    rep.cells = both + one + blind;
    const double n = static_cast<double>(rep.cells);
    rep.both_pairs = static_cast<double>(both) / n;
    rep.one_pair = static_cast<double>(one) / n;
    rep.blind = static_cast<double>(blind) / n;
    return rep;
}

std::string to_csv(const CoverageReport& report) {
    return fmt::format("both_pairs,one_pair,blind\n{:.6f},{:.6f},{:.6f}\n", report.both_pairs,
                       report.one_pair, report.blind);
}

}  // namespace pestsim::optics
