// Beam-pair optics: emitter radiation profile, occluder shading and the
// coverage of the drop-zone cross-section by two emitter/receiver pairs.
//
// Coordinates are in millimetres on the drop-zone cross-section. For pair 1
// the emitter sits at (-D, 0), the transverse axis t runs from the emitter
// towards the receiver, and the radial axis r is perpendicular to it. Pair 2
// is pair 1 rotated about the origin by `second_pair_rotation`.
#pragma once

#include <optional>
#include <string>

namespace pestsim::optics {

enum class Layout { Symmetric, AsymmetricOrthogonal };

std::string to_string(Layout layout);
Layout layout_from_string(const std::string& name);

struct BeamGeometry {
    double emitter_distance = 19.13;         ///< D, origin to emitter [mm]
    double dropzone_radius = 2.0;            ///< R [mm]
    double emitter_half_power_angle = 10.0;  ///< [deg]
    double receiver_half_angle = 10.0;       ///< effective reception half-angle [deg]
    Layout layout = Layout::AsymmetricOrthogonal;
    double second_pair_rotation = 90.0;      ///< [deg]
    /// Origin to receiver [mm]. Unset: D for Symmetric, D - R for AsymmetricOrthogonal.
    std::optional<double> receiver_distance;
    /// Furthest point a receiver still perceives shading from [mm]. Unset: D.
    std::optional<double> receiver_range;

    /// Throws ContractError unless D > R > 0 and all angles are in (0, 180].
    void validate() const;
    double receiver_distance_mm() const;
    double receiver_range_mm() const;
};

struct Occluder {
    double radius = 1.0;      ///< rho [mm], >= 0
    double transverse = 0.0;  ///< t [mm]
    double radial = 0.0;      ///< r [mm]
};

/// Position of a point in the frame of pair `pair_index` (1 or 2).
struct PairFrame {
    double t;
    double r;
};
PairFrame to_pair_frame(double t, double r, const BeamGeometry& geom, int pair_index);

/// Fitted relative radiant intensity [%] along the radial axis. The fit is
/// supported on |r| <= 3 mm (the sampled range); outside it throws std::domain_error.
double rri_radial(double r);
inline constexpr double kRriSupport = 3.0;

/// Relative shaded range of the 1 mm reference occluder at transverse position t.
double rsr(double t, const BeamGeometry& geom);

/// Fraction of receiver `pair_index`'s aperture shaded by `occ`, in [0, 1].
/// Rejects occluders whose centre lies outside the drop zone.
double shaded_fraction(const Occluder& occ, const BeamGeometry& geom, int pair_index);

/// Whether receiver `pair_index` geometrically reaches point (t, r): inside its
/// acceptance cone and within its effective range.
bool in_reach(double t, double r, const BeamGeometry& geom, int pair_index);

/// Soft version of in_reach used by the signal chain: 1 inside the reach,
/// exponential fall-off with distance beyond the range, 0 outside the cone.
double reach_weight(double t, double r, const BeamGeometry& geom, int pair_index,
                    double falloff_mm = 0.5);

struct CoverageReport {
    double both_pairs = 0.0;
    double one_pair = 0.0;
    double blind = 0.0;
    long cells = 0;
};

CoverageReport coverage_map(const BeamGeometry& geom, double grid_step);

/// Header plus one row: "both_pairs,one_pair,blind".
std::string to_csv(const CoverageReport& report);

}  // namespace pestsim::optics
