#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pestsim/errors.hpp"
#include "pestsim/optics.hpp"

using namespace pestsim;
using namespace pestsim::optics;

TEST_CASE("rri_radial matches hand-evaluated polynomial") {
    // 0.0027 r^6 + 4e-12 r^5 - 0.4593 r^4 + 2e-10 r^3 - 1.4844 r^2 + 3e-9 r + 100.11
    CHECK(rri_radial(0.0) == doctest::Approx(100.11).epsilon(1e-12));
    CHECK(rri_radial(1.0) == doctest::Approx(98.169).epsilon(1e-6));
    CHECK(rri_radial(1.5) == doctest::Approx(94.4760).epsilon(1e-4));
    CHECK(rri_radial(2.0) == doctest::Approx(86.9960).epsilon(1e-4));
    CHECK(rri_radial(3.0) == doctest::Approx(51.5146).epsilon(1e-4));
}

TEST_CASE("rri_radial is even up to the tiny odd terms and bounded by its support") {
    for (double r : {0.3, 1.1, 2.7}) CHECK(rri_radial(r) == doctest::Approx(rri_radial(-r)).epsilon(1e-8));
    CHECK(rri_radial(kRriSupport) > 0.0);
    CHECK_THROWS_AS(rri_radial(3.0001), std::domain_error);
    CHECK_THROWS_AS(rri_radial(-4.0), std::domain_error);
}

TEST_CASE("rsr values for the default geometry") {
    BeamGeometry g;
    CHECK(rsr(-2.0, g) == 1.0);
    CHECK(rsr(0.0, g) == doctest::Approx(0.8957).epsilon(1e-3));
    CHECK(rsr(2.0, g) == doctest::Approx(0.8110).epsilon(1e-3));
    CHECK(rsr(0.5, g) < rsr(-0.5, g));
    CHECK_THROWS_AS(rsr(2.1, g), std::domain_error);
}

TEST_CASE("pair frames") {
    BeamGeometry g;
    auto p1 = to_pair_frame(0.7, -0.3, g, 1);
    CHECK(p1.t == 0.7);
    CHECK(p1.r == -0.3);
    auto p2 = to_pair_frame(1.0, 0.0, g, 2);  // 90 degrees: (1, 0) -> (0, -1)
    CHECK(p2.t == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p2.r == doctest::Approx(-1.0));
    CHECK_THROWS_AS(to_pair_frame(0, 0, g, 3), ContractError);
}

TEST_CASE("shaded_fraction edge cases and monotonicity") {
    BeamGeometry g;
    CHECK(shaded_fraction({0.0, 0.0, 0.0}, g, 1) == 0.0);
    double prev = 0.0;
    for (double rho : {0.1, 0.3, 0.6, 1.0}) {
        const double s = shaded_fraction({rho, 0.0, 0.0}, g, 1);
        CHECK(s > prev);
        prev = s;
    }
    // closed form at the centre: atan(rho / D) / alpha * rri(0) / 100
    const double expect = std::atan(0.5 / 19.13) / (10.0 * M_PI / 180.0) * 100.11 / 100.0;
    CHECK(shaded_fraction({0.5, 0.0, 0.0}, g, 1) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(shaded_fraction({50.0, 0.0, 0.0}, g, 1) == 1.0);
    CHECK_THROWS_AS(shaded_fraction({0.5, 2.5, 0.0}, g, 1), ContractError);
    CHECK_THROWS_AS(shaded_fraction({-0.1, 0.0, 0.0}, g, 1), ContractError);
}

TEST_CASE("coverage: asymmetric layout has no blind spots, symmetric does") {
    BeamGeometry asym;
    asym.layout = Layout::AsymmetricOrthogonal;
    const auto a = coverage_map(asym, 0.05);
    CHECK(a.blind == 0.0);
    CHECK(a.both_pairs == 1.0);

    BeamGeometry sym;
    sym.layout = Layout::Symmetric;
    const auto s = coverage_map(sym, 0.05);
    CHECK(s.blind > 0.0);
    CHECK(s.blind + s.one_pair + s.both_pairs == doctest::Approx(1.0));
    CHECK(s.cells == a.cells);
}

TEST_CASE("a full-width aperture with unlimited range covers everything") {
    BeamGeometry sym;
    sym.layout = Layout::Symmetric;
    sym.receiver_half_angle = 180.0;
    sym.receiver_range = 100.0;
    const auto rep = coverage_map(sym, 0.1);
    CHECK(rep.blind == 0.0);
    CHECK(rep.both_pairs == 1.0);
}

TEST_CASE("reach_weight is one inside reach and decays outside") {
    BeamGeometry sym;
    sym.layout = Layout::Symmetric;
    CHECK(reach_weight(0.0, 0.0, sym, 1) == 1.0);
    CHECK(in_reach(0.0, 0.0, sym, 1));
    // Far side of the zone along pair 1's axis lies beyond the receiver range.
    CHECK_FALSE(in_reach(-1.9, 0.0, sym, 1));
    const double w = reach_weight(-1.9, 0.0, sym, 1);
    CHECK(w > 0.0);
    CHECK(w < 1.0);
    CHECK(w == doctest::Approx(std::exp(-1.9 / 0.5)).epsilon(1e-9));
}

TEST_CASE("geometry validation and layout names") {
    BeamGeometry g;
    g.dropzone_radius = 30.0;
    CHECK_THROWS_AS(g.validate(), ContractError);
    CHECK(layout_from_string(to_string(Layout::Symmetric)) == Layout::Symmetric);
    CHECK(layout_from_string("asymmetric") == Layout::AsymmetricOrthogonal);
    CHECK_THROWS_AS(layout_from_string("diagonal"), ContractError);
    CHECK(to_csv(CoverageReport{1.0, 0.0, 0.0, 10}) == "both_pairs,one_pair,blind\n1.000000,0.000000,0.000000\n");
}
