#include <doctest.h>

#include "pestsim/errors.hpp"
#include "pestsim/metrics.hpp"

using namespace pestsim;
using namespace pestsim::metrics;

TEST_CASE("eta and trigger accuracy") {
    CHECK(eta(2.0, 2.0) == 1.0);
    CHECK(eta(1.0, 3.0) == 0.75);
    CHECK(eta(0.0, 5.0) == 0.0);
    CHECK_THROWS_AS(eta(0.0, 0.0), ContractError);
    CHECK_THROWS_AS(eta(-1.0, 1.0), ContractError);
    CHECK(trigger_accuracy(95, 100) == doctest::Approx(95.0));
    CHECK(trigger_accuracy(105, 100) == doctest::Approx(95.0));
    CHECK_THROWS_AS(trigger_accuracy(1, 0), ContractError);
}

TEST_CASE("binary metrics by hand") {
    // truth 0: 8 right, 2 wrong; truth 1: 3 wrong, 7 right
    ConfusionMatrix cm({"a", "b"});
    cm.add(0, 0, 8);
    cm.add(0, 1, 2);
    cm.add(1, 0, 3);
    cm.add(1, 1, 7);
    const auto m = classification_metrics(cm);
    CHECK(m.support == 20);
    CHECK(m.accuracy == doctest::Approx(0.75));
    const double p0 = 8.0 / 11.0, p1 = 7.0 / 9.0;
    CHECK(m.macro_precision == doctest::Approx((p0 + p1) / 2));
    CHECK(m.macro_recall == doctest::Approx((0.8 + 0.7) / 2));
    const double f0 = 2 * p0 * 0.8 / (p0 + 0.8), f1 = 2 * p1 * 0.7 / (p1 + 0.7);
    CHECK(m.macro_f1 == doctest::Approx((f0 + f1) / 2));
    const double pe = 0.5 * 11.0 / 20.0 + 0.5 * 9.0 / 20.0;
    CHECK(m.kappa == doctest::Approx((0.75 - pe) / (1 - pe)));
}

TEST_CASE("degenerate matrices") {
    ConfusionMatrix cm({"a", "b", "c"});
    cm.add(0, 0, 5);
    const auto m = classification_metrics(cm);
    CHECK(m.accuracy == 1.0);
    CHECK(m.kappa == 1.0);
    CHECK(m.macro_recall == doctest::Approx(1.0 / 3.0));  // empty classes score 0
    CHECK_THROWS_AS(classification_metrics(ConfusionMatrix({"a"})), ContractError);
    CHECK_THROWS_AS(cm.add(3, 0), ContractError);
    CHECK_THROWS_AS(ConfusionMatrix({}), ContractError);
}

TEST_CASE("confusion from label vectors and accumulation") {
    const std::vector<int> t = {0, 1, 2, 2, 1};
    const std::vector<int> p = {0, 2, 2, 1, 1};
    auto cm = confusion(t, p, {"0", "1", "2"});
    CHECK(cm.counts[1][2] == 1);
    CHECK(cm.counts[2][1] == 1);
    CHECK(cm.total() == 5);
    cm += cm;
    CHECK(cm.counts[2][2] == 2);
    CHECK_THROWS_AS(confusion(t, std::vector<int>{0}, {"0", "1", "2"}), ContractError);
    ConfusionMatrix other({"x", "y", "z"});
    CHECK_THROWS_AS(cm += other, ContractError);
}

TEST_CASE("serialization") {
    ConfusionMatrix cm({"a", "b"});
    cm.add(0, 0, 3);
    cm.add(1, 0, 1);
    CHECK(to_csv(cm) == "truth\\predicted,a,b\na,3,0\nb,1,0\n");
    const auto m = classification_metrics(cm);
    CHECK(metrics_csv_header() == "label,kappa,recall,precision,f1,accuracy,support\n");
    CHECK(metrics_csv_row("x", m).rfind("x,", 0) == 0);
    const auto j = to_json(m);
    CHECK(j["support"] == 4);
    CHECK(j["accuracy"].get<double>() == doctest::Approx(0.75));
    CHECK(to_json(cm)["counts"][1][0] == 1);
}
