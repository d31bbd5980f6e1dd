#include <doctest.h>

#include "pestsim/errors.hpp"
#include "pestsim/pipeline.hpp"

using namespace pestsim;
using namespace pestsim::pipeline;

namespace {

const curation::CuratedDataset& dataset() {
    static const curation::CuratedDataset ds = [] {
        auto cfg = config::parse(
            "seed = 4\ncampaign.n_events = 300\ncampaign.reference_drops = 12\n"
            "campaign.scenario_mix = 0.5, 0.1, 0.1, 0.2, 0.1\nmodel.k_ref = 4\n");
        const auto camp = dropsim::simulate_campaign(cfg.campaign_config());
        std::vector<WaveformRecord> refs;
        for (const auto& d : cfg.devices()) {
            auto r = dropsim::build_reference_drops(d, cfg.reference_drops);
            refs.insert(refs.end(), r.begin(), r.end());
        }
        return curation::curate(camp.records, refs, cfg.curation);
    }();
    return ds;
}

}  // namespace

TEST_CASE("counting data follows the split") {
    const auto& ds = dataset();
    const auto tr = counting_data(ds, curation::Split::Train);
    const auto te = counting_data(ds, curation::Split::Test);
    std::size_t n_train = 0, n_test = 0;
    for (const auto& e : ds.counting) {
        n_train += e.split == curation::Split::Train;
        n_test += e.split == curation::Split::Test;
    }
    CHECK(tr.y.size() == n_train);
    CHECK(te.y.size() == n_test);
    CHECK(static_cast<std::size_t>(tr.x.rows()) == n_train);
    CHECK(tr.x.cols() == 84);
    CHECK(tr.ids.size() == tr.devices.size());
    const auto f = features::extract(ds.record(te.ids[0])).flatten();
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(te.x(0, static_cast<Eigen::Index>(k)) == f[k]);
}

TEST_CASE("species data and reference pools") {
    const auto& ds = dataset();
    const auto te = species_data(ds, curation::Split::Test);
    REQUIRE_FALSE(te.empty());
    for (const auto& w : te) {
        CHECK(w.x.rows() == 128);
        CHECK(w.x.cols() == 2);
        CHECK(w.label >= 0);
        CHECK(w.label < 5);
    }
    const auto pools = reference_pools(ds, 100);
    CHECK(pools.size() == 2);
    CHECK(pools.at("dev0").size() == 12);
    CHECK(reference_pools(ds, 5).at("dev1").size() == 5);
}

TEST_CASE("evaluate splits by device") {
    const std::vector<int> t = {0, 1, 1, 0};
    const std::vector<int> p = {0, 1, 0, 0};
    const auto ev = evaluate(t, p, {"a", "b", "a", "b"}, {"x", "y"});
    CHECK(ev.overall.total() == 4);
    CHECK(ev.per_device.at("a").counts[1][0] == 1);
    CHECK(ev.per_device.at("b").counts[1][1] == 1);
}

TEST_CASE("peak excursion against the pre-event baseline") {
    dropsim::SynthResult s;
    s.ch1.assign(448, 2000);
    s.ch2.assign(448, 1000);
    s.ch1[200] = 2100;
    s.ch2[300] = 1041;
    circuit::CircuitParams p;
    const auto ex = peak_excursion_mv(s, p);
    CHECK(ex[0] == doctest::Approx(100.0 * 3300.0 / 4095.0));
    CHECK(ex[1] == doctest::Approx(41.0 * 3300.0 / 4095.0));
}

TEST_CASE("bench layout ordering and shape") {
    const auto cfg = config::parse("");
    const auto r = bench_layout(cfg);
    CHECK(r.tailored.r_r == 56000.0);
    CHECK(r.tailored.r_e == 680.0);
    CHECK(r.rows.size() == 3 * 4);
    std::map<std::string, double> all;
    for (const auto& row : r.rows)
        if (row.device == "all") {
            all[row.combination] = row.mean_eta;
            CHECK(row.drops == 30);
        }
    CHECK(all.at("asym+tailored") > all.at("asym+conv"));
    CHECK(all.at("asym+conv") > all.at("sym+conv"));
    CHECK(bench_csv(r).rfind("combination,device,mean_eta_mv,sd_eta_mv,drops\n", 0) == 0);
    CHECK(bench_csv(bench_layout(cfg)) == bench_csv(r));
}
