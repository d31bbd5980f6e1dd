#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "pestsim/curation.hpp"
#include "pestsim/dropsim.hpp"
#include "pestsim/errors.hpp"

using namespace pestsim;
using namespace pestsim::curation;

namespace {

WaveformRecord flat(const std::string& dev, std::uint64_t seq, Count level = 2000) {
    WaveformRecord r;
    r.device_id = dev;
    r.seq = seq;
    r.ch1.assign(128, level);
    r.ch2.assign(128, level);
    return r;
}

void bump(WaveformRecord& r, double centre, double width, double height, int channel = 1) {
    auto& ch = channel == 1 ? r.ch1 : r.ch2;
    for (std::size_t i = 0; i < ch.size(); ++i) {
        const double x = (static_cast<double>(i) - centre) / width;
        ch[i] = static_cast<Count>(ch[i] + std::lround(height * std::exp(-0.5 * x * x)));
    }
}

std::map<Split, std::size_t> split_counts(const std::vector<Entry>& es, int label) {
    std::map<Split, std::size_t> out;
    for (const auto& e : es)
        if (e.label == label && !e.duplicate) ++out[e.split];
    return out;
}

}  // namespace

TEST_CASE("baseline and excursion sum") {
    auto r = flat("d", 0, 100);
    for (std::size_t i = 0; i < 128; ++i) r.ch2[i] = static_cast<Count>(i);
    r.ch1[5] = 150;
    const auto base = channel_baseline(r);
    CHECK(base[0] == 100.0);
    CHECK(base[1] == doctest::Approx(12.7));  // 0.1 * 127 by linear interpolation
    double expect = 50.0;
    for (int i = 0; i < 128; ++i) expect += std::abs(i - 12.7);
    CHECK(excursion_sum(r) == doctest::Approx(expect));
    CHECK(excursion_sum(flat("d", 0)) == 0.0);
}

TEST_CASE("sum filter") {
    auto quiet = flat("d", 0);
    auto loud = flat("d", 1);
    bump(loud, 60, 6, 300);
    const std::vector<WaveformRecord> recs = {quiet, loud};
    const auto p = sum_filter(recs, 1850.0);
    REQUIRE(p.kept.size() == 1);
    CHECK(p.kept[0].seq == 1);
    REQUIRE(p.discarded.size() == 1);
    CHECK(p.discarded[0].seq == 0);
}

TEST_CASE("trigger time and merging") {
    auto a = flat("dev0", 0);
    a.timestamp_us = 0;
    a.trigger_pos = 9;  // channel-2 sample 4
    CHECK(trigger_time_us(a) == 800.0);
    auto b = flat("dev0", 1);
    b.timestamp_us = 25000;
    b.trigger_pos = 0;  // 24200 us after a: inside one buffer
    auto c = flat("dev0", 2);
    c.timestamp_us = 50000;
    c.trigger_pos = 0;  // 25000 us after b: still inside
    auto d = flat("dev0", 3);
    d.timestamp_us = 76000;  // 26000 us after c
    auto e = flat("dev1", 0);
    e.timestamp_us = 76100;  // other device
    const std::vector<WaveformRecord> recs = {a, b, c, d, e};
    const auto m = merge_consecutive(recs, 128.0);
    REQUIRE(m.records.size() == 3);
    CHECK(m.members[0] == std::vector<std::string>{"dev0#0", "dev0#1", "dev0#2"});
    CHECK(m.members[1] == std::vector<std::string>{"dev0#3"});
    CHECK(m.members[2] == std::vector<std::string>{"dev1#0"});
    CHECK(m.records[0] == a);
}

TEST_CASE("double peak detection") {
    CurationConfig cfg;
    auto two = flat("d", 0);
    bump(two, 40, 4, 400);
    bump(two, 80, 4, 250, 2);
    CHECK(has_double_peak(two, cfg));

    auto one = flat("d", 1);
    bump(one, 60, 8, 400);
    bump(one, 60, 5, 300, 2);
    CHECK_FALSE(has_double_peak(one, cfg));

    auto close = flat("d", 2);  // valley never drops a quarter below the smaller peak
    bump(close, 58, 5, 400);
    bump(close, 66, 5, 400);
    CHECK_FALSE(has_double_peak(close, cfg));

    auto tiny = flat("d", 3);
    bump(tiny, 30, 3, 15);
    bump(tiny, 90, 3, 15);
    CHECK_FALSE(has_double_peak(tiny, cfg));

    const std::vector<WaveformRecord> recs = {two, one, close, tiny};
    const auto p = extract_double_peak(recs, cfg);
    REQUIRE(p.kept.size() == 1);
    CHECK(p.kept[0].seq == 0);
    CHECK(p.discarded.size() == 3);
}

TEST_CASE("channel max trace smoothing") {
    auto r = flat("d", 0, 10);
    r.ch1[10] = 40;
    r.ch2[11] = 25;
    const auto raw = channel_max_trace(r, 1);
    CHECK(raw[10] == 30.0);
    CHECK(raw[11] == 15.0);
    const auto sm = channel_max_trace(r, 3);
    CHECK(sm[10] == doctest::Approx(15.0));
    CHECK(sm[0] == 0.0);
}

TEST_CASE("debris features and outlier removal") {
    auto r = flat("d", 0, 100);
    for (int i = 20; i < 30; ++i) r.ch1[static_cast<std::size_t>(i)] = 200;
    const auto f = debris_features(r);
    CHECK(f[0] == 10.0);
    CHECK(f[1] == 100.0);
    CHECK(f[2] == 10.0 * 100.0 * 100.0);

    std::vector<WaveformRecord> recs;
    for (std::uint64_t k = 0; k < 12; ++k) {
        auto x = flat("d", k);
        bump(x, 60, 5.0 + 0.1 * static_cast<double>(k), 300.0 + 5.0 * static_cast<double>(k));
        recs.push_back(x);
    }
    bump(recs[3], 60, 25, 1500);
    bump(recs[8], 60, 30, 1800);
    const auto p = remove_debris_outliers(recs, 2);
    REQUIRE(p.discarded.size() == 2);
    CHECK(p.discarded[0].seq == 3);
    CHECK(p.discarded[1].seq == 8);
    CHECK(p.kept.size() == 10);
    CHECK(remove_debris_outliers(recs, 0).kept.size() == 12);
    CHECK_THROWS_AS(remove_debris_outliers(recs, 13), ContractError);
}

TEST_CASE("stratified split and oversampling") {
    std::vector<Entry> es;
    for (int k = 0; k < 100; ++k) es.push_back({"a" + std::to_string(k), "d", 1, Split::Train, false});
    for (int k = 0; k < 10; ++k) es.push_back({"b" + std::to_string(k), "d", 0, Split::Train, false});
    auto shuffled = es;
    std::reverse(shuffled.begin(), shuffled.end());
    stratified_split(es, {0.6, 0.2, 0.2}, 3);
    stratified_split(shuffled, {0.6, 0.2, 0.2}, 3);
    const auto c1 = split_counts(es, 1);
    const auto c0 = split_counts(es, 0);
    CHECK(c1.at(Split::Train) == 60);
    CHECK(c1.at(Split::Val) == 20);
    CHECK(c1.at(Split::Test) == 20);
    CHECK(c0.at(Split::Train) == 6);
    CHECK(c0.at(Split::Val) == 2);
    CHECK(c0.at(Split::Test) == 2);
    std::map<std::string, Split> a, b;
    for (const auto& e : es) a[e.id] = e.split;
    for (const auto& e : shuffled) b[e.id] = e.split;
    CHECK(a == b);

    oversample(es, Split::Train);
    std::map<int, std::size_t> train;
    std::size_t dups = 0;
    for (const auto& e : es) {
        if (e.split == Split::Train) ++train[e.label];
        if (e.duplicate) {
            ++dups;
            CHECK(e.split == Split::Train);
            CHECK(e.label == 0);
        }
    }
    CHECK(train[0] == 60);
    CHECK(train[1] == 60);
    CHECK(dups == 54);
}

TEST_CASE("config validation names the key") {
    CurationConfig cfg;
    cfg.split_ratio = {0.5, 0.2, 0.2};
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "curation.split_ratio");
    }
}

TEST_CASE("curate a simulated campaign") {
    dropsim::CampaignConfig cc;
    cc.n_events = 400;
    cc.seed = 21;
    cc.scenario_mix = {0.5, 0.1, 0.1, 0.2, 0.1};
    cc.devices = {DeviceConfig{}, DeviceConfig{}};
    cc.devices[1].id = "dev1";
    cc.devices[1].seed = 9;
    const auto camp = dropsim::simulate_campaign(cc);
    std::vector<WaveformRecord> refs;
    for (const auto& d : cc.devices) {
        auto r = dropsim::build_reference_drops(d, 10);
        refs.insert(refs.end(), r.begin(), r.end());
    }

    CurationConfig cfg;
    const auto ds = curate(camp.records, refs, cfg);
    CHECK(ds.provenance.size() == camp.records.size());
    CHECK(ds.pool("dev0").size() == 10);
    CHECK(ds.pool("dev1").size() == 10);
    CHECK_THROWS_AS(ds.pool("dev9"), DataError);

    std::map<std::string, std::pair<std::size_t, std::size_t>> scen;  // scenario -> (records, agreeing)
    std::map<std::string, const WaveformRecord*> rec_by_id;
    for (const auto& r : camp.records) rec_by_id[r.id()] = &r;
    for (const auto& [id, d] : ds.provenance) {
        const auto& t = *rec_by_id.at(id)->truth;
        auto& s = scen[t.scenario];
        ++s.first;
        if (t.scenario == "ConsecutiveDouble") s.second += d == Disposition::DoublePeak;
        if (t.scenario == "NormalSingle") s.second += d == Disposition::Pure;
        if (t.scenario == "SpanTwoCycles") s.second += d == Disposition::Merged;
    }
    CHECK(scen["ConsecutiveDouble"].second >= 0.9 * scen["ConsecutiveDouble"].first);
    CHECK(scen["NormalSingle"].second >= 0.9 * scen["NormalSingle"].first);
    CHECK(scen["SpanTwoCycles"].second >= 0.9 * scen["SpanTwoCycles"].first);

    // val/test never contain oversampling copies; every entry resolves
    std::set<std::string> seen;
    for (const auto& e : ds.counting) {
        CHECK_NOTHROW(ds.record(e.id));
        if (e.duplicate) CHECK(e.split == Split::Train);
        else CHECK(seen.insert(e.id).second);
    }
    for (const auto& e : ds.species) CHECK(ds.provenance.at(e.id) == Disposition::Pure);

    const auto again = curate(camp.records, refs, cfg);
    CHECK(manifest(again, cfg) == manifest(ds, cfg));

    const auto dir = std::filesystem::temp_directory_path() / "pestsim_test_curation";
    std::filesystem::remove_all(dir);
    write_dataset(dir, ds, cfg);
    const auto back = read_dataset(dir);
    CHECK(manifest(back, cfg) == manifest(ds, cfg));
    CHECK(back.records == ds.records);
    CHECK(back.references == ds.references);
}

TEST_CASE("curate refuses a task with an empty class") {
    dropsim::CampaignConfig cc;
    cc.n_events = 40;
    cc.scenario_mix = {1.0, 0.0, 0.0, 0.0, 0.0};
    const auto camp = dropsim::simulate_campaign(cc);
    CHECK_THROWS_AS(curate(camp.records, dropsim::build_reference_drops(cc.devices[0], 5), CurationConfig{}),
                    DataError);
}
