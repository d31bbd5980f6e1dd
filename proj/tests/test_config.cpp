#include <doctest.h>

#include <cstdlib>

#include "pestsim/config.hpp"
#include "pestsim/errors.hpp"

using namespace pestsim;
using namespace pestsim::config;

namespace {

std::string error_key(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<none>";
}

}  // namespace

TEST_CASE("defaults resolve and reparse to the same text") {
    const auto cfg = parse("");
    const auto text = resolved(cfg);
    CHECK(resolved(parse(text)) == text);
    CHECK(text.find("output_dir") == std::string::npos);
    CHECK(text.find("circuit.r_r = 56000\n") != std::string::npos);
    CHECK(text.find("curation.debris_count = auto\n") != std::string::npos);
    // keys are sorted
    std::vector<std::string> keys;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        keys.push_back(text.substr(pos, text.find(" = ", pos) - pos));
        pos = end + 1;
    }
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(keys.size() + 1 == known_keys().size());
}

TEST_CASE("values, comments and lists") {
    const auto cfg = parse(
        "# campaign\n"
        "seed = 9\n"
        "campaign.n_events = 50   # inline\n"
        "campaign.scenario_mix = 0.2, 0.2, 0.2, 0.2, 0.2\n"
        "geometry.layout = symmetric\n"
        "curation.debris_count = 4\n"
        "curation.oversample_first = true\n"
        "model.kernel_scales = 1, 3\n"
        "output_dir = runs/a\n");
    CHECK(cfg.seed == 9);
    CHECK(cfg.output_dir == "runs/a");
    CHECK(cfg.campaign_config().n_events == 50);
    CHECK(cfg.campaign_config().scenario_mix[3] == 0.2);
    CHECK(cfg.curation.debris_count == std::size_t{4});
    CHECK(cfg.curation.oversample_first);
    CHECK(cfg.model.kernel_scales == std::vector<int>{1, 3});
    CHECK(resolved(parse(resolved(cfg))) == resolved(cfg));
}

TEST_CASE("devices are derived from the seed") {
    auto cfg = parse("seed = 5\ncampaign.n_devices = 3\n");
    const auto d = cfg.devices();
    REQUIRE(d.size() == 3);
    CHECK(d[0].id == "dev0");
    CHECK(d[2].id == "dev2");
    CHECK(d[0].seed != d[1].seed);
    CHECK(parse("seed = 5\ncampaign.n_devices = 3\n").devices()[1].seed == d[1].seed);
    CHECK(parse("seed = 6\ncampaign.n_devices = 3\n").devices()[1].seed != d[1].seed);
    CHECK(cfg.campaign_config().devices.size() == 3);
}

TEST_CASE("errors name the offending key") {
    CHECK(error_key("nope = 1\n") == "nope");
    CHECK(error_key("seed = 1\nseed = 2\n") == "seed");
    CHECK(error_key("seed = x\n") == "seed");
    CHECK(error_key("campaign.n_events = -3\n") == "campaign.n_events");
    CHECK(error_key("campaign.species_mix = 0.5, 0.5\n") == "campaign.species_mix");
    CHECK(error_key("curation.split_ratio = 0.5, 0.5, 0.5\n") == "curation.split_ratio");
    CHECK(error_key("model.heads = 3\n") == "model.d_model");
    CHECK(error_key("model.k_ref = 30\ncampaign.reference_drops = 20\n") == "model.k_ref");
    CHECK(error_key("geometry.layout = diagonal\n") == "geometry.layout");
    CHECK(error_key("bench.species = Ant\n") == "bench.species");
    CHECK(error_key("just text\n") == "");
    CHECK_THROWS_AS(load("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("PESTSIM_SEED overrides the seed") {
    auto cfg = parse("seed = 1\n");
    setenv("PESTSIM_SEED", "77", 1);
    apply_environment(cfg);
    CHECK(cfg.seed == 77);
    setenv("PESTSIM_SEED", "abc", 1);
    CHECK_THROWS_AS(apply_environment(cfg), ConfigError);
    unsetenv("PESTSIM_SEED");
    apply_environment(cfg);
    CHECK(cfg.seed == 77);
}
