#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "pestsim_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        std::ofstream(d / "small.cfg") << "seed = 3\n"
                                          "campaign.n_events = 300\n"
                                          "campaign.reference_drops = 12\n"
                                          "campaign.scenario_mix = 0.5, 0.1, 0.1, 0.2, 0.1\n"
                                          "model.k_ref = 4\n"
                                          "train.max_epochs = 1\n"
                                          "counting.epochs = 5\n";
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(PESTSIM_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string p(const std::string& name) { return (work() / name).string(); }

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write(const std::string& name, const std::string& text) { std::ofstream(work() / name) << text; }

}  // namespace

TEST_CASE("end-to-end run") {
    REQUIRE(run("simulate --config " + p("small.cfg") + " --out " + p("sim")) == 0);
    for (const char* f : {"config.resolved", "records.jsonl", "records.bin", "references.jsonl", "references.bin", "truth.csv"})
        CHECK(fs::exists(work() / "sim" / f));
    REQUIRE(run("curate --in " + p("sim") + " --out " + p("ds")) == 0);
    CHECK(fs::exists(work() / "ds" / "manifest.json"));
    CHECK(fs::exists(work() / "ds" / "dispositions.csv"));
    REQUIRE(run("train --task counting --data " + p("ds") + " --out " + p("cnt")) == 0);
    CHECK(fs::exists(work() / "cnt" / "counting.pstm"));
    REQUIRE(run("eval --task counting --data " + p("ds") + " --model " + p("cnt") + " --out " + p("cnt_eval") +
                " --per-device") == 0);
    CHECK(fs::exists(work() / "cnt_eval" / "metrics.json"));
    CHECK(fs::exists(work() / "cnt_eval" / "confusion_dev0.csv"));
    REQUIRE(run("train --task species --data " + p("ds") + " --out " + p("sp")) == 0);
    CHECK(fs::exists(work() / "sp" / "model.pstm.json"));
    REQUIRE(run("eval --task species --data " + p("ds") + " --model " + p("sp") + " --out " + p("sp_eval")) == 0);
    REQUIRE(run("bench-layout --config " + p("small.cfg") + " --out " + p("bench")) == 0);
    REQUIRE(run("report --in " + p(".") + " --out " + p("report")) == 0);
    for (const char* f : {"coverage_summary.csv", "metrics_table.csv", "bench_table.csv", "pca.csv",
                          "feature_histograms.csv"})
        CHECK(fs::exists(work() / "report" / f));
}

TEST_CASE("reruns from the resolved config are byte-identical") {
    REQUIRE(run("simulate --config " + p("sim/config.resolved") + " --out " + p("sim2")) == 0);
    for (const char* f : {"config.resolved", "records.jsonl", "records.bin", "truth.csv"})
        CHECK(slurp(work() / "sim" / f) == slurp(work() / "sim2" / f));
    REQUIRE(run("curate --in " + p("sim2") + " --out " + p("ds2")) == 0);
    CHECK(slurp(work() / "ds" / "manifest.json") == slurp(work() / "ds2" / "manifest.json"));
}

TEST_CASE("curate --oversample-first is recorded") {
    REQUIRE(run("curate --in " + p("sim") + " --out " + p("ds_po") + " --oversample-first") == 0);
    CHECK(slurp(work() / "ds_po" / "config.resolved").find("curation.oversample_first = true\n") != std::string::npos);
    CHECK(slurp(work() / "ds" / "config.resolved").find("curation.oversample_first = false\n") != std::string::npos);
}

TEST_CASE("PESTSIM_SEED changes the campaign") {
    const std::string cmd = "PESTSIM_SEED=11 " + std::string(PESTSIM_CLI) + " simulate --config " + p("small.cfg") +
                            " --out " + p("sim_env") + " > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(slurp(work() / "sim_env" / "config.resolved").find("seed = 11\n") != std::string::npos);
    CHECK(slurp(work() / "sim_env" / "records.jsonl") != slurp(work() / "sim" / "records.jsonl"));
}

TEST_CASE("exit codes") {
    write("bad_key.cfg", "campaign.n_eventz = 3\n");
    CHECK(run("simulate --config " + p("bad_key.cfg") + " --out " + p("x")) == 2);
    write("bad_value.cfg", "curation.valley_fraction = 2\n");
    CHECK(run("simulate --config " + p("bad_value.cfg") + " --out " + p("x")) == 2);
    CHECK(run("curate --in " + p("nowhere") + " --out " + p("x") + " --config " + p("small.cfg")) == 3);
    CHECK(run("eval --task counting --data " + p("nowhere") + " --model " + p("cnt")) == 3);
    write("slow.cfg", "bench.max_response_time = 1e-9\n");
    CHECK(run("bench-layout --config " + p("slow.cfg") + " --out " + p("x")) == 4);
    CHECK(run("bench-layout --config " + p("small.cfg")) == 2);  // nowhere to write
    CHECK(run("train --task colour --data " + p("ds") + " --out " + p("x")) != 0);
}
