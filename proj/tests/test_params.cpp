#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pestsim/errors.hpp"
#include "pestsim/params.hpp"

using namespace pestsim;

TEST_CASE("param set layout") {
    ParamSet p;
    CHECK(p.add("a", 2, 3) == 0);
    CHECK(p.add("b", 1, 2) == 1);
    CHECK(p.scalar_count() == 8);
    p.at("a")(1, 0) = 5.0;
    CHECK(p.scalar(3) == 5.0);
    p.scalar(6) = 2.0;
    CHECK(p.at("b")(0, 0) == 2.0);
    CHECK(p.contains("b"));
    CHECK_FALSE(p.contains("c"));
    CHECK_THROWS(p.at("c"));
    CHECK_THROWS(p.add("a", 1, 1));

    auto z = p.zeros_like();
    CHECK(z.scalar_count() == 8);
    CHECK(z.at("a").isZero());
    z.at("a").setConstant(1.0);
    p.axpy(2.0, z);
    CHECK(p.at("a")(1, 0) == 7.0);
    CHECK(p.at("a")(0, 0) == 2.0);
    CHECK(p.all_finite());
    p.at("b")(0, 1) = std::nan("");
    CHECK_FALSE(p.all_finite());
}

TEST_CASE("adam first step moves by lr against the gradient sign") {
    ParamSet p;
    p.add("w", 1, 3);
    p.at("w") << 1.0, -1.0, 0.5;
    auto g = p.zeros_like();
    g.at("w") << 4.0, -0.01, 0.0;
    Adam opt(p, {0.1, 0.9, 0.999, 1e-8});
    opt.step(p, g);
    CHECK(opt.steps() == 1);
    // bias-corrected m/sqrt(v) = sign(g) on the first step
    CHECK(p.at("w")(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p.at("w")(0, 1) == doctest::Approx(-0.9).epsilon(1e-5));
    CHECK(p.at("w")(0, 2) == 0.5);
}

TEST_CASE("adam minimizes a quadratic") {
    ParamSet p;
    p.add("x", 1, 2);
    p.at("x") << 3.0, -2.0;
    Adam opt(p, {0.05});
    for (int k = 0; k < 2000; ++k) {
        auto g = p.zeros_like();
        g.at("x") = 2.0 * p.at("x");
        opt.step(p, g);
    }
    CHECK(std::abs(p.at("x")(0, 0)) < 1e-2);
    CHECK(std::abs(p.at("x")(0, 1)) < 1e-2);
}

TEST_CASE("checkpoint round trip and format") {
    ParamSet p;
    p.add("layer.w", 2, 2);
    p.add("b", 1, 3);
    p.at("layer.w") << 1.5, -2.0, 3.25, 1e-300;
    p.at("b") << 0.1, 0.2, 0.3;
    const auto dir = std::filesystem::temp_directory_path() / "pestsim_test_params";
    std::filesystem::create_directories(dir);
    const auto path = dir / "p.pstm";
    save_checkpoint(path, p);
    const auto q = load_checkpoint(path);
    CHECK(q == p);
    CHECK(q.name(0) == "layer.w");
    // 4 + 1 + 4 + (2 + 7 + 8 + 32) + (2 + 1 + 8 + 24)
    CHECK(std::filesystem::file_size(path) == 93);
    std::ifstream in(path, std::ios::binary);
    char magic[5];
    in.read(magic, 5);
    CHECK(std::string(magic, 4) == "PSTM");
    CHECK(magic[4] == kCheckpointVersion);

    std::filesystem::resize_file(path, 40);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "none.pstm"), DataError);
}
