#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dba/core.hpp"
#include "oracles.hpp"

using namespace dba;

TEST_CASE("splitmix64 matches the precomputed oracle value") {
    Rng rng{0};
    CHECK(splitmix64_next(rng) == oracle::k_splitmix_first_from_zero);
}

TEST_CASE("splitmix64 successive outputs differ") {
    Rng rng{0};
    uint64_t a = splitmix64_next(rng);
    uint64_t b = splitmix64_next(rng);
    CHECK(a != b);
}

TEST_CASE("splitmix64 is deterministic and tracks the reference") {
    Rng rng{0xDEADBEEF};
    uint64_t ref_state = 0xDEADBEEF;
    for (int i = 0; i < 1000; ++i)
        CHECK(splitmix64_next(rng) == oracle::splitmix64_ref(ref_state));
}

TEST_CASE("equal states produce equal streams of length 1e6") {
    Rng a{123456789};
    Rng b{123456789};
    for (int i = 0; i < 1'000'000; ++i)
        REQUIRE(splitmix64_next(a) == splitmix64_next(b));
}

TEST_CASE("rng_uniform first value from state 0") {
    Rng rng{0};
    double expected =
        static_cast<double>(oracle::k_splitmix_first_from_zero >> 11) * 0x1.0p-53;
    CHECK(rng_uniform(rng) == expected);
}

TEST_CASE("rng_uniform stays in [0,1)") {
    Rng rng{99};
    for (int i = 0; i < 100000; ++i) {
        double u = rng_uniform(rng);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("gaussian moments over 1e5 draws") {
    Rng rng{12345};
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double g = rng_gaussian(rng);
        sum += g;
        sum2 += g * g;
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(var > 0.95);
    CHECK(var < 1.05);
}

TEST_CASE("gaussian streams are seed-deterministic") {
    Rng a{7}, b{7};
    for (int i = 0; i < 1000; ++i)
        CHECK(rng_gaussian(a) == rng_gaussian(b));
}

TEST_CASE("project Linf clamps components") {
    std::vector<double> d{0.2, -0.3, 0.01};
    project(d, NormBudget{Norm::Linf, 0.05});
    CHECK(d[0] == doctest::Approx(0.05));
    CHECK(d[1] == doctest::Approx(-0.05));
    CHECK(d[2] == doctest::Approx(0.01));
}

TEST_CASE("project L2 rescales a norm-2 vector to the unit ball") {
    std::vector<double> d{2.0 / std::sqrt(2.0), 2.0 / std::sqrt(2.0)}; // norm 2
    std::vector<double> before = d;
    project(d, NormBudget{Norm::L2, 1.0});
    for (size_t i = 0; i < d.size(); ++i)
        CHECK(d[i] == doctest::Approx(before[i] / 2.0));
    CHECK(l2_norm(d) == doctest::Approx(1.0));
}

TEST_CASE("project is the identity inside the ball") {
    std::vector<double> d{0.01, -0.02, 0.03};
    std::vector<double> orig = d;
    project(d, NormBudget{Norm::Linf, 0.05});
    CHECK(d == orig);
    std::vector<double> e{0.1, 0.1};
    std::vector<double> orig_e = e;
    project(e, NormBudget{Norm::L2, 1.0});
    CHECK(e == orig_e);
}

TEST_CASE("project is idempotent and never grows the norm") {
    Rng rng{31337};
    for (int trial = 0; trial < 200; ++trial) {
        NormBudget budget{trial % 2 == 0 ? Norm::Linf : Norm::L2,
                          0.01 + rng_uniform(rng) * 0.5};
        std::vector<double> d(16);
        for (double& v : d)
            v = (rng_uniform(rng) - 0.5) * 2.0;
        std::vector<double> once = d;
        project(once, budget);
        if (budget.norm == Norm::Linf)
            CHECK(linf_norm(once) <= budget.epsilon + 1e-9);
        else
            CHECK(l2_norm(once) <= budget.epsilon + 1e-9);
        std::vector<double> twice = once;
        project(twice, budget);
        for (size_t i = 0; i < d.size(); ++i)
            CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-12));
    }
}

TEST_CASE("quantize rounds halves away from zero and hits the endpoints") {
    ImageTensor x(1, 1, 3);
    x.data = {0.5, 0.0, 1.0};
    QuantizedImage q = quantize(x);
    CHECK(q.data[0] == 128); // 127.5 rounds up
    CHECK(q.data[1] == 0);
    CHECK(q.data[2] == 255);
}

TEST_CASE("dequantize(quantize(x)) is within 1/510 per component") {
    Rng rng{2024};
    ImageTensor x(8, 8, 3);
    for (double& v : x.data)
        v = rng_uniform(rng);
    ImageTensor round_trip = dequantize(quantize(x));
    for (size_t i = 0; i < x.data.size(); ++i)
        CHECK(std::abs(round_trip.data[i] - x.data[i]) <= 1.0 / 510.0 + 1e-12);
}

TEST_CASE("quantize of dequantize is the identity on QuantizedImage") {
    Rng rng{555};
    for (int trial = 0; trial < 100; ++trial) {
        QuantizedImage q(4, 5, 3);
        for (auto& v : q.data)
            v = static_cast<uint8_t>(rng_below(rng, 256));
        CHECK(quantize(dequantize(q)) == q);
    }
}

TEST_CASE("margin_loss examples") {
    std::vector<double> p1{0.6, 0.3, 0.1};
    CHECK(margin_loss(p1, 0) == doctest::Approx(0.3));
    std::vector<double> p2{0.3, 0.6, 0.1};
    CHECK(margin_loss(p2, 0) == doctest::Approx(-0.3));
    std::vector<double> uniform(10, 0.1);
    for (int y = 0; y < 10; ++y)
        CHECK(margin_loss(uniform, y) == doctest::Approx(0.0));
}

TEST_CASE("margin_loss rejects out-of-range class index") {
    std::vector<double> p{0.5, 0.5};
    CHECK_THROWS_AS(margin_loss(p, 2), Error);
    CHECK_THROWS_AS(margin_loss(p, -1), Error);
}

TEST_CASE("margin sign characterizes misclassification with lowest-index ties") {
    Rng rng{909};
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> p(10);
        double sum = 0.0;
        for (double& v : p) {
            v = rng_uniform(rng);
            sum += v;
        }
        for (double& v : p)
            v /= sum;
        int y = static_cast<int>(rng_below(rng, 10));
        bool misclassified = argmax_lowest(p) != y;
        CHECK((margin_loss(p, y) < 0.0) == misclassified);
    }
}

TEST_CASE("apply_delta clips into [0,1]") {
    ImageTensor x(1, 2, 3);
    x.data = {0.0, 0.5, 1.0, 0.2, 0.9, 0.01};
    std::vector<double> delta{-0.5, 0.2, 0.5, -0.1, 0.3, -0.3};
    ImageTensor out = apply_delta(x, delta);
    CHECK(out.data[0] == 0.0);
    CHECK(out.data[1] == doctest::Approx(0.7));
    CHECK(out.data[2] == 1.0);
    CHECK(out.data[3] == doctest::Approx(0.1));
    CHECK(out.data[4] == 1.0);
    CHECK(out.data[5] == 0.0);
}
