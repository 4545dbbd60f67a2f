#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "qpole/quantum.hpp"

using namespace qpole;
using quantum::Backend;
using quantum::CircuitInput;
using quantum::EncodingAngles;
using quantum::NoiseParams;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent 2x2 matrix-product oracle, written against raw std::complex
// arrays so it shares nothing with the library's matrix helpers.
struct OracleState {
    std::complex<double> a0, a1;
};

OracleState oracle_apply(const std::complex<double> m[2][2], OracleState s) {
    return {m[0][0] * s.a0 + m[0][1] * s.a1, m[1][0] * s.a0 + m[1][1] * s.a1};
}

double oracle_expectation_z(const CircuitInput& in) {
    using C = std::complex<double>;
    const C i{0.0, 1.0};
    const double b1 = in.angles.beta1, b2 = in.angles.beta2, b3 = in.angles.beta3;
    const double th = in.theta;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const C h[2][2] = {{inv_sqrt2, inv_sqrt2}, {inv_sqrt2, -inv_sqrt2}};
    const C rz1[2][2] = {{std::exp(-i * b1 / 2.0), 0.0}, {0.0, std::exp(i * b1 / 2.0)}};
    const C ry[2][2] = {{std::cos(b2 / 2), -std::sin(b2 / 2)},
                        {std::sin(b2 / 2), std::cos(b2 / 2)}};
    const C rz3[2][2] = {{std::exp(-i * b3 / 2.0), 0.0}, {0.0, std::exp(i * b3 / 2.0)}};
    const C rx[2][2] = {{std::cos(th / 2), -i * std::sin(th / 2)},
                        {-i * std::sin(th / 2), std::cos(th / 2)}};
    OracleState s{1.0, 0.0};
    s = oracle_apply(h, s);
    s = oracle_apply(rz1, s);
    s = oracle_apply(ry, s);
    s = oracle_apply(rz3, s);
    s = oracle_apply(rx, s);
    return std::norm(s.a0) - std::norm(s.a1);
}

CircuitInput random_input(rng::Engine& gen) {
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    return CircuitInput{{angle(gen), angle(gen), angle(gen)}, angle(gen)};
}

}  // namespace

TEST_CASE("encode_features applies arctan component-wise") {
    const auto a = quantum::encode_features({0.0, 0.0, 0.0});
    CHECK(a.beta1 == 0.0);
    CHECK(a.beta2 == 0.0);
    CHECK(a.beta3 == 0.0);
    const auto b = quantum::encode_features({1.0, 0.0, -1.0});
    CHECK(b.beta1 == doctest::Approx(kPi / 4).epsilon(1e-15));
    CHECK(b.beta2 == 0.0);
    CHECK(b.beta3 == doctest::Approx(-kPi / 4).epsilon(1e-15));
    const auto c = quantum::encode_features({1e6, 0.0, 0.0});
    CHECK(c.beta1 < kPi / 2);
    CHECK(c.beta1 > kPi / 2 - 1e-5);
}

TEST_CASE("expectation_z reference points") {
    CHECK(quantum::expectation_z(CircuitInput{}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(quantum::expectation_z(CircuitInput{{0, kPi / 2, 0}, 0}) ==
          doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(quantum::expectation_z(CircuitInput{{kPi / 2, 0, 0}, kPi / 2}) ==
          doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("closed form matches the matrix-product oracle on 1e4 random inputs") {
    auto gen = rng::make_stream(1, "quantum");
    double max_err = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const auto in = random_input(gen);
        max_err = std::max(max_err,
                           std::abs(quantum::expectation_z(in) - oracle_expectation_z(in)));
    }
    CHECK(max_err <= 1e-12);
}

TEST_CASE("circuit state stays normalized") {
    auto gen = rng::make_stream(2, "quantum");
    for (int i = 0; i < 100; ++i) {
        const auto psi = quantum::apply(quantum::circuit_unitary(random_input(gen)),
                                        quantum::Amplitudes{});
        CHECK(std::norm(psi.a0) + std::norm(psi.a1) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("sample_counts") {
    auto gen = rng::make_stream(3, "quantum");
    SUBCASE("deterministic outcome at <Z> = 1, noiseless") {
        const CircuitInput in{{kPi / 2, 0, 0}, kPi / 2};  // <Z> = +1
        const auto c = quantum::sample_counts(in, 100, NoiseParams{}, gen);
        CHECK(c.n0 == 100);
        CHECK(c.n1 == 0);
    }
    SUBCASE("readout error 1->0 shows up as a 0 fraction of eps10") {
        const CircuitInput in{{0, kPi / 2, 0}, 0};  // <Z> = -1
        NoiseParams noise;
        noise.eps10 = 0.0615;
        const std::int64_t n = 1000000;
        const auto c = quantum::sample_counts(in, n, noise, gen);
        const double frac = static_cast<double>(c.n0) / static_cast<double>(n);
        const double se = std::sqrt(0.0615 * (1 - 0.0615) / static_cast<double>(n));
        CHECK(std::abs(frac - 0.0615) < 4 * se);
    }
    SUBCASE("symmetric case is binomial around N/2") {
        const CircuitInput in{};  // <Z> = 0
        const std::int64_t n = 100000;
        const auto c = quantum::sample_counts(in, n, NoiseParams{}, gen);
        CHECK(c.n0 + c.n1 == n);
        const double se = std::sqrt(0.25 * static_cast<double>(n));
        CHECK(std::abs(static_cast<double>(c.n0) - n / 2.0) < 5 * se);
    }
    SUBCASE("zero shots is a contract violation") {
        CHECK_THROWS_AS(quantum::sample_counts(CircuitInput{}, 0, NoiseParams{}, gen),
                        std::invalid_argument);
    }
}

TEST_CASE("estimate_z arithmetic") {
    CHECK(quantum::estimate_z({100, 0}) == 1.0);
    CHECK(quantum::estimate_z({0, 100}) == -1.0);
    CHECK(quantum::estimate_z({75, 25}) == 0.5);
}

TEST_CASE("parameter-shift gradient, analytic mode") {
    auto gen = rng::make_stream(4, "quantum");
    SUBCASE("beta = 0 collapses f to 0 for all theta") {
        for (double th : {-2.0, 0.0, 0.7, 3.0}) {
            CHECK(quantum::parameter_shift_grad(CircuitInput{{0, 0, 0}, th},
                                                Backend::analytic(), gen) ==
                  doctest::Approx(0.0).epsilon(1e-15));
        }
    }
    SUBCASE("f = sin(theta) at beta = (pi/2, 0, 0) gives gradient cos(theta)") {
        for (double th : {0.0, 0.3, 1.2}) {
            CHECK(quantum::parameter_shift_grad(CircuitInput{{kPi / 2, 0, 0}, th},
                                                Backend::analytic(), gen) ==
                  doctest::Approx(std::cos(th)).epsilon(1e-12));
        }
    }
    SUBCASE("matches central finite differences on 100 random inputs") {
        for (int i = 0; i < 100; ++i) {
            const auto in = random_input(gen);
            const double h = 1e-6;
            CircuitInput p = in, m = in;
            p.theta += h;
            m.theta -= h;
            const double fd =
                (quantum::expectation_z(p) - quantum::expectation_z(m)) / (2 * h);
            CHECK(std::abs(quantum::parameter_shift_grad(in, Backend::analytic(), gen) - fd) <=
                  1e-6);
        }
    }
    SUBCASE("shift rule is exact, not an approximation") {
        // d<Z>/dtheta from the closed form directly.
        for (int i = 0; i < 200; ++i) {
            const auto in = random_input(gen);
            const double b1 = in.angles.beta1, b2 = in.angles.beta2, b3 = in.angles.beta3;
            const double exact =
                (std::cos(b1) * std::cos(b2) * std::sin(b3) + std::sin(b1) * std::cos(b3)) *
                    std::cos(in.theta) +
                std::cos(b1) * std::sin(b2) * std::sin(in.theta);
            CHECK(quantum::parameter_shift_grad(in, Backend::analytic(), gen) ==
                  doctest::Approx(exact).epsilon(1e-12));
        }
    }
}

TEST_CASE("shot-estimator standard deviation tracks sqrt((1-z^2)/N)") {
    auto gen = rng::make_stream(5, "quantum");
    const CircuitInput in{{0.3, 0.5, -0.2}, 0.8};
    const double z = quantum::expectation_z(in);
    for (std::int64_t n : {128, 1024}) {
        const int reps = 4000;
        double sum = 0.0, sum_sq = 0.0;
        for (int r = 0; r < reps; ++r) {
            const double est =
                quantum::estimate_z(quantum::sample_counts(in, n, NoiseParams{}, gen));
            sum += est;
            sum_sq += est * est;
        }
        const double mean = sum / reps;
        const double sd = std::sqrt((sum_sq / reps - mean * mean) * reps / (reps - 1.0));
        const double expected = std::sqrt((1.0 - z * z) / static_cast<double>(n));
        CHECK(std::abs(sd - expected) <= 0.2 * expected);
    }
}

TEST_CASE("readout-noise affine law at 1e6 shots") {
    auto gen = rng::make_stream(6, "quantum");
    const CircuitInput in{{0.4, -0.3, 0.9}, 1.1};
    const double z = quantum::expectation_z(in);
    const auto noise = NoiseParams::device_defaults();
    const std::int64_t n = 1000000;
    const double expected = (1.0 - noise.eps01 - noise.eps10) *
                                std::pow(1.0 - noise.gate_depol, 3) * z +
                            (noise.eps10 - noise.eps01);
    const double est = quantum::estimate_z(quantum::sample_counts(in, n, noise, gen));
    // SE of the estimator is 2*sqrt(p(1-p)/N) <= 1/sqrt(N).
    const double se = 1.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(est - expected) < 3 * se);
}

TEST_CASE("readout fidelity identity from the device error rates") {
    const auto noise = NoiseParams::device_defaults();
    CHECK(noise.eps01 == 0.0295);
    CHECK(noise.eps10 == 0.0615);
    CHECK(noise.readout_fidelity() == 1.0 - (0.0295 + 0.0615) / 2.0);
    CHECK(noise.readout_fidelity() == doctest::Approx(0.9545).epsilon(1e-12));
}
