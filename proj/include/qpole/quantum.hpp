#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "qpole/dynamics.hpp"
#include "qpole/rng.hpp"

namespace qpole::quantum {

using Complex = std::complex<double>;

// Row-major 2x2 complex matrix.
using Mat2 = std::array<Complex, 4>;

// Single-qubit pure state (amplitudes of |0>, |1>).
struct Amplitudes {
    Complex a0{1.0, 0.0};
    Complex a1{0.0, 0.0};
};

inline Mat2 matmul(const Mat2& a, const Mat2& b) {
    return Mat2{a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

inline Amplitudes apply(const Mat2& m, const Amplitudes& s) {
    return Amplitudes{m[0] * s.a0 + m[1] * s.a1, m[2] * s.a0 + m[3] * s.a1};
}

// Gate conventions: Rz(l) = diag(e^{-il/2}, e^{il/2}), Ry(l) = exp(-ilY/2),
// Rx(l) = exp(-ilX/2).
inline Mat2 gate_rz(double lambda) {
    return Mat2{std::polar(1.0, -lambda / 2.0), 0.0, 0.0, std::polar(1.0, lambda / 2.0)};
}

inline Mat2 gate_ry(double lambda) {
    const double c = std::cos(lambda / 2.0), s = std::sin(lambda / 2.0);
    return Mat2{c, -s, s, c};
}

inline Mat2 gate_rx(double lambda) {
    const double c = std::cos(lambda / 2.0), s = std::sin(lambda / 2.0);
    return Mat2{c, Complex{0.0, -s}, Complex{0.0, -s}, c};
}

inline Mat2 gate_hadamard() {
    const double h = 1.0 / std::sqrt(2.0);
    return Mat2{h, h, h, -h};
}

inline double expectation_z(const Amplitudes& s) {
    return std::norm(s.a0) - std::norm(s.a1);
}

// Angles produced by arctan feature preprocessing.
struct EncodingAngles {
    double beta1 = 0.0;
    double beta2 = 0.0;
    double beta3 = 0.0;
};

struct CircuitInput {
    EncodingAngles angles;
    double theta = 0.0;  // trainable rotation
};

// (beta1, beta2, beta3) = arctan of (x_dot, phi, phi_dot), in that order.
inline EncodingAngles encode_features(const dynamics::ReducedState& obs) {
    return EncodingAngles{std::atan(obs.x_dot), std::atan(obs.phi), std::atan(obs.phi_dot)};
}

// Full circuit unitary Rx(theta) Rz(b3) Ry(b2) Rz(b1) H.
inline Mat2 circuit_unitary(const CircuitInput& in) {
    Mat2 u = gate_hadamard();
    u = matmul(gate_rz(in.angles.beta1), u);
    u = matmul(gate_ry(in.angles.beta2), u);
    u = matmul(gate_rz(in.angles.beta3), u);
    u = matmul(gate_rx(in.theta), u);
    return u;
}

// <Z> of the circuit on |0>, closed form of the matrix product above.
inline double expectation_z(const CircuitInput& in) {
    const double b1 = in.angles.beta1, b2 = in.angles.beta2, b3 = in.angles.beta3;
    const double th = in.theta;
    return (std::cos(b1) * std::cos(b2) * std::sin(b3) + std::sin(b1) * std::cos(b3)) *
               std::sin(th) -
           std::cos(b1) * std::sin(b2) * std::cos(th);
}

struct NoiseParams {
    double eps01 = 0.0;       // P(read 1 | true 0)
    double eps10 = 0.0;       // P(read 0 | true 1)
    double gate_depol = 0.0;  // per-gate depolarizing probability
    int depol_gates = 3;      // compiled pulse count

    double readout_fidelity() const { return 1.0 - (eps01 + eps10) / 2.0; }

    // Defaults derived from the device characterization table: readout error
    // rates 2.95% / 6.15% and single-qubit RB fidelity 99.76%.
    static NoiseParams device_defaults() {
        NoiseParams p;
        p.eps01 = 0.0295;
        p.eps10 = 0.0615;
        p.gate_depol = 2.0 * (1.0 - 0.9976);
        return p;
    }
};

struct ShotCounts {
    std::int64_t n0 = 0;
    std::int64_t n1 = 0;
    std::int64_t total() const { return n0 + n1; }
};

// Probability of reading 0 after depolarizing shrinkage and readout flips.
inline double noisy_p0(double z, const NoiseParams& noise) {
    const double shrink = std::pow(1.0 - noise.gate_depol, noise.depol_gates);
    const double p0 = (1.0 + shrink * z) / 2.0;
    return p0 * (1.0 - noise.eps01) + (1.0 - p0) * noise.eps10;
}

inline ShotCounts sample_counts(const CircuitInput& in, std::int64_t n_shots,
                                const NoiseParams& noise, rng::Engine& gen) {
    if (n_shots < 1) {
        throw std::invalid_argument("sample_counts: n_shots must be >= 1");
    }
    const double p0 = noisy_p0(expectation_z(in), noise);
    std::binomial_distribution<std::int64_t> dist(n_shots, p0);
    ShotCounts c;
    c.n0 = dist(gen);
    c.n1 = n_shots - c.n0;
    return c;
}

inline double estimate_z(const ShotCounts& c) {
    if (c.total() < 1) {
        throw std::invalid_argument("estimate_z: no shots");
    }
    return 2.0 * static_cast<double>(c.n0) / static_cast<double>(c.total()) - 1.0;
}

// Circuit evaluator: analytic expectation values or finite-shot sampling,
// optionally with the readout/depolarizing noise model.
struct Backend {
    enum class Kind { analytic, sampled };

    Kind kind = Kind::analytic;
    std::int64_t n_shots = 0;
    NoiseParams noise;

    static Backend analytic() { return Backend{}; }
    static Backend sampled(std::int64_t shots) {
        return Backend{Kind::sampled, shots, NoiseParams{}};
    }
    static Backend sampled_noisy(std::int64_t shots, const NoiseParams& noise) {
        return Backend{Kind::sampled, shots, noise};
    }
    bool is_analytic() const { return kind == Kind::analytic; }
};

inline double evaluate(const CircuitInput& in, const Backend& backend, rng::Engine& gen) {
    if (backend.is_analytic()) {
        return expectation_z(in);
    }
    return estimate_z(sample_counts(in, backend.n_shots, backend.noise, gen));
}

// Parameter-shift gradient d<Z>/dtheta = (f(theta + pi/2) - f(theta - pi/2)) / 2.
// In sampled mode the two shifted circuits use independent shot draws.
inline double parameter_shift_grad(const CircuitInput& in, const Backend& backend,
                                   rng::Engine& gen) {
    constexpr double shift = std::numbers::pi / 2.0;
    CircuitInput plus = in, minus = in;
    plus.theta += shift;
    minus.theta -= shift;
    return 0.5 * (evaluate(plus, backend, gen) - evaluate(minus, backend, gen));
}

}  // namespace qpole::quantum
