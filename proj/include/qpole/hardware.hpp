#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpole/duration_matrix.hpp"
#include "qpole/quantum.hpp"

namespace qpole::hardware {

// Device-native phased-RX rotation: PRX(phi, theta) = exp(-i (X cos phi + Y sin phi) theta / 2).
struct PrxPulse {
    double phase = 0.0;  // drive-axis angle phi (rad)
    double angle = 0.0;  // rotation theta (rad)
    double duration_ns = 120.0;
};

// The compiled circuit always uses exactly three pulses; Z rotations are
// virtual and consume no pulse time.
using PulseSequence = std::array<PrxPulse, 3>;

inline quantum::Mat2 prx_unitary(const PrxPulse& p) {
    using quantum::Complex;
    const double c = std::cos(p.angle / 2.0), s = std::sin(p.angle / 2.0);
    // exp(-i n.sigma theta/2) = cos(theta/2) I - i sin(theta/2) (X cos phi + Y sin phi)
    const Complex off01 = Complex{0.0, -s} * std::polar(1.0, -p.phase);
    const Complex off10 = Complex{0.0, -s} * std::polar(1.0, p.phase);
    return quantum::Mat2{c, off01, off10, c};
}

// Three-pulse decomposition of Rx(theta) Rz(b3) Ry(b2) Rz(b1) H, equivalent up
// to a final virtual-Z rotation (invisible to the Z-basis measurement). Pulses
// are listed in application order. The published pulse pairs are written
// (rotation, phase); here each pulse carries them as (phase, rotation), the
// ordering of the PRX definition. Resolved empirically against the matrix
// oracle and frozen by test.
inline PulseSequence compile_to_prx(const quantum::CircuitInput& in) {
    constexpr double half_pi = std::numbers::pi / 2.0;
    const double b1 = in.angles.beta1, b2 = in.angles.beta2, b3 = in.angles.beta3;
    return PulseSequence{
        PrxPulse{half_pi, half_pi},           // Hadamard up to virtual-Z
        PrxPulse{half_pi - b1, b2},           // Ry(b2) with accumulated frame shift
        PrxPulse{-b1 - b3, in.theta},         // trainable Rx in the shifted frame
    };
}

// |<Z>_pulse - <Z>_ideal| on |0> for the compiled sequence.
inline double verify_equivalence(const quantum::CircuitInput& in) {
    const PulseSequence seq = compile_to_prx(in);
    quantum::Amplitudes psi;
    for (const PrxPulse& p : seq) {
        psi = quantum::apply(prx_unitary(p), psi);
    }
    const double z_pulse = quantum::expectation_z(psi);
    return std::abs(z_pulse - quantum::expectation_z(in));
}

enum class ExecutionPath { standard_stack, low_level };

inline const char* to_string(ExecutionPath p) {
    return p == ExecutionPath::standard_stack ? "standard_stack" : "low_level";
}

// Linear latency model T = fixed_overhead + n_shots * per_shot_s, plus the
// physical per-shot timing constants it must stay above.
struct TimingParams {
    double fixed_overhead_s = 0.0;
    double per_shot_s = 0.0;

    double reset_wait_us = 220.0;  // device default 398, optimized 220
    double readout_us = 1.0;
    double pulse_ns = 120.0;

    double physical_floor_s() const {
        return (reset_wait_us + 3.0 * pulse_ns * 1e-3 + readout_us) * 1e-6;
    }
};

struct LatencyEstimate {
    double iteration_time_s = 0.0;
    double iteration_rate_hz = 0.0;
    double max_control_freq_hz = 0.0;
};

inline LatencyEstimate iteration_time(std::int64_t n_shots, const TimingParams& timing) {
    if (n_shots < 1) {
        throw std::invalid_argument("iteration_time: n_shots must be >= 1");
    }
    LatencyEstimate e;
    e.iteration_time_s =
        timing.fixed_overhead_s + static_cast<double>(n_shots) * timing.per_shot_s;
    e.iteration_rate_hz = 1.0 / e.iteration_time_s;
    e.max_control_freq_hz = e.iteration_rate_hz;
    return e;
}

struct RateObservation {
    std::int64_t shots = 0;
    double rate_hz = 0.0;
};

// Published iteration rates for the two execution paths.
inline std::vector<RateObservation> builtin_rates(ExecutionPath path) {
    if (path == ExecutionPath::low_level) {
        return {{128, 6.23}, {256, 5.62}, {512, 4.28}, {1024, 2.71}};
    }
    return {{128, 0.144}, {256, 0.143}, {512, 0.142}, {1024, 0.144}};
}

// Ordinary least squares of iteration_time = a + b * n_shots on (shots, 1/rate).
inline TimingParams fit_timing(const std::vector<RateObservation>& obs) {
    if (obs.size() < 2) {
        throw std::invalid_argument("fit_timing: need at least 2 observations");
    }
    double sum_n = 0, sum_t = 0, sum_nn = 0, sum_nt = 0;
    for (const auto& o : obs) {
        const double n = static_cast<double>(o.shots);
        const double t = 1.0 / o.rate_hz;
        sum_n += n;
        sum_t += t;
        sum_nn += n * n;
        sum_nt += n * t;
    }
    const double m = static_cast<double>(obs.size());
    const double denom = m * sum_nn - sum_n * sum_n;
    if (denom == 0.0) {
        throw std::invalid_argument("fit_timing: degenerate design (all shot counts equal)");
    }
    TimingParams p;
    p.per_shot_s = (m * sum_nt - sum_n * sum_t) / denom;
    p.fixed_overhead_s = (sum_t - p.per_shot_s * sum_n) / m;
    return p;
}

struct FeasibilityCell {
    double train_freq_hz = 0.0;
    double inference_freq_hz = 0.0;
    std::int64_t shots = 0;
    double mean_duration_s = 0.0;
    double max_control_freq_hz = 0.0;
    bool latency_feasible = false;   // max_control_freq >= inference frequency
    bool duration_feasible = false;  // mean duration >= 9 s
};

struct FeasibilityReport {
    std::vector<FeasibilityCell> cells;
    std::vector<FeasibilityCell> jointly_feasible;
};

// Joins a duration matrix with the latency model: a cell is an admissible
// operating point when the hardware can keep up with the inference frequency
// and the policy balances for nearly the full episode.
inline FeasibilityReport feasibility_report(const DurationMatrix& matrix,
                                            const TimingParams& timing) {
    FeasibilityReport report;
    if (matrix.empty()) {
        return report;
    }
    for (std::size_t ti = 0; ti < matrix.train_freqs_hz.size(); ++ti) {
        for (std::size_t fi = 0; fi < matrix.inference_freqs_hz.size(); ++fi) {
            const DurationCell& cell = matrix.cells[ti][fi];
            if (!cell.present) {
                continue;
            }
            FeasibilityCell fc;
            fc.train_freq_hz = matrix.train_freqs_hz[ti];
            fc.inference_freq_hz = matrix.inference_freqs_hz[fi];
            fc.shots = matrix.shot_count;
            fc.mean_duration_s = cell.mean_s;
            fc.max_control_freq_hz = iteration_time(matrix.shot_count, timing).max_control_freq_hz;
            fc.latency_feasible = fc.max_control_freq_hz >= fc.inference_freq_hz;
            fc.duration_feasible = cell.mean_s >= 9.0;
            report.cells.push_back(fc);
            if (fc.latency_feasible && fc.duration_feasible) {
                report.jointly_feasible.push_back(fc);
            }
        }
    }
    return report;
}

}  // namespace qpole::hardware
