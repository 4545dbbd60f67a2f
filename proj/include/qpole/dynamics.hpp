#pragma once

#include <cmath>
#include <stdexcept>

#include "qpole/rng.hpp"

namespace qpole::dynamics {

// Full physical state of the cart-pole system.
struct CartState {
    double x = 0.0;        // cart position (m)
    double x_dot = 0.0;    // cart velocity (m/s)
    double phi = 0.0;      // pole angle from vertical (rad)
    double phi_dot = 0.0;  // pole angular velocity (rad/s)
};

// Observation fed to the agents: the cart position is discarded.
struct ReducedState {
    double x_dot = 0.0;
    double phi = 0.0;
    double phi_dot = 0.0;
};

enum class Action { Left = 0, Right = 1 };

struct EnvConfig {
    double control_freq_hz = 50.0;
    double episode_duration_s = 10.0;

    double x_limit = 2.4;        // m
    double phi_limit = 0.418;    // rad, termination bound
    double reward_band = 0.2;    // rad, reward bound

    double gravity = 9.8;           // m/s^2
    double cart_mass = 1.0;         // kg
    double pole_mass = 0.1;         // kg
    double half_pole_length = 0.5;  // m
    double force_mag = 10.0;        // N

    double init_range = 0.05;  // uniform [-init_range, init_range] on all components

    double dt() const { return 1.0 / control_freq_hz; }
    int max_steps() const {
        return static_cast<int>(std::lround(episode_duration_s * control_freq_hz));
    }
};

struct StepResult {
    CartState next_state;
    double reward = 0.0;  // 0 or 1
    bool terminated = false;
    bool truncated = false;
};

inline bool in_bounds(const CartState& s, const EnvConfig& cfg) {
    return std::abs(s.x) <= cfg.x_limit && std::abs(s.phi) <= cfg.phi_limit;
}

inline CartState reset(rng::Engine& gen, const EnvConfig& cfg) {
    std::uniform_real_distribution<double> dist(-cfg.init_range, cfg.init_range);
    CartState s;
    s.x = dist(gen);
    s.x_dot = dist(gen);
    s.phi = dist(gen);
    s.phi_dot = dist(gen);
    return s;
}

// One explicit-Euler step of the standard cart-pole equations of motion.
// steps_completed counts steps taken before this one; truncation fires when
// the step count reaches max_steps.
inline StepResult step(const CartState& s, Action action, const EnvConfig& cfg,
                       int steps_completed) {
    if (!in_bounds(s, cfg)) {
        throw std::logic_error("step() called on a terminated episode");
    }
    const double force = (action == Action::Right) ? cfg.force_mag : -cfg.force_mag;
    const double total_mass = cfg.cart_mass + cfg.pole_mass;
    const double polemass_length = cfg.pole_mass * cfg.half_pole_length;

    const double cos_phi = std::cos(s.phi);
    const double sin_phi = std::sin(s.phi);
    const double temp =
        (force + polemass_length * s.phi_dot * s.phi_dot * sin_phi) / total_mass;
    const double phi_acc =
        (cfg.gravity * sin_phi - cos_phi * temp) /
        (cfg.half_pole_length *
         (4.0 / 3.0 - cfg.pole_mass * cos_phi * cos_phi / total_mass));
    const double x_acc = temp - polemass_length * phi_acc * cos_phi / total_mass;

    const double dt = cfg.dt();
    StepResult r;
    r.next_state.x = s.x + dt * s.x_dot;
    r.next_state.x_dot = s.x_dot + dt * x_acc;
    r.next_state.phi = s.phi + dt * s.phi_dot;
    r.next_state.phi_dot = s.phi_dot + dt * phi_acc;

    r.reward = (std::abs(r.next_state.phi) <= cfg.reward_band) ? 1.0 : 0.0;
    r.terminated = !in_bounds(r.next_state, cfg);
    r.truncated = !r.terminated && (steps_completed + 1 >= cfg.max_steps());
    return r;
}

inline ReducedState reduced_observation(const CartState& s) {
    return ReducedState{s.x_dot, s.phi, s.phi_dot};
}

}  // namespace qpole::dynamics
