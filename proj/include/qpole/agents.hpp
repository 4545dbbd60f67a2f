#pragma once

#include <algorithm>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "qpole/dynamics.hpp"
#include "qpole/neural.hpp"
#include "qpole/quantum.hpp"
#include "qpole/rng.hpp"

namespace qpole::agents {

using dynamics::ReducedState;
using quantum::Backend;

inline constexpr int kNumActions = 2;
inline constexpr int kHybridCopies = 32;

struct LossReport {
    double actor_loss = 0.0;
    double critic_loss = 0.0;
};

inline int sample_action(const std::vector<double>& probs, rng::Engine& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(gen) < probs[0] ? 0 : 1;
}

inline void add_into(std::vector<double>& acc, const std::vector<double>& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += g[i];
    }
}

inline void add_into(neural::Gradients& acc, const neural::Gradients& g) {
    for (std::size_t li = 0; li < acc.d_weights.size(); ++li) {
        add_into(acc.d_weights[li], g.d_weights[li]);
        add_into(acc.d_biases[li], g.d_biases[li]);
    }
}

// Classical baseline: separate actor and critic networks, two hidden layers
// of 128 and 256 ReLU units, fed the reduced observation directly.
struct ClassicalAgent {
    neural::Mlp actor;   // 3 -> 128 -> 256 -> 2
    neural::Mlp critic;  // 3 -> 128 -> 256 -> 1
    double huber_delta = 1.0;

    struct Optimizers {
        neural::AdamState actor;
        neural::AdamState critic;
    };

    struct StepData {
        ReducedState obs;
        int action = 0;
        double reward = 0.0;
        double value = 0.0;
        double log_prob = 0.0;
        bool done = false;  // d_t, set on bound violation
        std::vector<double> probs;
        neural::ForwardCache actor_cache;
        neural::ForwardCache critic_cache;
    };

    static ClassicalAgent init(rng::Engine& gen) {
        using neural::Activation;
        ClassicalAgent a;
        a.actor = neural::make_mlp({3, 128, 256, kNumActions},
                                   {Activation::relu, Activation::relu, Activation::identity},
                                   gen);
        a.critic = neural::make_mlp({3, 128, 256, 1},
                                    {Activation::relu, Activation::relu, Activation::identity},
                                    gen);
        return a;
    }

    Optimizers make_optimizers(double lr_actor, double lr_critic) const {
        return Optimizers{neural::AdamState(actor.param_count(), lr_actor),
                          neural::AdamState(critic.param_count(), lr_critic)};
    }

    StepData act(const ReducedState& obs, const Backend&, rng::Engine& policy_gen,
                 rng::Engine&) const {
        StepData s;
        s.obs = obs;
        const double in[3] = {obs.x_dot, obs.phi, obs.phi_dot};
        const auto logits = neural::forward(actor, in, &s.actor_cache);
        const auto v = neural::forward(critic, in, &s.critic_cache);
        s.value = v[0];
        auto sm = neural::softmax_logprob(logits, 0);
        s.action = sample_action(sm.probs, policy_gen);
        auto chosen = neural::softmax_logprob(logits, s.action);
        s.probs = std::move(chosen.probs);
        s.log_prob = chosen.log_prob;
        return s;
    }

    double value(const ReducedState& obs, const Backend&, rng::Engine&) const {
        const double in[3] = {obs.x_dot, obs.phi, obs.phi_dot};
        return neural::forward(critic, in)[0];
    }

    struct EpisodeGradients {
        neural::Gradients actor;
        neural::Gradients critic;
        LossReport report;
    };

    // Episode losses use the stored v_k as the advantage baseline; the critic
    // loss re-enters through its own Huber term only.
    EpisodeGradients compute_gradients(const std::vector<StepData>& steps,
                                       const std::vector<double>& returns, const Backend&,
                                       rng::Engine&) const {
        if (steps.empty()) {
            throw std::invalid_argument("update: empty trajectory");
        }
        const double t = static_cast<double>(steps.size());
        EpisodeGradients g{neural::make_zero_gradients(actor),
                           neural::make_zero_gradients(critic),
                           {}};
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const StepData& s = steps[k];
            const double adv = returns[k] - s.value;
            g.report.actor_loss -= adv * s.log_prob / t;
            double dlogits[kNumActions];
            for (int a = 0; a < kNumActions; ++a) {
                const double onehot = (a == s.action) ? 1.0 : 0.0;
                dlogits[a] = adv / t * (s.probs[a] - onehot);
            }
            neural::backward_accumulate(actor, s.actor_cache, dlogits, g.actor);

            const double err = returns[k] - s.value;
            g.report.critic_loss += neural::huber(err, huber_delta) / t;
            const double dv[1] = {-neural::huber_grad(err, huber_delta) / t};
            neural::backward_accumulate(critic, s.critic_cache, dv, g.critic);
        }
        return g;
    }

    LossReport update(const std::vector<StepData>& steps, const std::vector<double>& returns,
                      Optimizers& opt, const Backend& backend, rng::Engine& shot_gen) {
        auto g = compute_gradients(steps, returns, backend, shot_gen);
        neural::adam_step(actor, g.actor, opt.actor);
        neural::adam_step(critic, g.critic, opt.critic);
        return g.report;
    }
};

// Hybrid agent: one single-qubit circuit per network, its scalar output
// replicated into all 32 head inputs. Circuit gradients reach the optimizer
// through the parameter-shift rule, bridged with the head backward pass by
// the chain rule.
struct HybridAgent {
    double theta_actor = 0.0;
    double theta_critic = 0.0;
    neural::Mlp actor_head;   // 32 -> 32 (relu) -> 2
    neural::Mlp critic_head;  // 32 -> 32 (relu) -> 1
    double huber_delta = 1.0;

    struct Optimizers {
        neural::AdamState actor_head;
        neural::AdamState critic_head;
        neural::AdamState theta_actor;
        neural::AdamState theta_critic;
    };

    struct StepData {
        ReducedState obs;
        int action = 0;
        double reward = 0.0;
        double value = 0.0;
        double log_prob = 0.0;
        bool done = false;
        std::vector<double> probs;
        quantum::CircuitInput actor_circuit;
        quantum::CircuitInput critic_circuit;
        neural::ForwardCache actor_cache;
        neural::ForwardCache critic_cache;
    };

    static HybridAgent init(rng::Engine& gen) {
        using neural::Activation;
        HybridAgent a;
        // The readout is a threshold feature of the state: to first order
        // f ~ sin(theta)*(arctan(xd) + arctan(phid)) - cos(theta)*arctan(phi).
        // Only angles with sin(theta) and -cos(theta) of equal sign give the
        // angle and angular-velocity terms a common direction, which is what
        // a stabilizing feedback law needs, so initialization is confined to
        // that quadrant (the head weights can absorb an overall sign).
        std::uniform_real_distribution<double> angle(0.55 * std::numbers::pi, 0.95 * std::numbers::pi);
        a.theta_actor = angle(gen);
        a.theta_critic = angle(gen);
        a.actor_head = neural::make_mlp({kHybridCopies, 32, kNumActions},
                                        {Activation::relu, Activation::identity}, gen);
        a.critic_head = neural::make_mlp({kHybridCopies, 32, 1},
                                         {Activation::relu, Activation::identity}, gen);
        return a;
    }

    Optimizers make_optimizers(double lr_actor, double lr_critic) const {
        return Optimizers{neural::AdamState(actor_head.param_count(), lr_actor),
                          neural::AdamState(critic_head.param_count(), lr_critic),
                          neural::AdamState(1, lr_actor), neural::AdamState(1, lr_critic)};
    }

    StepData act(const ReducedState& obs, const Backend& backend, rng::Engine& policy_gen,
                 rng::Engine& shot_gen) const {
        StepData s;
        s.obs = obs;
        const auto angles = quantum::encode_features(obs);
        s.actor_circuit = quantum::CircuitInput{angles, theta_actor};
        s.critic_circuit = quantum::CircuitInput{angles, theta_critic};

        const double f_actor = quantum::evaluate(s.actor_circuit, backend, shot_gen);
        std::vector<double> head_in(kHybridCopies, f_actor);
        const auto logits = neural::forward(actor_head, head_in, &s.actor_cache);

        const double f_critic = quantum::evaluate(s.critic_circuit, backend, shot_gen);
        std::fill(head_in.begin(), head_in.end(), f_critic);
        s.value = neural::forward(critic_head, head_in, &s.critic_cache)[0];

        auto sm = neural::softmax_logprob(logits, 0);
        s.action = sample_action(sm.probs, policy_gen);
        auto chosen = neural::softmax_logprob(logits, s.action);
        s.probs = std::move(chosen.probs);
        s.log_prob = chosen.log_prob;
        return s;
    }

    double value(const ReducedState& obs, const Backend& backend,
                 rng::Engine& shot_gen) const {
        const auto circ = quantum::CircuitInput{quantum::encode_features(obs), theta_critic};
        const double f = quantum::evaluate(circ, backend, shot_gen);
        const std::vector<double> head_in(kHybridCopies, f);
        return neural::forward(critic_head, head_in)[0];
    }

    struct EpisodeGradients {
        neural::Gradients actor_head;
        neural::Gradients critic_head;
        double theta_actor = 0.0;
        double theta_critic = 0.0;
        LossReport report;
    };

    // Head gradients come from ordinary backpropagation; the circuit angles
    // get the summed head-input gradient times the parameter-shift derivative,
    // evaluated under the same backend (fresh shot draws in sampled mode).
    EpisodeGradients compute_gradients(const std::vector<StepData>& steps,
                                       const std::vector<double>& returns,
                                       const Backend& backend, rng::Engine& shot_gen) const {
        if (steps.empty()) {
            throw std::invalid_argument("update: empty trajectory");
        }
        const double t = static_cast<double>(steps.size());
        EpisodeGradients g{neural::make_zero_gradients(actor_head),
                           neural::make_zero_gradients(critic_head),
                           0.0, 0.0, {}};
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const StepData& s = steps[k];
            const double adv = returns[k] - s.value;
            g.report.actor_loss -= adv * s.log_prob / t;
            double dlogits[kNumActions];
            for (int a = 0; a < kNumActions; ++a) {
                const double onehot = (a == s.action) ? 1.0 : 0.0;
                dlogits[a] = adv / t * (s.probs[a] - onehot);
            }
            auto step_g = neural::backward(actor_head, s.actor_cache, dlogits);
            add_into(g.actor_head, step_g);
            double df = 0.0;  // dL/df: head input gradients summed over the copies
            for (double d : step_g.d_input) {
                df += d;
            }
            g.theta_actor += df * quantum::parameter_shift_grad(s.actor_circuit, backend, shot_gen);

            const double err = returns[k] - s.value;
            g.report.critic_loss += neural::huber(err, huber_delta) / t;
            const double dv[1] = {-neural::huber_grad(err, huber_delta) / t};
            auto step_gc = neural::backward(critic_head, s.critic_cache, dv);
            add_into(g.critic_head, step_gc);
            double dfc = 0.0;
            for (double d : step_gc.d_input) {
                dfc += d;
            }
            g.theta_critic +=
                dfc * quantum::parameter_shift_grad(s.critic_circuit, backend, shot_gen);
        }
        return g;
    }

    LossReport update(const std::vector<StepData>& steps, const std::vector<double>& returns,
                      Optimizers& opt, const Backend& backend, rng::Engine& shot_gen) {
        auto g = compute_gradients(steps, returns, backend, shot_gen);
        neural::adam_step(actor_head, g.actor_head, opt.actor_head);
        neural::adam_step(critic_head, g.critic_head, opt.critic_head);
        neural::adam_step(std::span<double>(&theta_actor, 1),
                          std::span<const double>(&g.theta_actor, 1), opt.theta_actor);
        neural::adam_step(std::span<double>(&theta_critic, 1),
                          std::span<const double>(&g.theta_critic, 1), opt.theta_critic);
        return g.report;
    }
};

}  // namespace qpole::agents
