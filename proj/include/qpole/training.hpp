#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qpole/agents.hpp"
#include "qpole/dynamics.hpp"
#include "qpole/quantum.hpp"
#include "qpole/rng.hpp"

namespace qpole::training {

using quantum::Backend;

struct TrainConfig {
    double gamma = 0.99;
    double lr_actor = 0.05;
    double lr_critic = 0.05;
    int episodes = 500;  // cap
    double control_freq_hz = 50.0;
    Backend backend = Backend::analytic();
    std::uint64_t seed = 0;
    int success_window = 100;
    bool stop_on_success = true;
    // When > 0, snapshot the agent the first time it posts this many
    // consecutive max-return episodes, preserving a converged state even if
    // continued training later destabilizes the policy.
    int stable_window = 0;
    double huber_delta = 1.0;
    dynamics::EnvConfig env_template;

    dynamics::EnvConfig env_config() const {
        dynamics::EnvConfig e = env_template;
        e.control_freq_hz = control_freq_hz;
        return e;
    }

    // Maximum return at this frequency: one reward per step of a full episode.
    double success_return() const {
        return static_cast<double>(env_config().max_steps());
    }
};

template <class Agent>
struct Trajectory {
    std::vector<typename Agent::StepData> steps;
    double bootstrap_value = 0.0;  // V(s_T), used only when the episode was truncated
    bool terminated = false;

    double episode_return() const {
        double r = 0.0;
        for (const auto& s : steps) {
            r += s.reward;
        }
        return r;
    }
};

template <class Agent>
Trajectory<Agent> run_episode(const Agent& agent, const dynamics::EnvConfig& env,
                              const Backend& backend, rng::Engine& env_gen,
                              rng::Engine& policy_gen, rng::Engine& shot_gen) {
    Trajectory<Agent> traj;
    dynamics::CartState state = dynamics::reset(env_gen, env);
    int steps_completed = 0;
    while (true) {
        auto step_data =
            agent.act(dynamics::reduced_observation(state), backend, policy_gen, shot_gen);
        const auto result =
            dynamics::step(state, static_cast<dynamics::Action>(step_data.action), env,
                           steps_completed);
        step_data.reward = result.reward;
        step_data.done = result.terminated;
        traj.steps.push_back(std::move(step_data));
        state = result.next_state;
        ++steps_completed;
        if (result.terminated || result.truncated) {
            traj.terminated = result.terminated;
            break;
        }
    }
    traj.bootstrap_value =
        agent.value(dynamics::reduced_observation(state), backend, shot_gen);
    return traj;
}

// Backward recursion R_k = r_k + gamma * R_next * (1 - d_k), seeded with the
// bootstrap value. A terminal flag at step k cuts the bootstrap out of every
// return at or before k.
inline std::vector<double> compute_returns(const std::vector<double>& rewards,
                                           const std::vector<bool>& dones, double gamma,
                                           double bootstrap_value) {
    if (rewards.empty()) {
        throw std::invalid_argument("compute_returns: empty trajectory");
    }
    std::vector<double> returns(rewards.size());
    double r_next = bootstrap_value;
    for (int k = static_cast<int>(rewards.size()) - 1; k >= 0; --k) {
        r_next = rewards[k] + gamma * r_next * (dones[k] ? 0.0 : 1.0);
        returns[k] = r_next;
    }
    return returns;
}

template <class Agent>
std::vector<double> compute_returns(const Trajectory<Agent>& traj, double gamma) {
    std::vector<double> rewards;
    std::vector<bool> dones;
    rewards.reserve(traj.steps.size());
    dones.reserve(traj.steps.size());
    for (const auto& s : traj.steps) {
        rewards.push_back(s.reward);
        dones.push_back(s.done);
    }
    return compute_returns(rewards, dones, gamma, traj.bootstrap_value);
}

inline bool check_success(const std::vector<double>& returns, int window, double target) {
    if (static_cast<int>(returns.size()) < window) {
        return false;
    }
    double sum = 0.0;
    for (std::size_t i = returns.size() - window; i < returns.size(); ++i) {
        sum += returns[i];
    }
    return sum / window + 1e-9 >= target;
}

struct RunSummary {
    std::vector<double> returns;
    std::optional<int> solved_at;  // 1-based episode index
    std::optional<int> stable_at;  // first stable_window-long streak of max returns
    double wall_time_s = 0.0;
};

template <class Agent>
struct TrainResult {
    Agent agent;
    std::optional<Agent> stable_agent;  // snapshot taken at stable_at
    RunSummary summary;

    // Stable snapshot when one was taken, final weights otherwise.
    const Agent& best_agent() const {
        return stable_agent ? *stable_agent : agent;
    }
};

template <class Agent>
TrainResult<Agent> train_agent(const TrainConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    auto init_gen = rng::make_stream(cfg.seed, "init");
    auto env_gen = rng::make_stream(cfg.seed, "env");
    auto policy_gen = rng::make_stream(cfg.seed, "policy");
    auto shot_gen = rng::make_stream(cfg.seed, "shots");

    TrainResult<Agent> result{Agent::init(init_gen), {}, {}};
    result.agent.huber_delta = cfg.huber_delta;
    auto optimizers = result.agent.make_optimizers(cfg.lr_actor, cfg.lr_critic);
    const auto env = cfg.env_config();

    int streak = 0;
    for (int episode = 1; episode <= cfg.episodes; ++episode) {
        auto traj = run_episode(result.agent, env, cfg.backend, env_gen, policy_gen, shot_gen);
        const auto returns = compute_returns(traj, cfg.gamma);
        result.agent.update(traj.steps, returns, optimizers, cfg.backend, shot_gen);
        result.summary.returns.push_back(traj.episode_return());
        streak = traj.episode_return() >= cfg.success_return() ? streak + 1 : 0;
        if (cfg.stable_window > 0 && streak >= cfg.stable_window && !result.stable_agent) {
            result.stable_agent = result.agent;
            result.summary.stable_at = episode;
        }
        if (check_success(result.summary.returns, cfg.success_window, cfg.success_return())) {
            result.summary.solved_at = episode;
            if (cfg.stop_on_success) {
                break;
            }
        }
    }
    result.summary.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

// --- Checkpoint persistence ---------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t seed = 0;
    double control_freq_hz = 50.0;
    Backend backend = Backend::analytic();
    double gamma = 0.99;
    double lr_actor = 0.05;
    double lr_critic = 0.05;
    int episodes_trained = 0;
    std::optional<int> solved_at;
};

struct Checkpoint {
    int version = kCheckpointVersion;
    CheckpointMeta meta;
    std::variant<agents::ClassicalAgent, agents::HybridAgent> agent;

    bool is_hybrid() const {
        return std::holds_alternative<agents::HybridAgent>(agent);
    }
};

namespace detail {

inline nlohmann::json mlp_to_json(const neural::Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        nlohmann::json rows = nlohmann::json::array();
        for (int o = 0; o < l.out; ++o) {
            rows.push_back(std::vector<double>(
                l.weights.begin() + static_cast<std::ptrdiff_t>(o) * l.in,
                l.weights.begin() + static_cast<std::ptrdiff_t>(o + 1) * l.in));
        }
        layers.push_back({{"in", l.in},
                          {"out", l.out},
                          {"activation", l.act == neural::Activation::relu ? "relu" : "identity"},
                          {"weights", rows},
                          {"biases", l.biases}});
    }
    return nlohmann::json{{"layers", layers}};
}

inline neural::Mlp mlp_from_json(const nlohmann::json& j) {
    neural::Mlp net;
    for (const auto& lj : j.at("layers")) {
        neural::DenseLayer l;
        l.in = lj.at("in").get<int>();
        l.out = lj.at("out").get<int>();
        const auto act = lj.at("activation").get<std::string>();
        if (act == "relu") {
            l.act = neural::Activation::relu;
        } else if (act == "identity") {
            l.act = neural::Activation::identity;
        } else {
            throw std::runtime_error("checkpoint: unknown activation '" + act + "'");
        }
        for (const auto& row : lj.at("weights")) {
            const auto vals = row.get<std::vector<double>>();
            l.weights.insert(l.weights.end(), vals.begin(), vals.end());
        }
        l.biases = lj.at("biases").get<std::vector<double>>();
        if (static_cast<int>(l.weights.size()) != l.in * l.out ||
            static_cast<int>(l.biases.size()) != l.out) {
            throw std::runtime_error("checkpoint: layer shape mismatch");
        }
        net.layers.push_back(std::move(l));
    }
    if (net.layers.empty()) {
        throw std::runtime_error("checkpoint: empty network");
    }
    return net;
}

inline nlohmann::json backend_to_json(const Backend& b) {
    if (b.is_analytic()) {
        return {{"kind", "analytic"}};
    }
    return {{"kind", "sampled"},
            {"shots", b.n_shots},
            {"noise",
             {{"eps01", b.noise.eps01},
              {"eps10", b.noise.eps10},
              {"gate_depol", b.noise.gate_depol},
              {"depol_gates", b.noise.depol_gates}}}};
}

inline Backend backend_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "analytic") {
        return Backend::analytic();
    }
    if (kind != "sampled") {
        throw std::runtime_error("checkpoint: unknown backend kind '" + kind + "'");
    }
    quantum::NoiseParams noise;
    if (j.contains("noise")) {
        const auto& nj = j.at("noise");
        noise.eps01 = nj.at("eps01").get<double>();
        noise.eps10 = nj.at("eps10").get<double>();
        noise.gate_depol = nj.at("gate_depol").get<double>();
        noise.depol_gates = nj.at("depol_gates").get<int>();
    }
    return Backend::sampled_noisy(j.at("shots").get<std::int64_t>(), noise);
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
    nlohmann::json meta = {
        {"seed", ckpt.meta.seed},
        {"control_freq_hz", ckpt.meta.control_freq_hz},
        {"backend", detail::backend_to_json(ckpt.meta.backend)},
        {"shots", ckpt.meta.backend.n_shots},
        {"gamma", ckpt.meta.gamma},
        {"lr_actor", ckpt.meta.lr_actor},
        {"lr_critic", ckpt.meta.lr_critic},
        {"episodes_trained", ckpt.meta.episodes_trained},
        {"solved_at",
         ckpt.meta.solved_at ? nlohmann::json(*ckpt.meta.solved_at) : nlohmann::json(nullptr)},
    };
    nlohmann::json j = {{"version", ckpt.version}, {"meta", meta}};
    if (ckpt.is_hybrid()) {
        const auto& a = std::get<agents::HybridAgent>(ckpt.agent);
        j["actor"] = detail::mlp_to_json(a.actor_head);
        j["critic"] = detail::mlp_to_json(a.critic_head);
        j["theta_actor"] = a.theta_actor;
        j["theta_critic"] = a.theta_critic;
    } else {
        const auto& a = std::get<agents::ClassicalAgent>(ckpt.agent);
        j["actor"] = detail::mlp_to_json(a.actor);
        j["critic"] = detail::mlp_to_json(a.critic);
    }
    return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    Checkpoint ckpt;
    ckpt.version = j.at("version").get<int>();
    if (ckpt.version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(ckpt.version));
    }
    const auto& mj = j.at("meta");
    ckpt.meta.seed = mj.at("seed").get<std::uint64_t>();
    ckpt.meta.control_freq_hz = mj.at("control_freq_hz").get<double>();
    ckpt.meta.backend = detail::backend_from_json(mj.at("backend"));
    ckpt.meta.gamma = mj.at("gamma").get<double>();
    ckpt.meta.lr_actor = mj.at("lr_actor").get<double>();
    ckpt.meta.lr_critic = mj.at("lr_critic").get<double>();
    ckpt.meta.episodes_trained = mj.at("episodes_trained").get<int>();
    if (!mj.at("solved_at").is_null()) {
        ckpt.meta.solved_at = mj.at("solved_at").get<int>();
    }
    if (j.contains("theta_actor")) {
        agents::HybridAgent a;
        a.theta_actor = j.at("theta_actor").get<double>();
        a.theta_critic = j.at("theta_critic").get<double>();
        a.actor_head = detail::mlp_from_json(j.at("actor"));
        a.critic_head = detail::mlp_from_json(j.at("critic"));
        ckpt.agent = std::move(a);
    } else {
        agents::ClassicalAgent a;
        a.actor = detail::mlp_from_json(j.at("actor"));
        a.critic = detail::mlp_from_json(j.at("critic"));
        ckpt.agent = std::move(a);
    }
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
    }
    out << checkpoint_to_json(ckpt).dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: parse error in '" + path + "': " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace qpole::training
