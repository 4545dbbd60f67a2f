#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qpole/duration_matrix.hpp"
#include "qpole/hardware.hpp"
#include "qpole/training.hpp"

namespace qpole::experiments {

using quantum::Backend;
using quantum::NoiseParams;

// Runs fn(i) for i in [0, n) across a small worker pool. Items must be
// independent; exceptions propagate from the first failing item.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

// --- Baseline ensemble ---------------------------------------------------

struct BaselineConfig {
    std::vector<std::string> variants = {"classical", "hybrid-analytic", "hybrid-shots"};
    int seeds = 10;  // paper scale: 50
    int episode_cap = 1500;
    double control_freq_hz = 50.0;
    double gamma = 0.99;
    double lr_classical = 0.005;
    double lr_hybrid = 0.05;
    std::int64_t hybrid_shots = 1024;
    std::uint64_t base_seed = 1;
    int workers = 1;
};

struct VariantReport {
    std::string name;
    std::vector<std::optional<int>> solved_at;  // per seed
    double mean_episodes = 0.0;                 // over solved seeds
    double std_episodes = 0.0;
    int unsolved = 0;
};

struct BaselineReport {
    std::vector<VariantReport> variants;
};

inline void finalize_variant(VariantReport& v) {
    std::vector<double> solved;
    for (const auto& s : v.solved_at) {
        if (s) {
            solved.push_back(static_cast<double>(*s));
        } else {
            ++v.unsolved;
        }
    }
    if (!solved.empty()) {
        double sum = 0.0;
        for (double x : solved) {
            sum += x;
        }
        v.mean_episodes = sum / static_cast<double>(solved.size());
        double ss = 0.0;
        for (double x : solved) {
            ss += (x - v.mean_episodes) * (x - v.mean_episodes);
        }
        v.std_episodes =
            solved.size() > 1 ? std::sqrt(ss / static_cast<double>(solved.size() - 1)) : 0.0;
    }
}

inline training::TrainConfig baseline_train_config(const BaselineConfig& cfg,
                                                   const std::string& variant,
                                                   std::uint64_t seed) {
    training::TrainConfig tc;
    tc.gamma = cfg.gamma;
    tc.episodes = cfg.episode_cap;
    tc.control_freq_hz = cfg.control_freq_hz;
    tc.seed = seed;
    tc.stop_on_success = true;
    if (variant == "classical") {
        tc.lr_actor = tc.lr_critic = cfg.lr_classical;
        tc.backend = Backend::analytic();
    } else if (variant == "hybrid-analytic") {
        tc.lr_actor = tc.lr_critic = cfg.lr_hybrid;
        tc.backend = Backend::analytic();
    } else if (variant == "hybrid-shots") {
        tc.lr_actor = tc.lr_critic = cfg.lr_hybrid;
        tc.backend = Backend::sampled(cfg.hybrid_shots);
    } else {
        throw std::invalid_argument("unknown baseline variant '" + variant + "'");
    }
    return tc;
}

// Trains every (variant, seed) pair and aggregates episodes-to-solve. When
// out_dir is nonempty, one checkpoint per run is written beneath it.
inline BaselineReport run_baseline(const BaselineConfig& cfg, const std::string& out_dir = "") {
    BaselineReport report;
    for (const auto& variant : cfg.variants) {
        VariantReport v;
        v.name = variant;
        v.solved_at.resize(static_cast<std::size_t>(cfg.seeds));
        parallel_for(static_cast<std::size_t>(cfg.seeds), cfg.workers, [&](std::size_t i) {
            const std::uint64_t seed = cfg.base_seed + i;
            const auto tc = baseline_train_config(cfg, variant, seed);
            training::Checkpoint ckpt;
            ckpt.meta.seed = seed;
            ckpt.meta.control_freq_hz = tc.control_freq_hz;
            ckpt.meta.backend = tc.backend;
            ckpt.meta.gamma = tc.gamma;
            ckpt.meta.lr_actor = tc.lr_actor;
            ckpt.meta.lr_critic = tc.lr_critic;
            if (variant == "classical") {
                auto result = training::train_agent<agents::ClassicalAgent>(tc);
                v.solved_at[i] = result.summary.solved_at;
                ckpt.meta.episodes_trained = static_cast<int>(result.summary.returns.size());
                ckpt.meta.solved_at = result.summary.solved_at;
                ckpt.agent = std::move(result.agent);
            } else {
                auto result = training::train_agent<agents::HybridAgent>(tc);
                v.solved_at[i] = result.summary.solved_at;
                ckpt.meta.episodes_trained = static_cast<int>(result.summary.returns.size());
                ckpt.meta.solved_at = result.summary.solved_at;
                ckpt.agent = std::move(result.agent);
            }
            if (!out_dir.empty()) {
                const auto dir = std::filesystem::path(out_dir) / "baseline" / variant;
                std::filesystem::create_directories(dir);
                training::save_checkpoint((dir / ("seed" + std::to_string(seed) + ".json")).string(),
                                          ckpt);
            }
        });
        finalize_variant(v);
        report.variants.push_back(std::move(v));
    }
    return report;
}

// --- Training sweep and compatibility matrices ---------------------------

struct SweepConfig {
    std::vector<double> train_freqs_hz = {20.0, 25.0, 33.0, 50.0, 100.0};
    std::int64_t train_shots = 4096;
    int seeds = 3;  // paper scale: 10
    int episodes = 500;
    double gamma = 0.99;
    double lr = 0.05;
    std::vector<double> inference_freqs_hz = {20.0, 25.0, 33.0, 50.0, 100.0};
    std::vector<std::int64_t> inference_shots = {128, 256, 512, 1024};
    int stable_window = 10;  // checkpoint the first streak of max-return episodes
    int eval_episodes = 10;
    NoiseParams noise = NoiseParams::device_defaults();
    std::uint64_t base_seed = 4;
    int workers = 1;
};

inline std::string sweep_checkpoint_path(const std::string& out_dir, double train_freq,
                                         std::uint64_t seed) {
    std::ostringstream name;
    name << "f" << train_freq << "_seed" << seed << ".json";
    return (std::filesystem::path(out_dir) / "sweep" / name.str()).string();
}

// Trains one hybrid agent per (train frequency, seed) with finite-shot
// noiseless sampling and writes each checkpoint. Per-run failures are
// reported on stderr without aborting the rest of the sweep.
inline std::vector<std::string> run_train_sweep(const SweepConfig& cfg,
                                                const std::string& out_dir) {
    std::filesystem::create_directories(std::filesystem::path(out_dir) / "sweep");
    struct Unit {
        double freq;
        std::uint64_t seed;
    };
    std::vector<Unit> units;
    for (double f : cfg.train_freqs_hz) {
        for (int s = 0; s < cfg.seeds; ++s) {
            units.push_back({f, cfg.base_seed + static_cast<std::uint64_t>(s)});
        }
    }
    std::vector<std::string> paths(units.size());
    parallel_for(units.size(), cfg.workers, [&](std::size_t i) {
        const auto [freq, seed] = units[i];
        training::TrainConfig tc;
        tc.gamma = cfg.gamma;
        tc.lr_actor = tc.lr_critic = cfg.lr;
        tc.episodes = cfg.episodes;
        tc.control_freq_hz = freq;
        tc.backend = Backend::sampled(cfg.train_shots);
        // Decorrelate seeds across train frequencies.
        tc.seed = rng::stream_seed(seed, "sweep-f" + std::to_string(freq));
        tc.stop_on_success = false;
        tc.stable_window = cfg.stable_window;
        auto result = training::train_agent<agents::HybridAgent>(tc);
        training::Checkpoint ckpt;
        ckpt.meta.seed = tc.seed;
        ckpt.meta.control_freq_hz = freq;
        ckpt.meta.backend = tc.backend;
        ckpt.meta.gamma = tc.gamma;
        ckpt.meta.lr_actor = tc.lr_actor;
        ckpt.meta.lr_critic = tc.lr_critic;
        ckpt.meta.episodes_trained = static_cast<int>(result.summary.returns.size());
        ckpt.meta.solved_at = result.summary.solved_at;
        // Persist the stability snapshot: the converged policy, not whatever
        // state continued training left behind.
        ckpt.agent = result.best_agent();
        const auto path = sweep_checkpoint_path(out_dir, freq, seed);
        std::printf("train-sweep f=%g seed=%llu episodes=%d solved_at=%d stable_at=%d\n", freq,
                    static_cast<unsigned long long>(seed), cfg.episodes,
                    result.summary.solved_at.value_or(-1),
                    result.summary.stable_at.value_or(-1));
        try {
            training::save_checkpoint(path, ckpt);
            paths[i] = path;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "sweep: failed to save %s: %s\n", path.c_str(), e.what());
        }
    });
    std::vector<std::string> written;
    for (auto& p : paths) {
        if (!p.empty()) {
            written.push_back(std::move(p));
        }
    }
    return written;
}

// Balancing durations (seconds) over eval_episodes inference-only episodes.
inline std::vector<double> evaluate_durations(const agents::HybridAgent& agent,
                                              double inference_freq_hz, const Backend& backend,
                                              int episodes, std::uint64_t eval_seed) {
    dynamics::EnvConfig env;
    env.control_freq_hz = inference_freq_hz;
    auto env_gen = rng::make_stream(eval_seed, "eval-env");
    auto policy_gen = rng::make_stream(eval_seed, "eval-policy");
    auto shot_gen = rng::make_stream(eval_seed, "eval-shots");
    std::vector<double> durations;
    durations.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        auto traj = training::run_episode(agent, env, backend, env_gen, policy_gen, shot_gen);
        durations.push_back(static_cast<double>(traj.steps.size()) / inference_freq_hz);
    }
    return durations;
}

// One 5x5 duration matrix per inference shot count, pooled over seeds and
// evaluation episodes. Missing checkpoints leave the cell marked absent.
inline std::vector<DurationMatrix> eval_matrices(const SweepConfig& cfg,
                                                 const std::string& out_dir) {
    std::vector<DurationMatrix> matrices;
    if (cfg.eval_episodes <= 0) {
        std::fprintf(stderr, "eval-matrix: eval_episodes is 0, nothing to do\n");
        return matrices;
    }
    // Load checkpoints once.
    std::vector<std::vector<std::optional<agents::HybridAgent>>> agents_by_freq(
        cfg.train_freqs_hz.size());
    std::vector<std::vector<std::uint64_t>> seeds_by_freq(cfg.train_freqs_hz.size());
    for (std::size_t ti = 0; ti < cfg.train_freqs_hz.size(); ++ti) {
        for (int s = 0; s < cfg.seeds; ++s) {
            const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(s);
            const auto path = sweep_checkpoint_path(out_dir, cfg.train_freqs_hz[ti], seed);
            std::optional<agents::HybridAgent> agent;
            try {
                auto ckpt = training::load_checkpoint(path);
                agent = std::get<agents::HybridAgent>(ckpt.agent);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "eval-matrix: missing checkpoint %s (%s)\n", path.c_str(),
                             e.what());
            }
            agents_by_freq[ti].push_back(std::move(agent));
            seeds_by_freq[ti].push_back(seed);
        }
    }
    for (std::int64_t shots : cfg.inference_shots) {
        DurationMatrix m;
        m.shot_count = shots;
        m.train_freqs_hz = cfg.train_freqs_hz;
        m.inference_freqs_hz = cfg.inference_freqs_hz;
        m.cells.assign(cfg.train_freqs_hz.size(),
                       std::vector<DurationCell>(cfg.inference_freqs_hz.size()));
        struct Cell {
            std::size_t ti, fi;
        };
        std::vector<Cell> cells;
        for (std::size_t ti = 0; ti < cfg.train_freqs_hz.size(); ++ti) {
            for (std::size_t fi = 0; fi < cfg.inference_freqs_hz.size(); ++fi) {
                cells.push_back({ti, fi});
            }
        }
        parallel_for(cells.size(), cfg.workers, [&](std::size_t idx) {
            const auto [ti, fi] = cells[idx];
            const double inf_freq = cfg.inference_freqs_hz[fi];
            const Backend backend = Backend::sampled_noisy(shots, cfg.noise);
            std::vector<double> pooled;
            for (std::size_t si = 0; si < agents_by_freq[ti].size(); ++si) {
                const auto& agent = agents_by_freq[ti][si];
                if (!agent) {
                    continue;
                }
                const std::uint64_t eval_seed = rng::stream_seed(
                    seeds_by_freq[ti][si],
                    "eval-f" + std::to_string(inf_freq) + "-n" + std::to_string(shots));
                auto d = evaluate_durations(*agent, inf_freq, backend, cfg.eval_episodes,
                                            eval_seed);
                pooled.insert(pooled.end(), d.begin(), d.end());
            }
            DurationCell& cell = m.cells[ti][fi];
            if (pooled.empty()) {
                return;  // all checkpoints for this train frequency were absent
            }
            double sum = 0.0;
            for (double x : pooled) {
                sum += x;
            }
            cell.mean_s = sum / static_cast<double>(pooled.size());
            double ss = 0.0;
            for (double x : pooled) {
                ss += (x - cell.mean_s) * (x - cell.mean_s);
            }
            cell.std_s = pooled.size() > 1
                             ? std::sqrt(ss / static_cast<double>(pooled.size() - 1))
                             : 0.0;
            cell.n = static_cast<int>(pooled.size());
            cell.present = true;
        });
        matrices.push_back(std::move(m));
    }
    return matrices;
}

// --- Latency command -----------------------------------------------------

struct LatencyPrediction {
    std::int64_t shots = 0;
    double observed_rate_hz = 0.0;
    double predicted_rate_hz = 0.0;
};

struct LatencyReport {
    hardware::TimingParams low_level;
    hardware::TimingParams standard_stack;
    std::vector<LatencyPrediction> low_level_predictions;
    std::vector<LatencyPrediction> standard_predictions;
    std::vector<double> speedups;  // observed low-level / standard rate per shot count
    std::optional<hardware::FeasibilityReport> feasibility;
};

inline std::vector<LatencyPrediction> predict(const std::vector<hardware::RateObservation>& obs,
                                              const hardware::TimingParams& timing) {
    std::vector<LatencyPrediction> out;
    for (const auto& o : obs) {
        out.push_back({o.shots, o.rate_hz, hardware::iteration_time(o.shots, timing).iteration_rate_hz});
    }
    return out;
}

inline LatencyReport latency_report(
    const std::vector<hardware::RateObservation>& low_level_obs,
    const std::vector<hardware::RateObservation>& standard_obs,
    const std::optional<DurationMatrix>& matrix = std::nullopt) {
    LatencyReport r;
    r.low_level = hardware::fit_timing(low_level_obs);
    r.standard_stack = hardware::fit_timing(standard_obs);
    r.low_level_predictions = predict(low_level_obs, r.low_level);
    r.standard_predictions = predict(standard_obs, r.standard_stack);
    for (std::size_t i = 0; i < low_level_obs.size() && i < standard_obs.size(); ++i) {
        r.speedups.push_back(low_level_obs[i].rate_hz / standard_obs[i].rate_hz);
    }
    if (matrix) {
        r.feasibility = hardware::feasibility_report(*matrix, r.low_level);
    }
    return r;
}

// CSV with header "shots,rate_hz".
inline std::vector<hardware::RateObservation> parse_rate_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("shots,rate_hz", 0) != 0) {
        throw std::runtime_error("rate CSV: expected header 'shots,rate_hz'");
    }
    std::vector<hardware::RateObservation> obs;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream row(line);
        hardware::RateObservation o;
        char comma = 0;
        if (!(row >> o.shots >> comma >> o.rate_hz) || comma != ',') {
            throw std::runtime_error("rate CSV: malformed row '" + line + "'");
        }
        obs.push_back(o);
    }
    return obs;
}

// --- Result export -------------------------------------------------------

inline void export_matrix_csv(const std::vector<DurationMatrix>& matrices, std::ostream& out) {
    out << "train_freq_hz,inf_freq_hz,shots,mean_s,std_s,n\n";
    out.precision(17);
    for (const auto& m : matrices) {
        for (std::size_t ti = 0; ti < m.train_freqs_hz.size(); ++ti) {
            for (std::size_t fi = 0; fi < m.inference_freqs_hz.size(); ++fi) {
                const auto& c = m.cells[ti][fi];
                out << m.train_freqs_hz[ti] << ',' << m.inference_freqs_hz[fi] << ','
                    << m.shot_count << ',';
                if (c.present) {
                    out << c.mean_s << ',' << c.std_s << ',' << c.n << '\n';
                } else {
                    out << ",,0\n";
                }
            }
        }
    }
}

inline nlohmann::json matrix_to_json(const DurationMatrix& m) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t ti = 0; ti < m.train_freqs_hz.size(); ++ti) {
        for (std::size_t fi = 0; fi < m.inference_freqs_hz.size(); ++fi) {
            const auto& c = m.cells[ti][fi];
            cells.push_back({{"train_freq_hz", m.train_freqs_hz[ti]},
                             {"inf_freq_hz", m.inference_freqs_hz[fi]},
                             {"present", c.present},
                             {"mean_s", c.mean_s},
                             {"std_s", c.std_s},
                             {"n", c.n}});
        }
    }
    return {{"shot_count", m.shot_count},
            {"train_freqs_hz", m.train_freqs_hz},
            {"inference_freqs_hz", m.inference_freqs_hz},
            {"cells", cells}};
}

inline DurationMatrix matrix_from_json(const nlohmann::json& j) {
    DurationMatrix m;
    m.shot_count = j.at("shot_count").get<std::int64_t>();
    m.train_freqs_hz = j.at("train_freqs_hz").get<std::vector<double>>();
    m.inference_freqs_hz = j.at("inference_freqs_hz").get<std::vector<double>>();
    m.cells.assign(m.train_freqs_hz.size(),
                   std::vector<DurationCell>(m.inference_freqs_hz.size()));
    for (const auto& cj : j.at("cells")) {
        const double tf = cj.at("train_freq_hz").get<double>();
        const double ff = cj.at("inf_freq_hz").get<double>();
        std::size_t ti = 0, fi = 0;
        while (ti < m.train_freqs_hz.size() && m.train_freqs_hz[ti] != tf) ++ti;
        while (fi < m.inference_freqs_hz.size() && m.inference_freqs_hz[fi] != ff) ++fi;
        if (ti == m.train_freqs_hz.size() || fi == m.inference_freqs_hz.size()) {
            throw std::runtime_error("matrix JSON: cell frequency not in grid");
        }
        DurationCell& c = m.cells[ti][fi];
        c.present = cj.at("present").get<bool>();
        c.mean_s = cj.at("mean_s").get<double>();
        c.std_s = cj.at("std_s").get<double>();
        c.n = cj.at("n").get<int>();
    }
    return m;
}

inline nlohmann::json feasibility_to_json(const hardware::FeasibilityReport& r) {
    auto cell_json = [](const hardware::FeasibilityCell& c) {
        return nlohmann::json{{"train_freq_hz", c.train_freq_hz},
                              {"inf_freq_hz", c.inference_freq_hz},
                              {"shots", c.shots},
                              {"mean_duration_s", c.mean_duration_s},
                              {"max_control_freq_hz", c.max_control_freq_hz},
                              {"latency_feasible", c.latency_feasible},
                              {"duration_feasible", c.duration_feasible}};
    };
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        cells.push_back(cell_json(c));
    }
    nlohmann::json feasible = nlohmann::json::array();
    for (const auto& c : r.jointly_feasible) {
        feasible.push_back(cell_json(c));
    }
    return {{"cells", cells}, {"jointly_feasible", feasible}};
}

inline nlohmann::json baseline_to_json(const BaselineReport& r) {
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& v : r.variants) {
        nlohmann::json solved = nlohmann::json::array();
        for (const auto& s : v.solved_at) {
            solved.push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
        }
        variants.push_back({{"name", v.name},
                            {"solved_at", solved},
                            {"mean_episodes", v.mean_episodes},
                            {"std_episodes", v.std_episodes},
                            {"unsolved", v.unsolved}});
    }
    return {{"variants", variants}};
}

// --- Config file ---------------------------------------------------------

inline NoiseParams noise_from_json(const nlohmann::json& j) {
    NoiseParams n = NoiseParams::device_defaults();
    if (j.contains("eps01")) n.eps01 = j.at("eps01").get<double>();
    if (j.contains("eps10")) n.eps10 = j.at("eps10").get<double>();
    if (j.contains("gate_depol")) n.gate_depol = j.at("gate_depol").get<double>();
    if (j.contains("depol_gates")) n.depol_gates = j.at("depol_gates").get<int>();
    return n;
}

// Fields absent from the JSON keep their desk-scale defaults.
inline BaselineConfig baseline_config_from_json(const nlohmann::json& j) {
    BaselineConfig c;
    if (j.contains("variants")) c.variants = j.at("variants").get<std::vector<std::string>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<int>();
    if (j.contains("episode_cap")) c.episode_cap = j.at("episode_cap").get<int>();
    if (j.contains("control_freq_hz")) c.control_freq_hz = j.at("control_freq_hz").get<double>();
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    if (j.contains("lr_classical")) c.lr_classical = j.at("lr_classical").get<double>();
    if (j.contains("lr_hybrid")) c.lr_hybrid = j.at("lr_hybrid").get<double>();
    if (j.contains("hybrid_shots")) c.hybrid_shots = j.at("hybrid_shots").get<std::int64_t>();
    if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
    return c;
}

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
    SweepConfig c;
    if (j.contains("train_freqs_hz"))
        c.train_freqs_hz = j.at("train_freqs_hz").get<std::vector<double>>();
    if (j.contains("train_shots")) c.train_shots = j.at("train_shots").get<std::int64_t>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<int>();
    if (j.contains("episodes")) c.episodes = j.at("episodes").get<int>();
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("inference_freqs_hz"))
        c.inference_freqs_hz = j.at("inference_freqs_hz").get<std::vector<double>>();
    if (j.contains("inference_shots"))
        c.inference_shots = j.at("inference_shots").get<std::vector<std::int64_t>>();
    if (j.contains("stable_window")) c.stable_window = j.at("stable_window").get<int>();
    if (j.contains("eval_episodes")) c.eval_episodes = j.at("eval_episodes").get<int>();
    if (j.contains("noise")) c.noise = noise_from_json(j.at("noise"));
    if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
    return c;
}

}  // namespace qpole::experiments
