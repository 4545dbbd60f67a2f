// Command-line driver for the CartPole hybrid-agent workbench: baseline
// ensembles, the train/inference compatibility sweep, the latency model, and
// result export.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qpole/experiments.hpp"

namespace {

using nlohmann::json;
namespace ex = qpole::experiments;

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json cfg = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) {
            throw std::runtime_error("cannot open config file '" + path + "'");
        }
        in >> cfg;
    }
    // --set a.b.c=value, value parsed as JSON when possible, else as string.
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("--set expects key=value, got '" + kv + "'");
        }
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::exception&) {
            value = raw;
        }
        json* node = &cfg;
        std::size_t pos = 0;
        while (true) {
            const auto dot = key.find('.', pos);
            const std::string part = key.substr(pos, dot - pos);
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            pos = dot + 1;
        }
    }
    return cfg;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    out << j.dump(2) << '\n';
}

void print_baseline(const ex::BaselineReport& report) {
    std::printf("%-18s %10s %10s %10s\n", "variant", "mean_eps", "std_eps", "unsolved");
    for (const auto& v : report.variants) {
        std::printf("%-18s %10.1f %10.1f %10d\n", v.name.c_str(), v.mean_episodes,
                    v.std_episodes, v.unsolved);
    }
}

void print_matrix(const qpole::DurationMatrix& m) {
    std::printf("\nmean balancing duration (s), %lld shots\n",
                static_cast<long long>(m.shot_count));
    std::printf("%12s", "train\\inf");
    for (double f : m.inference_freqs_hz) {
        std::printf(" %9.0fHz", f);
    }
    std::printf("\n");
    for (std::size_t ti = 0; ti < m.train_freqs_hz.size(); ++ti) {
        std::printf("%10.0fHz", m.train_freqs_hz[ti]);
        for (std::size_t fi = 0; fi < m.inference_freqs_hz.size(); ++fi) {
            const auto& c = m.cells[ti][fi];
            if (c.present) {
                std::printf(" %5.2f±%4.2f", c.mean_s, c.std_s);
            } else {
                std::printf(" %11s", "absent");
            }
        }
        std::printf("\n");
    }
}

void print_latency(const ex::LatencyReport& r) {
    std::printf("fitted timing (low-level):      fixed %.4f s, per-shot %.1f us\n",
                r.low_level.fixed_overhead_s, r.low_level.per_shot_s * 1e6);
    std::printf("fitted timing (standard stack): fixed %.4f s, per-shot %.1f us\n",
                r.standard_stack.fixed_overhead_s, r.standard_stack.per_shot_s * 1e6);
    std::printf("physical per-shot floor: %.1f us\n\n", r.low_level.physical_floor_s() * 1e6);
    std::printf("%8s %12s %12s %12s %12s %9s\n", "shots", "std obs", "std pred", "ll obs",
                "ll pred", "speedup");
    for (std::size_t i = 0; i < r.low_level_predictions.size(); ++i) {
        const auto& ll = r.low_level_predictions[i];
        const auto& st = r.standard_predictions[i];
        std::printf("%8lld %12.3f %12.3f %12.2f %12.2f %8.1fx\n",
                    static_cast<long long>(ll.shots), st.observed_rate_hz, st.predicted_rate_hz,
                    ll.observed_rate_hz, ll.predicted_rate_hz, r.speedups[i]);
    }
    if (r.feasibility) {
        std::printf("\nfeasibility: %zu/%zu cells jointly feasible (latency and duration)\n",
                    r.feasibility->jointly_feasible.size(), r.feasibility->cells.size());
    }
}

std::vector<qpole::hardware::RateObservation> rates_from_csv_or_builtin(
    const std::string& csv_path, qpole::hardware::ExecutionPath path) {
    if (csv_path.empty()) {
        return qpole::hardware::builtin_rates(path);
    }
    std::ifstream in(csv_path);
    if (!in) {
        throw std::runtime_error("cannot open rate CSV '" + csv_path + "'");
    }
    return ex::parse_rate_csv(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CartPole hybrid quantum-classical agent workbench"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "results";
    int seeds = -1;
    int workers = 1;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seeds", seeds, "override seed count");
    app.add_option("--workers", workers, "worker threads for independent runs");
    app.add_option("--set", overrides, "config override, key=value (repeatable)");

    auto* cmd_baseline = app.add_subcommand("baseline", "classical vs hybrid ensemble at 50 Hz");
    auto* cmd_sweep = app.add_subcommand("train-sweep", "train hybrid agents over the frequency grid");
    auto* cmd_eval = app.add_subcommand("eval-matrix", "evaluate duration matrices from sweep checkpoints");
    auto* cmd_latency = app.add_subcommand("latency", "fit and report the hardware latency model");
    auto* cmd_export = app.add_subcommand("export", "convert a matrices JSON file to CSV or JSON");

    std::string csv_low, csv_std, matrix_path;
    cmd_latency->add_option("--csv-low-level", csv_low, "override low-level rates (CSV shots,rate_hz)");
    cmd_latency->add_option("--csv-standard", csv_std, "override standard-stack rates");
    cmd_latency->add_option("--matrix", matrix_path, "duration-matrix JSON for the feasibility join");

    std::string export_in, export_out, export_format = "csv";
    cmd_export->add_option("--in", export_in, "matrices JSON produced by eval-matrix")->required();
    cmd_export->add_option("--output", export_out, "output file path")->required();
    cmd_export->add_option("--format", export_format, "csv or json");

    CLI11_PARSE(app, argc, argv);

    try {
        const json cfg = load_config(config_path, overrides);

        if (*cmd_baseline) {
            auto bc = ex::baseline_config_from_json(cfg.value("baseline", json::object()));
            if (seeds > 0) bc.seeds = seeds;
            bc.workers = workers;
            const auto report = ex::run_baseline(bc, out_dir);
            print_baseline(report);
            write_json(std::filesystem::path(out_dir) / "baseline_report.json",
                       ex::baseline_to_json(report));
        } else if (*cmd_sweep) {
            auto sc = ex::sweep_config_from_json(cfg.value("sweep", json::object()));
            if (seeds > 0) sc.seeds = seeds;
            sc.workers = workers;
            const auto paths = ex::run_train_sweep(sc, out_dir);
            std::printf("wrote %zu checkpoints under %s/sweep\n", paths.size(), out_dir.c_str());
        } else if (*cmd_eval) {
            auto sc = ex::sweep_config_from_json(cfg.value("sweep", json::object()));
            if (seeds > 0) sc.seeds = seeds;
            sc.workers = workers;
            const auto matrices = ex::eval_matrices(sc, out_dir);
            json out = json::array();
            for (const auto& m : matrices) {
                print_matrix(m);
                out.push_back(ex::matrix_to_json(m));
            }
            write_json(std::filesystem::path(out_dir) / "matrices.json", out);
            std::ofstream csv(std::filesystem::path(out_dir) / "matrices.csv");
            ex::export_matrix_csv(matrices, csv);
        } else if (*cmd_latency) {
            const auto low = rates_from_csv_or_builtin(csv_low, qpole::hardware::ExecutionPath::low_level);
            const auto std_stack =
                rates_from_csv_or_builtin(csv_std, qpole::hardware::ExecutionPath::standard_stack);
            std::optional<qpole::DurationMatrix> matrix;
            if (!matrix_path.empty()) {
                std::ifstream in(matrix_path);
                if (!in) {
                    throw std::runtime_error("cannot open matrix JSON '" + matrix_path + "'");
                }
                json mj;
                in >> mj;
                matrix = ex::matrix_from_json(mj.is_array() ? mj.at(0) : mj);
            }
            const auto report = ex::latency_report(low, std_stack, matrix);
            print_latency(report);
            json out = {{"low_level",
                         {{"fixed_overhead_s", report.low_level.fixed_overhead_s},
                          {"per_shot_s", report.low_level.per_shot_s}}},
                        {"standard_stack",
                         {{"fixed_overhead_s", report.standard_stack.fixed_overhead_s},
                          {"per_shot_s", report.standard_stack.per_shot_s}}},
                        {"speedups", report.speedups}};
            if (report.feasibility) {
                out["feasibility"] = ex::feasibility_to_json(*report.feasibility);
            }
            write_json(std::filesystem::path(out_dir) / "latency_report.json", out);
        } else if (*cmd_export) {
            std::ifstream in(export_in);
            if (!in) {
                throw std::runtime_error("cannot open '" + export_in + "'");
            }
            json mj;
            in >> mj;
            std::vector<qpole::DurationMatrix> matrices;
            if (mj.is_array()) {
                for (const auto& item : mj) {
                    matrices.push_back(ex::matrix_from_json(item));
                }
            } else {
                matrices.push_back(ex::matrix_from_json(mj));
            }
            if (export_format == "csv") {
                std::ofstream out(export_out);
                if (!out) {
                    throw std::runtime_error("cannot write '" + export_out + "'");
                }
                ex::export_matrix_csv(matrices, out);
            } else if (export_format == "json") {
                json out = json::array();
                for (const auto& m : matrices) {
                    out.push_back(ex::matrix_to_json(m));
                }
                write_json(export_out, out);
            } else {
                throw std::runtime_error("unknown export format '" + export_format + "'");
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
