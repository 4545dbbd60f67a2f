#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "qpole/experiments.hpp"

using namespace qpole;
using experiments::SweepConfig;
using hardware::ExecutionPath;

namespace {

DurationMatrix sample_matrix() {
    DurationMatrix m;
    m.shot_count = 256;
    m.train_freqs_hz = {20.0, 50.0};
    m.inference_freqs_hz = {20.0, 50.0, 100.0};
    m.cells.assign(2, std::vector<DurationCell>(3));
    m.cells[0][0] = {9.5, 0.5, 30, true};
    m.cells[0][2] = {4.25, 1.25, 30, true};
    m.cells[1][1] = {10.0, 0.0, 30, true};
    return m;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* name) {
        path = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("parallel_for") {
    SUBCASE("visits every index exactly once") {
        std::vector<std::atomic<int>> hits(257);
        experiments::parallel_for(hits.size(), 4,
                                  [&](std::size_t i) { hits[i].fetch_add(1); });
        for (const auto& h : hits) {
            CHECK(h.load() == 1);
        }
    }
    SUBCASE("propagates exceptions") {
        CHECK_THROWS_AS(experiments::parallel_for(
                            8, 2,
                            [](std::size_t i) {
                                if (i == 5) {
                                    throw std::runtime_error("boom");
                                }
                            }),
                        std::runtime_error);
    }
    SUBCASE("zero items is a no-op") {
        experiments::parallel_for(0, 4, [](std::size_t) { FAIL("should not run"); });
    }
}

TEST_CASE("duration matrix CSV export") {
    SUBCASE("row count and header") {
        std::ostringstream out;
        experiments::export_matrix_csv({sample_matrix()}, out);
        std::istringstream in(out.str());
        std::string line;
        REQUIRE(std::getline(in, line));
        CHECK(line == "train_freq_hz,inf_freq_hz,shots,mean_s,std_s,n");
        int rows = 0, absent = 0;
        while (std::getline(in, line)) {
            ++rows;
            if (line.find(",,0") != std::string::npos) {
                ++absent;
            }
        }
        CHECK(rows == 6);  // 2 train x 3 inference frequencies
        CHECK(absent == 3);
    }
    SUBCASE("no matrices gives a header-only file") {
        std::ostringstream out;
        experiments::export_matrix_csv({}, out);
        CHECK(out.str() == "train_freq_hz,inf_freq_hz,shots,mean_s,std_s,n\n");
    }
    SUBCASE("values survive the round trip through text") {
        std::ostringstream out;
        experiments::export_matrix_csv({sample_matrix()}, out);
        CHECK(out.str().find("20,20,256,9.5") != std::string::npos);
        CHECK(out.str().find("50,50,256,10,0,30") != std::string::npos);
    }
}

TEST_CASE("duration matrix JSON round trip") {
    const auto m = sample_matrix();
    const auto j = experiments::matrix_to_json(m);
    const auto back = experiments::matrix_from_json(j);
    CHECK(back.shot_count == m.shot_count);
    CHECK(back.train_freqs_hz == m.train_freqs_hz);
    CHECK(back.inference_freqs_hz == m.inference_freqs_hz);
    for (std::size_t ti = 0; ti < 2; ++ti) {
        for (std::size_t fi = 0; fi < 3; ++fi) {
            CHECK(back.cells[ti][fi].present == m.cells[ti][fi].present);
            CHECK(back.cells[ti][fi].mean_s == m.cells[ti][fi].mean_s);
            CHECK(back.cells[ti][fi].std_s == m.cells[ti][fi].std_s);
            CHECK(back.cells[ti][fi].n == m.cells[ti][fi].n);
        }
    }
    auto bad = j;
    bad["cells"][0]["train_freq_hz"] = 77.0;
    CHECK_THROWS_AS(experiments::matrix_from_json(bad), std::runtime_error);
}

TEST_CASE("parse_rate_csv") {
    SUBCASE("well-formed input") {
        std::istringstream in("shots,rate_hz\n128,6.23\n1024,2.71\n");
        const auto obs = experiments::parse_rate_csv(in);
        REQUIRE(obs.size() == 2);
        CHECK(obs[0].shots == 128);
        CHECK(obs[0].rate_hz == 6.23);
        CHECK(obs[1].shots == 1024);
    }
    SUBCASE("blank lines are skipped") {
        std::istringstream in("shots,rate_hz\n128,6.23\n\n256,5.62\n");
        CHECK(experiments::parse_rate_csv(in).size() == 2);
    }
    SUBCASE("missing header throws") {
        std::istringstream in("128,6.23\n");
        CHECK_THROWS_AS(experiments::parse_rate_csv(in), std::runtime_error);
    }
    SUBCASE("malformed row throws") {
        std::istringstream in("shots,rate_hz\n128;6.23\n");
        CHECK_THROWS_AS(experiments::parse_rate_csv(in), std::runtime_error);
    }
}

TEST_CASE("latency report from the built-in observations") {
    const auto low = hardware::builtin_rates(ExecutionPath::low_level);
    const auto std_stack = hardware::builtin_rates(ExecutionPath::standard_stack);
    const auto r = experiments::latency_report(low, std_stack, sample_matrix());
    REQUIRE(r.speedups.size() == 4);
    CHECK(r.speedups[0] == doctest::Approx(6.23 / 0.144).epsilon(1e-12));
    for (std::size_t i = 0; i < low.size(); ++i) {
        CHECK(std::abs(r.low_level_predictions[i].predicted_rate_hz -
                       r.low_level_predictions[i].observed_rate_hz) /
                  r.low_level_predictions[i].observed_rate_hz <
              0.10);
    }
    REQUIRE(r.feasibility.has_value());
    CHECK(r.feasibility->cells.size() == 3);  // present cells only
}

TEST_CASE("config parsing keeps defaults for absent fields") {
    SUBCASE("baseline") {
        const auto c = experiments::baseline_config_from_json(
            nlohmann::json{{"seeds", 2}, {"episode_cap", 10}});
        CHECK(c.seeds == 2);
        CHECK(c.episode_cap == 10);
        CHECK(c.control_freq_hz == 50.0);
        CHECK(c.lr_classical == 0.005);
        CHECK(c.variants.size() == 3);
    }
    SUBCASE("sweep") {
        const auto c = experiments::sweep_config_from_json(
            nlohmann::json{{"train_freqs_hz", std::vector<double>{50.0}},
                           {"seeds", 1},
                           {"episodes", 2},
                           {"noise", {{"eps01", 0.0}}}});
        CHECK(c.train_freqs_hz == std::vector<double>{50.0});
        CHECK(c.episodes == 2);
        CHECK(c.train_shots == 4096);
        CHECK(c.noise.eps01 == 0.0);
        CHECK(c.noise.eps10 == 0.0615);  // untouched default
        CHECK(c.inference_shots.size() == 4);
    }
}

TEST_CASE("miniature sweep, eval, and export pipeline") {
    TempDir tmp("qpole-test-sweep");
    SweepConfig cfg;
    cfg.train_freqs_hz = {50.0};
    cfg.inference_freqs_hz = {25.0, 50.0};
    cfg.inference_shots = {128};
    cfg.seeds = 1;
    cfg.episodes = 2;
    cfg.train_shots = 64;
    cfg.eval_episodes = 2;

    const auto written = experiments::run_train_sweep(cfg, tmp.path.string());
    REQUIRE(written.size() == 1);
    CHECK(std::filesystem::exists(written[0]));
    const auto ckpt = training::load_checkpoint(written[0]);
    CHECK(ckpt.is_hybrid());
    CHECK(ckpt.meta.control_freq_hz == 50.0);
    CHECK(ckpt.meta.episodes_trained == 2);

    const auto matrices = experiments::eval_matrices(cfg, tmp.path.string());
    REQUIRE(matrices.size() == 1);
    CHECK(matrices[0].shot_count == 128);
    REQUIRE(matrices[0].cells.size() == 1);
    REQUIRE(matrices[0].cells[0].size() == 2);
    for (const auto& cell : matrices[0].cells[0]) {
        CHECK(cell.present);
        CHECK(cell.n == 2);  // 1 seed x 2 episodes
        CHECK(cell.mean_s > 0.0);
        CHECK(cell.mean_s <= 10.0);
    }

    // Same config evaluates to the same pooled numbers.
    const auto again = experiments::eval_matrices(cfg, tmp.path.string());
    CHECK(again[0].cells[0][0].mean_s == matrices[0].cells[0][0].mean_s);
    CHECK(again[0].cells[0][1].std_s == matrices[0].cells[0][1].std_s);

    // A missing checkpoint leaves its cells absent instead of failing.
    SweepConfig wider = cfg;
    wider.train_freqs_hz = {50.0, 100.0};
    const auto partial = experiments::eval_matrices(wider, tmp.path.string());
    CHECK(partial[0].cells[0][0].present);
    CHECK_FALSE(partial[0].cells[1][0].present);

    // Export the real matrices end to end.
    std::ostringstream csv;
    experiments::export_matrix_csv(matrices, csv);
    CHECK(csv.str().find("50,25,128,") != std::string::npos);
    const auto round = experiments::matrix_from_json(experiments::matrix_to_json(matrices[0]));
    CHECK(round.cells[0][1].mean_s == matrices[0].cells[0][1].mean_s);
}

TEST_CASE("baseline aggregation arithmetic") {
    experiments::VariantReport v;
    v.name = "x";
    v.solved_at = {200, 400, std::nullopt};
    experiments::finalize_variant(v);
    CHECK(v.mean_episodes == 300.0);
    CHECK(v.std_episodes == doctest::Approx(std::sqrt(20000.0)).epsilon(1e-12));
    CHECK(v.unsolved == 1);

    experiments::VariantReport none;
    none.solved_at = {std::nullopt, std::nullopt};
    experiments::finalize_variant(none);
    CHECK(none.mean_episodes == 0.0);
    CHECK(none.unsolved == 2);

    const auto j = experiments::baseline_to_json(experiments::BaselineReport{{v}});
    CHECK(j["variants"][0]["name"] == "x");
    CHECK(j["variants"][0]["solved_at"][2].is_null());
    CHECK(j["variants"][0]["unsolved"] == 1);
}

TEST_CASE("baseline_train_config wires the variants correctly") {
    experiments::BaselineConfig cfg;
    const auto classical = experiments::baseline_train_config(cfg, "classical", 5);
    CHECK(classical.backend.is_analytic());
    CHECK(classical.lr_actor == 0.005);
    const auto hybrid = experiments::baseline_train_config(cfg, "hybrid-analytic", 5);
    CHECK(hybrid.backend.is_analytic());
    CHECK(hybrid.lr_actor == 0.05);
    const auto shots = experiments::baseline_train_config(cfg, "hybrid-shots", 5);
    CHECK_FALSE(shots.backend.is_analytic());
    CHECK(shots.backend.n_shots == 1024);
    CHECK(shots.backend.noise.eps01 == 0.0);
    CHECK_THROWS_AS(experiments::baseline_train_config(cfg, "nonsense", 5),
                    std::invalid_argument);
}
