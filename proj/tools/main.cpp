// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
//
// emaglab command line: train / sample / analyze / sweep.
// Exit codes: 0 success, 2 configuration error, 3 numeric divergence.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "emaglab/config.hpp"
#include "emaglab/errors.hpp"
#include "emaglab/runio.hpp"

namespace fs = std::filesystem;
using namespace emaglab;

namespace {

fs::path output_root(const std::string& cli_out) {
    if (!cli_out.empty()) return cli_out;
    if (const char* env = std::getenv("EMAG_LAB_OUT"); env && *env) return env;
    return "runs";
}

struct CommonArgs {
    std::string config_path;
    std::string out;
    std::optional<int64_t> seed;
    int jobs = 1;
};

RunConfig load_with_overrides(const CommonArgs& args) {
    RunConfig cfg = load_config(args.config_path);
    if (args.seed) {
        if (cfg.raw.contains("train")) cfg.raw["train"]["seed"] = *args.seed;
        if (cfg.raw.contains("sample")) cfg.raw["sample"]["seed"] = *args.seed;
        cfg = parse_config(cfg.raw);
    }
    return cfg;
}

int cmd_train(const CommonArgs& args) {
    const RunConfig cfg = load_with_overrides(args);
    if (!cfg.model) throw ConfigError("train needs a model section with hyperparameters");
    if (!cfg.train) throw ConfigError("train needs a train section");
    if (!cfg.has_schedule) throw ConfigError("train needs a schedule section");

    const NoiseSchedule schedule = cfg.make_schedule();
    DatasetConfig data_cfg;
    data_cfg.image_size = cfg.model->image_size;
    data_cfg.n_classes = cfg.model->n_classes;

    const TrainResult result = train(*cfg.model, schedule, data_cfg, *cfg.train);

    const fs::path dir = output_root(args.out) /
                         ("train_" + config_hash(cfg) + "_seed" + std::to_string(cfg.train->seed));
    nlohmann::ordered_json extra;
    extra["seed"] = cfg.train->seed;
    extra["train_steps"] = cfg.train->steps;
    extra["mode"] = cfg.train->mode == TrainMode::Epsilon ? "eps" : "velocity";
    extra["schedule"] = {{"kind", schedule_kind_name(schedule.kind())}, {"steps", schedule.steps()}};
    extra["config_hash"] = config_hash(cfg);
    extra["final_loss"] = result.loss_curve.back();
    save_checkpoint(dir, result.params, extra);
    write_loss_curve_csv(dir / "loss_curve.csv", result.loss_curve);
    std::cout << dir.string() << "\n";
    return 0;
}

std::vector<SamplerTrajectory> run_batch(const ToyModelParams& model,
                                         const ToyModelParams* weak_model,
                                         const GuidanceConfig& guidance,
                                         const NoiseSchedule& schedule, uint64_t base_seed,
                                         int count, int jobs) {
    std::vector<SamplerTrajectory> out(static_cast<size_t>(count));
    if (jobs <= 1) {
        for (int i = 0; i < count; ++i)
            out[static_cast<size_t>(i)] =
                run_sampler(model, guidance, schedule, base_seed + static_cast<uint64_t>(i), weak_model);
        return out;
    }
    std::mutex mu;
    int next = 0;
    std::exception_ptr error;
    auto worker = [&]() {
        for (;;) {
            int idx;
            {
                std::lock_guard lock(mu);
                if (error || next >= count) return;
                idx = next++;
            }
            try {
                SamplerTrajectory traj = run_sampler(model, guidance, schedule,
                                                     base_seed + static_cast<uint64_t>(idx), weak_model);
                std::lock_guard lock(mu);
                out[static_cast<size_t>(idx)] = std::move(traj);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

int cmd_sample(const CommonArgs& args) {
    const RunConfig cfg = load_with_overrides(args);
    if (!cfg.checkpoint) throw ConfigError("sample needs model.checkpoint");
    if (!cfg.guidance) throw ConfigError("sample needs a guidance section");
    if (!cfg.has_schedule) throw ConfigError("sample needs a schedule section");

    const ToyModelParams model = load_checkpoint(*cfg.checkpoint);
    const NoiseSchedule schedule = cfg.make_schedule();
    std::optional<ToyModelParams> weak;
    if (cfg.weak_checkpoint) weak = load_checkpoint(*cfg.weak_checkpoint);

    const std::vector<SamplerTrajectory> trajs =
        run_batch(model, weak ? &*weak : nullptr, *cfg.guidance, schedule, cfg.sample.seed,
                  cfg.sample.n_samples, args.jobs);

    const fs::path dir = output_root(args.out) /
                         ("sample_" + config_hash(cfg) + "_seed" + std::to_string(cfg.sample.seed));
    write_run_outputs(dir, cfg, config_hash(cfg), trajs, cfg.sample.dump_trajectory);
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_analyze(const std::vector<std::string>& run_dirs) {
    for (const auto& dir : run_dirs) {
        const AnalyzeResult res = analyze_run(dir);
        std::cout << dir << " " << res.json.dump() << "\n";
    }
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const RunConfig base = load_with_overrides(args);
    if (!base.has_sweep) throw ConfigError("sweep needs a sweep section");
    if (!base.checkpoint) throw ConfigError("sweep needs model.checkpoint");
    if (!base.guidance) throw ConfigError("sweep needs a guidance section");

    const ToyModelParams model = load_checkpoint(*base.checkpoint);
    const NoiseSchedule schedule = base.make_schedule();
    std::optional<ToyModelParams> weak;
    if (base.weak_checkpoint) weak = load_checkpoint(*base.weak_checkpoint);

    struct Point {
        double w_cfg, w_e;
        RunConfig cfg;
        std::string hash;
        fs::path dir;
    };
    std::vector<Point> grid;
    for (double wc : base.sweep.w_cfg) {
        for (double we : base.sweep.w_e) {
            nlohmann::ordered_json raw = base.raw;
            raw["guidance"]["w_cfg"] = wc;
            raw["guidance"]["w_e"] = we;
            raw["sample"]["n_samples"] = base.sweep.seeds;
            raw["sample"]["dump_trajectory"] = false;
            RunConfig point_cfg = parse_config(raw);
            const std::string hash = config_hash(point_cfg);
            Point p{wc, we, std::move(point_cfg), hash, {}};
            p.dir = output_root(args.out) /
                    ("sample_" + hash + "_seed" + std::to_string(p.cfg.sample.seed));
            grid.push_back(std::move(p));
        }
    }

    // Grid points run in parallel; the table is written in grid order by the
    // single aggregator below.
    std::vector<nlohmann::ordered_json> rows(grid.size());
    std::mutex mu;
    size_t next = 0;
    std::exception_ptr error;
    auto worker = [&]() {
        for (;;) {
            size_t idx;
            {
                std::lock_guard lock(mu);
                if (error || next >= grid.size()) return;
                idx = next++;
            }
            try {
                const Point& p = grid[idx];
                const auto trajs = run_batch(model, weak ? &*weak : nullptr, *p.cfg.guidance,
                                             schedule, p.cfg.sample.seed, p.cfg.sample.n_samples, 1);
                write_run_outputs(p.dir, p.cfg, p.hash, trajs, false);
                const AnalyzeResult res = analyze_run(p.dir);
                nlohmann::ordered_json row = res.json;
                row["w_cfg"] = p.w_cfg;
                row["w_e"] = p.w_e;
                row["run_dir"] = p.dir.string();
                std::lock_guard lock(mu);
                rows[idx] = std::move(row);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    const int jobs = std::max(1, args.jobs);
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);

    const fs::path table_dir = output_root(args.out) / ("sweep_" + config_hash(base));
    fs::create_directories(table_dir);
    std::ofstream table(table_dir / "table.csv", std::ios::binary);
    table << "w_cfg,w_e,config_hash,frechet,precision,recall,density,coverage,run_dir\n";
    for (const auto& row : rows) {
        table << format_double(row.at("w_cfg").get<double>()) << ','
              << format_double(row.at("w_e").get<double>()) << ','
              << row.at("config_hash").get<std::string>() << ','
              << format_double(row.at("frechet").get<double>()) << ','
              << format_double(row.at("precision").get<double>()) << ','
              << format_double(row.at("recall").get<double>()) << ','
              << format_double(row.at("density").get<double>()) << ','
              << format_double(row.at("coverage").get<double>()) << ','
              << row.at("run_dir").get<std::string>() << '\n';
    }
    std::cout << (table_dir / "table.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emaglab: attention-EMA guidance laboratory on a toy diffusion transformer"};
    app.require_subcommand(1);

    CommonArgs args;
    std::vector<std::string> analyze_dirs;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", args.config_path, "JSON config path");
        if (needs_config) opt->required();
        sub->add_option("--seed", args.seed, "overrides the config seed");
        sub->add_option("--out", args.out, "output root (default $EMAG_LAB_OUT or ./runs)");
        sub->add_option("--jobs", args.jobs, "parallel workers")->check(CLI::PositiveNumber);
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a toy denoiser checkpoint");
    add_common(train_cmd, true);
    CLI::App* sample_cmd = app.add_subcommand("sample", "run guided sampling into a run directory");
    add_common(sample_cmd, true);
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "compute metrics for run directories");
    analyze_cmd->add_option("dirs", analyze_dirs, "run directories")->required();
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid sweep over guidance scales");
    add_common(sweep_cmd, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(args);
        if (sample_cmd->parsed()) return cmd_sample(args);
        if (analyze_cmd->parsed()) return cmd_analyze(analyze_dirs);
        if (sweep_cmd->parsed()) return cmd_sweep(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
