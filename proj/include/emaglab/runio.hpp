// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "emaglab/config.hpp"
#include "emaglab/metrics.hpp"
#include "emaglab/sampler.hpp"

namespace emaglab {

/// Checkpoint layout: <dir>/manifest.json plus one flat-CSV file per weight
/// tensor under <dir>/weights/.
void save_checkpoint(const std::filesystem::path& dir, const ToyModelParams& params,
                     const nlohmann::ordered_json& extra);
ToyModelParams load_checkpoint(const std::filesystem::path& dir);
nlohmann::ordered_json load_checkpoint_manifest(const std::filesystem::path& dir);

void write_loss_curve_csv(const std::filesystem::path& path, const std::vector<double>& curve);

/// Writes one sampling run: manifest.json, samples/sample_XXX.csv,
/// diagnostics.csv, entropy.csv and (optionally) per-step tensor dumps plus
/// the trajectory.json index.
void write_run_outputs(const std::filesystem::path& dir, const RunConfig& cfg,
                       const std::string& hash, const std::vector<SamplerTrajectory>& trajectories,
                       bool dump_trajectory);

/// Loads every samples/sample_XXX.csv of a run as rows of a feature matrix.
Tensor load_run_samples(const std::filesystem::path& dir);

struct AnalyzeResult {
    MetricReport report;
    nlohmann::ordered_json json;
};

/// Metric report for one run directory: toy-Fréchet and PRDC of the run's
/// samples against a procedurally regenerated reference set, using the
/// metrics settings embedded in the run manifest. Also re-emits the entropy
/// trace as entropy_trace.csv next to metrics.json.
AnalyzeResult analyze_run(const std::filesystem::path& run_dir);

/// Flattens images (rows of pixels) into an (n, d) feature matrix.
Tensor features_from_images(const std::vector<Tensor>& images);

}  // namespace emaglab
