// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/runio.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "emaglab/dataset.hpp"
#include "emaglab/errors.hpp"

namespace emaglab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        if (c == '.' || c == '/') c = '_';
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(path.string() + " is not valid JSON: " + e.what());
    }
}

json model_config_json(const ToyModelConfig& cfg) {
    return json{{"image_size", cfg.image_size},
                {"patch", cfg.patch},
                {"d_model", cfg.d_model},
                {"layers", cfg.n_layers},
                {"heads", cfg.n_heads},
                {"classes", cfg.n_classes},
                {"joint_attention", cfg.joint_attention},
                {"n_txt_tokens", cfg.n_txt_tokens},
                {"max_timestep", cfg.max_timestep}};
}

ToyModelConfig model_config_from_json(const json& j) {
    ToyModelConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.patch = j.at("patch").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_layers = j.at("layers").get<int>();
    cfg.n_heads = j.at("heads").get<int>();
    cfg.n_classes = j.at("classes").get<int>();
    cfg.joint_attention = j.at("joint_attention").get<bool>();
    cfg.n_txt_tokens = j.at("n_txt_tokens").get<int>();
    cfg.max_timestep = j.at("max_timestep").get<int>();
    cfg.validate();
    return cfg;
}

std::string sample_name(size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%03zu.csv", index);
    return buf;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const ToyModelParams& params, const json& extra) {
    fs::create_directories(dir / "weights");
    json manifest;
    manifest["format"] = "emaglab-checkpoint-v1";
    manifest["model"] = model_config_json(params.config);
    manifest["extra"] = extra;
    json index = json::array();
    for (const auto& [name, tensor] : params.tensors) {
        const std::string file = "weights/" + sanitize(name) + ".csv";
        write_tensor_csv((dir / file).string(), tensor);
        index.push_back(json{{"name", name}, {"shape", tensor.shape}, {"file", file}});
    }
    manifest["tensors"] = index;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

json load_checkpoint_manifest(const fs::path& dir) { return read_json(dir / "manifest.json"); }

ToyModelParams load_checkpoint(const fs::path& dir) {
    const json manifest = load_checkpoint_manifest(dir);
    if (manifest.value("format", "") != "emaglab-checkpoint-v1")
        throw IoError(dir.string() + " is not an emaglab checkpoint");
    ToyModelParams params;
    params.config = model_config_from_json(manifest.at("model"));
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        Tensor t = read_tensor_csv((dir / entry.at("file").get<std::string>()).string());
        const std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
        if (t.shape != shape)
            throw IoError("checkpoint tensor " + name + " shape mismatch");
        params.tensors.emplace_back(name, std::move(t));
    }
    return params;
}

void write_loss_curve_csv(const fs::path& path, const std::vector<double>& curve) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    f << "step,loss\n";
    for (size_t i = 0; i < curve.size(); ++i) f << i << ',' << format_double(curve[i]) << '\n';
}

namespace {

void write_diagnostics_csv(const fs::path& path, const std::vector<SamplerTrajectory>& trajs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    int lmin = 0, lmax = -1;
    if (!trajs.empty()) {
        lmin = trajs.front().guidance.layer_min;
        lmax = trajs.front().guidance.layer_max;
    }
    f << "trajectory,t,branch,chosen_layer,lambda,beta";
    for (int l = lmin; l <= lmax; ++l) f << ",delta_layer_" << l;
    f << '\n';
    for (size_t ti = 0; ti < trajs.size(); ++ti) {
        const auto& traj = trajs[ti];
        const std::string branch = traj.guidance.class_id ? "cond" : "uncond";
        for (const auto& step : traj.steps) {
            if (step.deltas.empty()) continue;  // outside the window
            f << ti << ',' << step.t << ',' << branch << ',' << step.selected_layer << ','
              << format_double(traj.guidance.lambda) << ',' << format_double(traj.guidance.beta);
            for (int l = lmin; l <= lmax; ++l) {
                const auto it = step.deltas.find(l);
                f << ',' << (it == step.deltas.end() ? "" : format_double(it->second));
            }
            f << '\n';
        }
    }
}

// Mean attention entropy per (step, layer), averaged across trajectories.
void write_entropy_csv(const fs::path& path, const std::vector<SamplerTrajectory>& trajs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    f << "step,layer,mean_entropy_nats\n";
    if (trajs.empty()) return;
    const size_t n_steps = trajs.front().steps.size();
    const size_t n_layers = trajs.front().steps.front().entropy_per_layer.size();
    for (size_t s = 0; s < n_steps; ++s) {
        for (size_t l = 0; l < n_layers; ++l) {
            double acc = 0.0;
            for (const auto& traj : trajs) acc += traj.steps[s].entropy_per_layer[l];
            f << trajs.front().steps[s].t << ',' << l << ','
              << format_double(acc / static_cast<double>(trajs.size())) << '\n';
        }
    }
}

void dump_branch(const fs::path& dir, const std::string& stem, const Tensor& t) {
    write_tensor_csv((dir / (stem + ".csv")).string(), t);
}

}  // namespace

void write_run_outputs(const fs::path& dir, const RunConfig& cfg, const std::string& hash,
                       const std::vector<SamplerTrajectory>& trajectories, bool dump_trajectory) {
    fs::create_directories(dir / "samples");
    for (size_t i = 0; i < trajectories.size(); ++i)
        write_tensor_csv((dir / "samples" / sample_name(i)).string(), trajectories[i].final_x);

    write_diagnostics_csv(dir / "diagnostics.csv", trajectories);
    write_entropy_csv(dir / "entropy.csv", trajectories);

    json manifest;
    manifest["format"] = "emaglab-run-v1";
    manifest["config_hash"] = hash;
    manifest["config"] = cfg.raw;
    manifest["n_trajectories"] = trajectories.size();
    json seeds = json::array();
    for (const auto& t : trajectories) seeds.push_back(t.seed);
    manifest["seeds"] = seeds;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    if (!dump_trajectory) return;
    json index;
    index["trajectories"] = json::array();
    for (size_t ti = 0; ti < trajectories.size(); ++ti) {
        const auto& traj = trajectories[ti];
        const fs::path tdir = dir / "steps" / ("traj_" + std::to_string(ti));
        fs::create_directories(tdir);
        json steps = json::array();
        for (const auto& step : traj.steps) {
            const std::string stem = "step_" + std::to_string(step.t);
            dump_branch(tdir, stem + "_x", step.x);
            dump_branch(tdir, stem + "_combined", step.combined);
            json entry;
            entry["t"] = step.t;
            entry["time"] = step.time;
            entry["selected_layer"] = step.selected_layer;
            entry["emag_applied"] = step.emag_applied;
            json branches = json::object();
            auto record = [&](const char* key, const std::optional<Tensor>& b) {
                if (b) {
                    dump_branch(tdir, stem + "_" + key, *b);
                    branches[key] = stem + "_" + key + ".csv";
                }
            };
            record("cond", step.branches.cond);
            record("uncond", step.branches.uncond);
            record("cond_perturbed", step.branches.cond_perturbed);
            record("uncond_perturbed", step.branches.uncond_perturbed);
            record("weak", step.weak);
            record("dropped", step.dropped);
            record("degraded", step.degraded);
            entry["branches"] = branches;
            steps.push_back(entry);
        }
        index["trajectories"].push_back(
            json{{"seed", traj.seed}, {"dir", "steps/traj_" + std::to_string(ti)}, {"steps", steps}});
    }
    write_text(dir / "trajectory.json", index.dump(2) + "\n");
}

Tensor load_run_samples(const fs::path& dir) {
    std::vector<Tensor> images;
    const fs::path samples = dir / "samples";
    if (fs::exists(samples)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(samples)) {
            if (e.path().extension() == ".csv") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& p : files) images.push_back(read_tensor_csv(p.string()));
    }
    if (images.empty())
        throw ConfigError("run " + dir.string() + " contains no trajectories to analyze");
    return features_from_images(images);
}

Tensor features_from_images(const std::vector<Tensor>& images) {
    if (images.empty()) throw DimensionError("no images to flatten");
    const int64_t d = images.front().numel();
    Tensor out = Tensor::zeros({static_cast<int64_t>(images.size()), d});
    for (size_t i = 0; i < images.size(); ++i) {
        if (images[i].numel() != d) throw DimensionError("inconsistent image sizes");
        std::copy(images[i].data.begin(), images[i].data.end(), out.data.begin() + static_cast<int64_t>(i) * d);
    }
    return out;
}

AnalyzeResult analyze_run(const fs::path& run_dir) {
    const json manifest = read_json(run_dir / "manifest.json");
    if (manifest.value("format", "") != "emaglab-run-v1")
        throw IoError(run_dir.string() + " is not an emaglab run directory");
    const RunConfig cfg = parse_config(manifest.at("config"));

    const Tensor fake = load_run_samples(run_dir);

    DatasetConfig data_cfg;
    const int image_size = static_cast<int>(std::sqrt(static_cast<double>(fake.cols())));
    data_cfg.image_size = image_size;
    std::vector<Tensor> ref_images;
    const auto ref = make_eval_set(data_cfg, cfg.metrics.n_reference, cfg.metrics.reference_seed);
    ref_images.reserve(ref.size());
    for (const auto& [img, cls] : ref) ref_images.push_back(img);
    const Tensor real = features_from_images(ref_images);

    AnalyzeResult result;
    result.report.frechet = frechet_gaussian(real, fake);
    result.report.prdc = prdc(real, fake, cfg.metrics.k);
    result.report.n_real = static_cast<int>(real.rows());
    result.report.n_fake = static_cast<int>(fake.rows());

    json out;
    out["config_hash"] = manifest.at("config_hash");
    out["frechet"] = result.report.frechet;
    out["precision"] = result.report.prdc.precision;
    out["recall"] = result.report.prdc.recall;
    out["density"] = result.report.prdc.density;
    out["coverage"] = result.report.prdc.coverage;
    out["n_real"] = result.report.n_real;
    out["n_fake"] = result.report.n_fake;
    result.json = out;

    write_text(run_dir / "metrics.json", out.dump(2) + "\n");
    // Plot-ready duplicate of the per-run entropy trace.
    if (fs::exists(run_dir / "entropy.csv")) {
        std::ifstream src(run_dir / "entropy.csv", std::ios::binary);
        std::string body((std::istreambuf_iterator<char>(src)), std::istreambuf_iterator<char>());
        write_text(run_dir / "entropy_trace.csv", body);
    }
    return result;
}

}  // namespace emaglab
