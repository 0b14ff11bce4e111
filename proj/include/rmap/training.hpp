#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rmap/dpm.hpp"
#include "rmap/geometry.hpp"
#include "rmap/net.hpp"
#include "rmap/tensor.hpp"

// Dataset manifest, env-level splitting, the Adam training loop with
// best-validation selection, and checkpointing. Training optimizes the
// per-element MSE (stable learning-rate scale across resolutions) and logs
// both that value and the per-sample squared-norm convention.

namespace rmap::train {

struct SampleRecord {
    std::string id;            // e.g. "012_03"
    std::string env_path;      // relative to the dataset root
    std::string image_path;
    std::string map_path;
    std::string raw_map_path;
    int env_id = 0;
    int tx_index = 0;
    std::uint64_t seed = 0;
    std::string split;         // "train" | "val" | "test" | ""
};

struct DatasetManifest {
    geom::GridSpec grid;
    geom::EmbedConfig embed;
    dpm::SimConfig sim;        // cfg snapshot including the dataset M1
    std::uint64_t seed = 0;
    std::vector<SampleRecord> samples;
    std::string root;          // set on load; not serialized

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
    static DatasetManifest load(const std::string& path);
    void save(const std::string& path) const;
};

// Environment-level split: every transmitter of a building lands in the same
// split, assignment is a deterministic function of the rng state.
void split_dataset(DatasetManifest& manifest, double r_train, double r_val, double r_test,
                   RandomStream& rng);

struct TrainConfig {
    float lr = 1e-4f;
    int epochs = 50;
    int batch_size = 2;
    std::uint64_t seed = 0;
    net::Variant variant = net::Variant::In;
    net::ChannelPlan plan = net::ChannelPlan::indoor();
    std::string out_dir;        // checkpoints + metrics log; empty = no files
    std::string resume_prefix;  // checkpoint prefix to continue from
};

struct EpochStats {
    int epoch = 0;
    double train_loss_per_element = 0;
    double train_loss_sq_per_sample = 0;  // Eq-9 convention
    double val_loss_per_element = 0;
    double val_loss_sq_per_sample = 0;
    double wall_seconds = 0;
};

struct Sample {
    Tensor image;  // (C_in, H, W)
    Tensor map;    // (C_out, H, W)
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_sq_per_sample = std::numeric_limits<double>::infinity();
    std::string best_checkpoint_prefix;
    std::string last_checkpoint_prefix;
};

std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& split);

// In-memory training loop; `model` is updated in place.
TrainResult train_in_memory(net::R2Net& model, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& val_set, const TrainConfig& cfg);

// Manifest-driven training: builds the model (or resumes), trains on the
// train split, validates per epoch, writes metrics.json and checkpoints
// under cfg.out_dir.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg);

struct ValidationResult {
    double sq_per_sample = 0;   // Eq-9 convention
    double per_element = 0;
};
ValidationResult validate(net::R2Net& model, const std::vector<Sample>& split, int batch_size);

// Eval-mode forward of one (C_in, H, W) stack -> (C_out, H, W) estimate.
// Values are raw network output; clamp to [0,1] only at export.
Tensor infer(net::R2Net& model, const Tensor& env_image_stack);

std::string sim_config_to_json(const dpm::SimConfig& cfg);
dpm::SimConfig sim_config_from_json(const std::string& text);

}  // namespace rmap::train
