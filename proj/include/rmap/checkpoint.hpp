#pragma once

#include <optional>
#include <string>

#include "rmap/adam.hpp"
#include "rmap/net.hpp"
#include "rmap/training.hpp"

// Checkpoint = <prefix>.json (manifest: model spec, parameter names, shapes
// and float offsets, optimizer scalars, dropout stream states, epoch
// history) + <prefix>.blob (one little-endian float32 blob holding
// parameters, running stats and Adam moments back to back).

namespace rmap::train {

struct CheckpointMeta {
    net::ModelSpec spec;
    int epoch = 0;      // epochs completed
    int best_epoch = -1;
    double best_val_sq_per_sample = 0;
    std::uint64_t train_seed = 0;
    std::vector<EpochStats> history;
};

void save_checkpoint(const std::string& prefix, net::R2Net& model, const AdamState* adam,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    net::R2Net model;
    AdamState adam;
    bool has_adam = false;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& prefix);

}  // namespace rmap::train
