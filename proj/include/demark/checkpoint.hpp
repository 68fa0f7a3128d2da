#pragma once

#include "demark/model/net.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <string>

namespace demark {

// Single-archive checkpoint: parameter/buffer tensors keyed by canonical
// module names, the NetConfig echo, the step counter, and (when training)
// the optimizer state as a nested archive.
struct CheckpointMeta {
    NetConfig net;
    int64_t step = 0;
    double best_val_total = std::numeric_limits<double>::infinity();
    std::string config_echo;
    bool has_optimizer = false;
};

void save_checkpoint(const std::filesystem::path& path, AdvancedUnet& model,
                     const CheckpointMeta& meta, torch::optim::Optimizer* optimizer = nullptr);

// Rebuilds the model from the stored NetConfig and loads its tensors.
std::pair<AdvancedUnet, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

// Restores optimizer state saved alongside the model; the optimizer must
// already own the loaded model's parameters.
void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

} // namespace demark
