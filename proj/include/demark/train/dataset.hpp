#pragma once

#include "demark/rng.hpp"
#include "demark/synth/generate.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <vector>

namespace demark {

struct Batch {
    torch::Tensor corrupted; // (B,3,H,W)
    torch::Tensor original;  // (B,3,H,W)
    torch::Tensor mask;      // (B,1,H,W)
};

// Generated-dataset reader over the corrupted/original/mask layout.
class DiskDataset {
public:
    explicit DiskDataset(const std::filesystem::path& dir);

    int64_t size() const { return static_cast<int64_t>(names_.size()); }

    struct Item {
        torch::Tensor corrupted, original, mask;
    };
    Item load(int64_t i) const;

private:
    std::filesystem::path dir_;
    std::vector<std::string> names_;
};

// Deterministic batch composition: the index list for any step is a pure
// function of (seed, step, dataset size, batch size), so resuming needs no
// shuffle state. Per-epoch Fisher-Yates permutations, contiguous chunks.
std::vector<int64_t> batch_indices(uint64_t seed, int64_t step, int64_t dataset_size,
                                   int64_t batch_size);

// Batch source for training: a generated on-disk dataset or on-the-fly
// synthesis against a background pool (for corpora too large to pre-render).
class DataPipeline {
public:
    static DataPipeline disk(const std::filesystem::path& dataset_dir, uint64_t seed,
                             int64_t batch_size);
    static DataPipeline on_the_fly(const std::filesystem::path& backgrounds_dir,
                                   const synth::GeneratorConfig& cfg, uint64_t seed,
                                   int64_t batch_size);

    Batch batch_at(int64_t step) const;
    int64_t dataset_size() const; // 0 means unbounded (synthetic)

private:
    DataPipeline() = default;

    std::shared_ptr<DiskDataset> dataset_;
    // on-the-fly state
    std::vector<torch::Tensor> backgrounds_;
    synth::GeneratorConfig gen_cfg_;
    bool synthetic_ = false;
    uint64_t seed_ = 0;
    int64_t batch_size_ = 1;
};

} // namespace demark
