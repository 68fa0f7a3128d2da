#pragma once

#include "demark/checkpoint.hpp"
#include "demark/kvconfig.hpp"
#include "demark/losses.hpp"
#include "demark/model/net.hpp"
#include "demark/train/dataset.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace demark {

struct TrainConfig {
    int64_t batch_size = 8;
    int64_t max_steps = 1000;
    int64_t checkpoint_every = 100;
    double learning_rate = 1e-3;
    std::string optimizer = "adam"; // adam | sgd
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    double grad_clip = 0.0; // 0 disables
    std::array<int64_t, 2> input_hw{512, 512};
    uint64_t seed = 0;
    bool deterministic = false;
    std::filesystem::path dataset_dir;
    std::optional<std::filesystem::path> val_dir;
    std::filesystem::path out_dir = "runs/default";
    std::string device = "cpu"; // cpu | cuda
    bool on_the_fly = false;
    std::filesystem::path backgrounds_dir;

    static TrainConfig from_config(const KvConfig& cfg);
    void validate() const;
    torch::Device torch_device() const;
};

class Trainer {
public:
    // Fresh run: seed-deterministic model init.
    Trainer(const TrainConfig& cfg, const NetConfig& net, const LossWeights& weights,
            std::string config_echo = {});
    // Continue from a checkpoint (model, optimizer state, step counter).
    static Trainer resume(const TrainConfig& cfg, const LossWeights& weights,
                          const std::filesystem::path& checkpoint,
                          std::string config_echo = {});

    // One forward + Eq. 5 + one optimizer update. Throws TrainingError naming
    // the first non-finite term.
    LossReport train_step(const Batch& batch);

    // Runs to max_steps with periodic checkpoints and a JSONL loss log;
    // returns the final checkpoint path.
    std::filesystem::path fit();

    void save(const std::filesystem::path& path);

    AdvancedUnet& model() { return model_; }
    const NetConfig& net_config() const { return net_; }
    int64_t step() const { return step_; }
    double best_val_total() const { return best_val_; }

private:
    Trainer(const TrainConfig& cfg, AdvancedUnet model, NetConfig net, const LossWeights& weights,
            std::string config_echo, int64_t step, double best_val);
    void make_optimizer();
    double validation_loss(const std::filesystem::path& dir);

    TrainConfig cfg_;
    NetConfig net_;
    LossWeights weights_;
    AdvancedUnet model_{nullptr};
    std::unique_ptr<torch::optim::Optimizer> optimizer_;
    std::string config_echo_;
    int64_t step_ = 0;
    double best_val_ = std::numeric_limits<double>::infinity();
    std::filesystem::path last_good_checkpoint_;
};

} // namespace demark
