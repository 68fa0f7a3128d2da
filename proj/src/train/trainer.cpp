#include "demark/train/trainer.hpp"

#include "demark/errors.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace demark {

TrainConfig TrainConfig::from_config(const KvConfig& cfg) {
    TrainConfig t;
    t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
    t.max_steps = cfg.get_int("train.max_steps", t.max_steps);
    t.checkpoint_every = cfg.get_int("train.checkpoint_every", t.checkpoint_every);
    t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
    t.optimizer = cfg.get_str("train.optimizer", t.optimizer);
    t.beta1 = cfg.get_double("train.beta1", t.beta1);
    t.beta2 = cfg.get_double("train.beta2", t.beta2);
    t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
    t.grad_clip = cfg.get_double("train.grad_clip", t.grad_clip);
    t.seed = cfg.get_u64("train.seed", t.seed);
    t.deterministic = cfg.get_bool("train.deterministic", t.deterministic);
    t.dataset_dir = cfg.get_str("train.dataset_dir", t.dataset_dir.string());
    if (cfg.has("train.val_dir")) t.val_dir = fs::path(cfg.get_str("train.val_dir", ""));
    t.out_dir = cfg.get_str("train.out_dir", t.out_dir.string());
    t.device = cfg.get_str("train.device", t.device);
    t.on_the_fly = cfg.get_bool("train.on_the_fly", t.on_the_fly);
    t.backgrounds_dir = cfg.get_str("train.backgrounds_dir", t.backgrounds_dir.string());
    return t;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (max_steps < 0) throw ValidationError("train: max_steps must be >= 0");
    if (checkpoint_every < 1) throw ValidationError("train: checkpoint_every must be >= 1");
    // learning_rate 0 is allowed: it freezes the parameters while still
    // reporting losses, which the step contract relies on
    if (!(learning_rate >= 0)) throw ValidationError("train: learning_rate must be >= 0");
    if (optimizer != "adam" && optimizer != "sgd")
        throw ValidationError("train: optimizer must be 'adam' or 'sgd'");
    if (grad_clip < 0) throw ValidationError("train: grad_clip must be >= 0");
    if (on_the_fly) {
        if (backgrounds_dir.empty())
            throw ValidationError("train: on_the_fly needs train.backgrounds_dir");
    } else if (dataset_dir.empty()) {
        throw ValidationError("train: train.dataset_dir is required");
    }
    (void)torch_device();
}

torch::Device TrainConfig::torch_device() const {
    if (device == "cpu") return torch::Device(torch::kCPU);
    if (device == "cuda") {
        if (!torch::cuda::is_available())
            throw ValidationError("train: device 'cuda' requested but CUDA is not available");
        return torch::Device(torch::kCUDA);
    }
    throw ValidationError("train: device must be 'cpu' or 'cuda', got '" + device + "'");
}

Trainer::Trainer(const TrainConfig& cfg, const NetConfig& net, const LossWeights& weights,
                 std::string config_echo)
    : cfg_(cfg), net_(net), weights_(weights), config_echo_(std::move(config_echo)) {
    cfg_.validate();
    net_.validate();
    weights_.validate(net_.num_mask_sides());
    if (cfg_.deterministic) torch::set_num_threads(1);
    model_ = build_model(net_, cfg_.seed);
    model_->to(cfg_.torch_device());
    make_optimizer();
}

Trainer::Trainer(const TrainConfig& cfg, AdvancedUnet model, NetConfig net,
                 const LossWeights& weights, std::string config_echo, int64_t step,
                 double best_val)
    : cfg_(cfg), net_(std::move(net)), weights_(weights), model_(std::move(model)),
      config_echo_(std::move(config_echo)), step_(step), best_val_(best_val) {
    cfg_.validate();
    weights_.validate(net_.num_mask_sides());
    if (cfg_.deterministic) torch::set_num_threads(1);
    model_->to(cfg_.torch_device());
    make_optimizer();
}

Trainer Trainer::resume(const TrainConfig& cfg, const LossWeights& weights,
                        const fs::path& checkpoint, std::string config_echo) {
    auto [model, meta] = load_checkpoint(checkpoint);
    Trainer t(cfg, std::move(model), meta.net, weights, std::move(config_echo), meta.step,
              meta.best_val_total);
    if (meta.has_optimizer) load_optimizer_state(checkpoint, *t.optimizer_);
    t.last_good_checkpoint_ = checkpoint;
    return t;
}

void Trainer::make_optimizer() {
    if (cfg_.optimizer == "adam") {
        auto opts = torch::optim::AdamOptions(cfg_.learning_rate)
                        .betas(std::make_tuple(cfg_.beta1, cfg_.beta2))
                        .weight_decay(cfg_.weight_decay);
        optimizer_ = std::make_unique<torch::optim::Adam>(model_->parameters(), opts);
    } else {
        auto opts = torch::optim::SGDOptions(cfg_.learning_rate).weight_decay(cfg_.weight_decay);
        optimizer_ = std::make_unique<torch::optim::SGD>(model_->parameters(), opts);
    }
}

LossReport Trainer::train_step(const Batch& batch) {
    if (batch.corrupted.size(2) != cfg_.input_hw[0] || batch.corrupted.size(3) != cfg_.input_hw[1])
        throw ShapeError("train_step: batch is " + std::to_string(batch.corrupted.size(2)) + "x" +
                         std::to_string(batch.corrupted.size(3)) + " but config expects " +
                         std::to_string(cfg_.input_hw[0]) + "x" + std::to_string(cfg_.input_hw[1]));
    model_->train();
    optimizer_->zero_grad();
    auto device = cfg_.torch_device();
    auto outputs = model_->forward(batch.corrupted.to(device));
    auto report = total_loss(outputs, batch.mask.to(device), batch.original.to(device), weights_);
    const std::string bad_term = report.first_non_finite();
    if (!bad_term.empty())
        throw TrainingError("non-finite loss at step " + std::to_string(step_ + 1) + ": " +
                            bad_term);
    report.total_tensor.backward();
    if (cfg_.grad_clip > 0)
        torch::nn::utils::clip_grad_norm_(model_->parameters(), cfg_.grad_clip);
    optimizer_->step();
    ++step_;
    return report;
}

double Trainer::validation_loss(const fs::path& dir) {
    DiskDataset val(dir);
    torch::NoGradGuard no_grad;
    model_->eval();
    double total = 0;
    int64_t batches = 0;
    auto device = cfg_.torch_device();
    for (int64_t start = 0; start < val.size(); start += cfg_.batch_size) {
        std::vector<torch::Tensor> corr, orig, mask;
        for (int64_t i = start; i < std::min(val.size(), start + cfg_.batch_size); ++i) {
            auto item = val.load(i);
            corr.push_back(item.corrupted);
            orig.push_back(item.original);
            mask.push_back(item.mask);
        }
        auto outputs = model_->forward(torch::cat(corr, 0).to(device));
        auto report = total_loss(outputs, torch::cat(mask, 0).to(device),
                                 torch::cat(orig, 0).to(device), weights_);
        total += report.total;
        ++batches;
    }
    model_->train();
    return total / static_cast<double>(std::max<int64_t>(batches, 1));
}

void Trainer::save(const fs::path& path) {
    CheckpointMeta meta;
    meta.net = net_;
    meta.step = step_;
    meta.best_val_total = best_val_;
    meta.config_echo = config_echo_;
    try {
        save_checkpoint(path, model_, meta, optimizer_.get());
    } catch (const IoError& e) {
        std::string last = last_good_checkpoint_.empty() ? "none"
                                                         : last_good_checkpoint_.string();
        throw IoError(std::string(e.what()) + " (last good checkpoint: " + last + ")");
    }
    last_good_checkpoint_ = path;
}

fs::path Trainer::fit() {
    fs::create_directories(cfg_.out_dir);

    DataPipeline pipeline =
        cfg_.on_the_fly
            ? DataPipeline::on_the_fly(
                  cfg_.backgrounds_dir,
                  [&] {
                      synth::GeneratorConfig g;
                      g.height = static_cast<int>(cfg_.input_hw[0]);
                      g.width = static_cast<int>(cfg_.input_hw[1]);
                      return g;
                  }(),
                  cfg_.seed, cfg_.batch_size)
            : DataPipeline::disk(cfg_.dataset_dir, cfg_.seed, cfg_.batch_size);

    // loss log: one JSON line per completed step, each step exactly once.
    // On resume, drop any lines from beyond the checkpoint.
    const fs::path log_path = cfg_.out_dir / "loss_log.jsonl";
    if (step_ > 0 && fs::exists(log_path)) {
        std::ifstream in(log_path);
        std::vector<std::string> keep;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line);
            if (j.at("step").get<int64_t>() <= step_) keep.push_back(line);
        }
        in.close();
        std::ofstream out(log_path, std::ios::trunc);
        for (const auto& l : keep) out << l << "\n";
    } else {
        std::ofstream(log_path, std::ios::trunc);
    }

    std::ofstream log(log_path, std::ios::app);
    if (!log) throw IoError("cannot open loss log: " + log_path.string());

    char name[32];
    while (step_ < cfg_.max_steps) {
        Batch batch = pipeline.batch_at(step_);
        LossReport report = train_step(batch);
        log << report.to_json(step_).dump() << "\n";
        log.flush();
        if (!log) throw IoError("loss log write failed: " + log_path.string());

        if (step_ % cfg_.checkpoint_every == 0 && step_ < cfg_.max_steps) {
            std::snprintf(name, sizeof(name), "ckpt_%08lld.pt", static_cast<long long>(step_));
            save(cfg_.out_dir / name);
            if (cfg_.val_dir) {
                const double val = validation_loss(*cfg_.val_dir);
                best_val_ = std::min(best_val_, val);
                std::cout << "step " << step_ << " val_total " << val << " best " << best_val_
                          << "\n";
            }
        }
    }

    const fs::path final_path = cfg_.out_dir / "final.pt";
    save(final_path);
    return final_path;
}

} // namespace demark
