#include "demark/checkpoint.hpp"

#include "demark/errors.hpp"

#include <torch/serialize.h>

namespace demark {

void save_checkpoint(const std::filesystem::path& path, AdvancedUnet& model,
                     const CheckpointMeta& meta, torch::optim::Optimizer* optimizer) {
    try {
        torch::serialize::OutputArchive archive;
        archive.write("format_version", c10::IValue(int64_t{1}));
        archive.write("net_config", c10::IValue(meta.net.serialize()));
        archive.write("step", c10::IValue(meta.step));
        archive.write("best_val_total", c10::IValue(meta.best_val_total));
        archive.write("config_echo", c10::IValue(meta.config_echo));
        archive.write("has_optimizer", c10::IValue(optimizer != nullptr));
        for (const auto& p : model->named_parameters())
            archive.write("param/" + p.key(), p.value().detach().cpu());
        for (const auto& b : model->named_buffers())
            archive.write("buffer/" + b.key(), b.value().detach().cpu(), /*is_buffer=*/true);
        if (optimizer) {
            torch::serialize::OutputArchive opt_archive;
            optimizer->save(opt_archive);
            archive.write("optimizer", opt_archive);
        }
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("checkpoint save failed: " + path.string() + ": " + e.what_without_backtrace());
    }
}

std::pair<AdvancedUnet, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("checkpoint load failed: " + path.string() + ": " +
                      e.what_without_backtrace());
    }
    CheckpointMeta meta;
    try {
        c10::IValue v;
        archive.read("net_config", v);
        meta.net = NetConfig::parse(v.toStringRef());
        archive.read("step", v);
        meta.step = v.toInt();
        archive.read("best_val_total", v);
        meta.best_val_total = v.toDouble();
        archive.read("config_echo", v);
        meta.config_echo = v.toStringRef();
        archive.read("has_optimizer", v);
        meta.has_optimizer = v.toBool();
    } catch (const c10::Error& e) {
        throw IoError("checkpoint metadata unreadable: " + path.string() + ": " +
                      e.what_without_backtrace());
    }

    AdvancedUnet model(meta.net);
    torch::NoGradGuard no_grad;
    try {
        for (auto& p : model->named_parameters()) {
            torch::Tensor t;
            archive.read("param/" + p.key(), t);
            p.value().copy_(t);
        }
        for (auto& b : model->named_buffers()) {
            torch::Tensor t;
            archive.read("buffer/" + b.key(), t, /*is_buffer=*/true);
            b.value().copy_(t);
        }
    } catch (const c10::Error& e) {
        throw IoError("checkpoint/config mismatch loading tensors from " + path.string() + ": " +
                      e.what_without_backtrace());
    }
    return {model, meta};
}

void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
        torch::serialize::InputArchive opt_archive;
        archive.read("optimizer", opt_archive);
        optimizer.load(opt_archive);
    } catch (const c10::Error& e) {
        throw IoError("optimizer state unreadable: " + path.string() + ": " +
                      e.what_without_backtrace());
    }
}

} // namespace demark
