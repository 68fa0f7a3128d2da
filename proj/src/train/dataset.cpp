#include "demark/train/dataset.hpp"

#include "demark/errors.hpp"
#include "demark/image.hpp"
#include "demark/image_io.hpp"

#include <algorithm>

namespace fs = std::filesystem;

namespace demark {

DiskDataset::DiskDataset(const fs::path& dir) : dir_(dir) {
    const fs::path cdir = dir / "corrupted";
    if (!fs::is_directory(cdir))
        throw ValidationError("dataset: not a dataset directory (no corrupted/): " + dir.string());
    for (const auto& entry : fs::directory_iterator(cdir))
        if (entry.is_regular_file() && has_image_extension(entry.path()))
            names_.push_back(entry.path().filename().string());
    std::sort(names_.begin(), names_.end());
    if (names_.empty()) throw ValidationError("dataset: empty dataset: " + dir.string());
    std::string missing;
    for (const auto& n : names_)
        for (const char* sub : {"original", "mask"})
            if (!fs::exists(dir / sub / n))
                missing += (missing.empty() ? "" : ", ") + (dir / sub / n).string();
    if (!missing.empty()) throw IoError("dataset: missing ground-truth files: " + missing);
}

DiskDataset::Item DiskDataset::load(int64_t i) const {
    const auto& n = names_[static_cast<size_t>(i)];
    Item item;
    item.corrupted = to_tensor(read_image_rgb(dir_ / "corrupted" / n));
    item.original = to_tensor(read_image_rgb(dir_ / "original" / n));
    item.mask = to_tensor(read_image_gray(dir_ / "mask" / n));
    return item;
}

std::vector<int64_t> batch_indices(uint64_t seed, int64_t step, int64_t dataset_size,
                                   int64_t batch_size) {
    if (dataset_size < 1) throw ValidationError("batch_indices: empty dataset");
    if (batch_size < 1) throw ValidationError("batch_indices: batch_size must be >= 1");
    const int64_t eff = std::min(batch_size, dataset_size);
    const int64_t steps_per_epoch = dataset_size / eff;
    const int64_t epoch = step / steps_per_epoch;
    const int64_t offset = (step % steps_per_epoch) * eff;

    std::vector<int64_t> perm(static_cast<size_t>(dataset_size));
    for (int64_t i = 0; i < dataset_size; ++i) perm[static_cast<size_t>(i)] = i;
    Rng shuffle_rng(Rng::derive(seed, 0xD5A7A0 + static_cast<uint64_t>(epoch)));
    for (int64_t i = dataset_size - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)],
                  perm[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

    return {perm.begin() + offset, perm.begin() + offset + eff};
}

DataPipeline DataPipeline::disk(const fs::path& dataset_dir, uint64_t seed, int64_t batch_size) {
    DataPipeline p;
    p.dataset_ = std::make_shared<DiskDataset>(dataset_dir);
    p.seed_ = seed;
    p.batch_size_ = batch_size;
    return p;
}

DataPipeline DataPipeline::on_the_fly(const fs::path& backgrounds_dir,
                                      const synth::GeneratorConfig& cfg, uint64_t seed,
                                      int64_t batch_size) {
    DataPipeline p;
    p.synthetic_ = true;
    p.gen_cfg_ = cfg;
    p.seed_ = seed;
    p.batch_size_ = batch_size;
    std::vector<fs::path> files;
    if (!fs::is_directory(backgrounds_dir))
        throw ValidationError("on-the-fly: background dir does not exist: " +
                              backgrounds_dir.string());
    for (const auto& entry : fs::directory_iterator(backgrounds_dir))
        if (entry.is_regular_file() && has_image_extension(entry.path()))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw ValidationError("on-the-fly: no background images in " + backgrounds_dir.string());
    for (const auto& f : files) {
        ImageU8 img = read_image_rgb(f);
        img = center_crop_to_aspect(img, cfg.height, cfg.width);
        img = resize_bilinear(img, cfg.height, cfg.width);
        p.backgrounds_.push_back(to_tensor(img));
    }
    return p;
}

Batch DataPipeline::batch_at(int64_t step) const {
    std::vector<torch::Tensor> corr, orig, mask;
    if (synthetic_) {
        for (int64_t j = 0; j < batch_size_; ++j) {
            const uint64_t child =
                Rng::derive(seed_, 0xF17E5EED + static_cast<uint64_t>(step) * batch_size_ + j);
            Rng rng(child);
            const auto bg_idx =
                rng.uniform_int(0, static_cast<int64_t>(backgrounds_.size()) - 1);
            auto s = synth::synthesize_sample(backgrounds_[static_cast<size_t>(bg_idx)], gen_cfg_,
                                              rng, child);
            corr.push_back(s.corrupted);
            orig.push_back(s.original);
            mask.push_back(s.mask);
        }
    } else {
        for (int64_t idx : batch_indices(seed_, step, dataset_->size(), batch_size_)) {
            auto item = dataset_->load(idx);
            corr.push_back(item.corrupted);
            orig.push_back(item.original);
            mask.push_back(item.mask);
        }
    }
    return {torch::cat(corr, 0), torch::cat(orig, 0), torch::cat(mask, 0)};
}

int64_t DataPipeline::dataset_size() const { return synthetic_ ? 0 : dataset_->size(); }

} // namespace demark
