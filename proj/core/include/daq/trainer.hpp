#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <vector>

#include "daq/config.hpp"
#include "daq/data.hpp"
#include "daq/losses.hpp"
#include "daq/metrics.hpp"
#include "daq/model.hpp"

namespace daq {

struct TrainLogRow {
    int64_t iteration = 0;
    double l_pred = 0.0;
    double l_inter = 0.0;
    double l_total = 0.0;
    double wall_ms = 0.0;
};

/// Clip-averaged loss terms plus the per-frame outputs that produced them.
struct ClipLoss {
    LossTerms terms;
    std::vector<FrameOutput> frames;
};

/// Runs the recurrence over `clip` and averages L_total over its frames.
ClipLoss clip_loss(nn::SamDaq& model, const VideoClip& clip, double alpha);

/// Converts a (1, H, W) or (H, W) tensor to a metrics map.
SaliencyMap to_saliency_map(const torch::Tensor& x);

/// One training context: model, optimizer, data and the sampling RNG.
class Trainer {
public:
    /// Builds a fresh model from `cfg`.
    Trainer(const Config& cfg, std::vector<VideoHandle> videos);
    /// Trains an existing model (e.g. one with modified weights).
    Trainer(nn::SamDaq model, std::vector<VideoHandle> videos);

    /// One optimizer step on one sampled clip.
    TrainLogRow step();

    /// Runs `iterations` steps, appending CSV rows to `log` when given and
    /// writing checkpoints into `checkpoint_dir` (if non-empty) every
    /// `checkpoint_every` steps and at the end.
    void run(int64_t iterations, std::ostream* log = nullptr, const std::filesystem::path& checkpoint_dir = {});

    nn::SamDaq& model() { return model_; }
    int64_t iteration() const { return iteration_; }
    const std::vector<TrainLogRow>& history() const { return history_; }

    static std::string log_header();
    static std::string log_line(const TrainLogRow& row);

private:
    const VideoClip& cached_clip(size_t video, const std::vector<size_t>& indices);
    void check_finite(const LossTerms& terms) const;

    Config cfg_;
    nn::SamDaq model_{nullptr};
    std::vector<VideoHandle> videos_;
    std::unique_ptr<torch::optim::AdamW> optimizer_;
    std::mt19937_64 rng_;
    int64_t iteration_ = 0;
    std::vector<TrainLogRow> history_;
    std::map<std::pair<size_t, size_t>, LoadedFrame> frame_cache_;
    VideoClip scratch_;
};

/// Loads the config's dataset, trains for `cfg.iterations`, writes
/// output_dir/train_log.csv and output_dir/checkpoint.pt. Returns the model.
nn::SamDaq train(const Config& cfg, std::ostream* progress = nullptr);

/// Runs every labeled frame of every video through the model (no gradient)
/// and scores it against GT.
DatasetEval evaluate_model(nn::SamDaq& model, const std::vector<VideoHandle>& videos);

/// Predicts every frame of the video in `video_dir` with the checkpoint and
/// writes 8-bit masks, resized to the source frame size, as out_dir/<frame>.png.
/// Returns the number of frames written.
size_t predict_video(const std::filesystem::path& checkpoint, const std::filesystem::path& video_dir,
                     const std::filesystem::path& out_dir);

}  // namespace daq
