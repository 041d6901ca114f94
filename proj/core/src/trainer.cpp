#include "daq/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "daq/checkpoint.hpp"
#include "daq/errors.hpp"
#include "daq/image_io.hpp"
#include "daq/nn_common.hpp"

namespace daq {

namespace fs = std::filesystem;

ClipLoss clip_loss(nn::SamDaq& model, const VideoClip& clip, double alpha) {
    const auto dtype = model->dtype();
    auto rgb = clip.rgb.to(dtype);
    auto depth = clip.depth.to(dtype);
    auto gt = clip.gt.to(dtype);
    ClipLoss out;
    out.frames = model->forward_clip(rgb, depth);
    const auto n = static_cast<double>(out.frames.size());
    auto zero = torch::zeros({}, rgb.options());
    out.terms = {zero, zero, zero};
    for (size_t t = 0; t < out.frames.size(); ++t) {
        const auto& f = out.frames[t];
        auto g = gt.slice(0, static_cast<int64_t>(t), static_cast<int64_t>(t) + 1);
        auto terms = total_loss(f.prediction, f.intermediate_preds, g, alpha);
        out.terms.pred = out.terms.pred + terms.pred / n;
        out.terms.inter = out.terms.inter + terms.inter / n;
        out.terms.total = out.terms.total + terms.total / n;
    }
    return out;
}

SaliencyMap to_saliency_map(const torch::Tensor& x) {
    auto t = x.detach().to(torch::kCPU, torch::kFloat64);
    while (t.dim() > 2) {
        if (t.size(0) != 1) throw ShapeError("expected a single map");
        t = t.squeeze(0);
    }
    t = t.contiguous();
    const auto* d = t.data_ptr<double>();
    return SaliencyMap(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), std::vector<double>(d, d + t.numel()));
}

Trainer::Trainer(const Config& cfg, std::vector<VideoHandle> videos) : Trainer(build_model(cfg), std::move(videos)) {}

Trainer::Trainer(nn::SamDaq model, std::vector<VideoHandle> videos)
    : cfg_(model->config()), model_(std::move(model)), videos_(std::move(videos)), rng_(cfg_.seed) {
    if (videos_.empty()) throw DataError("training needs at least one labeled video");
    auto params = nn::trainable_parameters(*model_);
    if (params.empty()) throw ConfigError("model has no trainable parameters");
    optimizer_ = std::make_unique<torch::optim::AdamW>(
        params, torch::optim::AdamWOptions(cfg_.learning_rate).weight_decay(cfg_.weight_decay));
}

const VideoClip& Trainer::cached_clip(size_t video, const std::vector<size_t>& indices) {
    const auto& v = videos_[video];
    std::vector<torch::Tensor> rgb, depth, gt;
    for (size_t idx : indices) {
        auto key = std::make_pair(video, idx);
        auto it = frame_cache_.find(key);
        if (it == frame_cache_.end()) it = frame_cache_.emplace(key, load_frame(v, idx, cfg_.input_size)).first;
        rgb.push_back(it->second.rgb);
        depth.push_back(it->second.depth);
        gt.push_back(it->second.gt);
    }
    scratch_.video_id = v.id;
    scratch_.frame_indices = indices;
    scratch_.rgb = torch::stack(rgb);
    scratch_.depth = torch::stack(depth);
    scratch_.gt = torch::stack(gt);
    return scratch_;
}

void Trainer::check_finite(const LossTerms& terms) const {
    if (std::isfinite(terms.total.item<double>())) return;
    std::ostringstream os;
    os << "non-finite loss at iteration " << iteration_ << "; parameter norms:";
    for (const auto& p : model_->named_parameters()) {
        if (p.value().requires_grad()) os << " " << p.key() << "=" << p.value().norm().item<double>();
    }
    throw TrainingError(os.str());
}

TrainLogRow Trainer::step() {
    const auto t0 = std::chrono::steady_clock::now();
    std::uniform_int_distribution<size_t> pick(0, videos_.size() - 1);
    const size_t v = pick(rng_);
    const auto& video = videos_[v];
    auto picks = sample_indices(video.labeled.size(), static_cast<size_t>(cfg_.clip_length), rng_);
    for (auto& p : picks) p = video.labeled[p];
    const auto& clip = cached_clip(v, picks);

    model_->train();
    optimizer_->zero_grad();
    auto loss = clip_loss(model_, clip, cfg_.loss_alpha);
    check_finite(loss.terms);
    loss.terms.total.backward();
    optimizer_->step();

    TrainLogRow row;
    row.iteration = iteration_++;
    row.l_pred = loss.terms.pred.item<double>();
    row.l_inter = loss.terms.inter.item<double>();
    row.l_total = loss.terms.total.item<double>();
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    history_.push_back(row);
    return row;
}

std::string Trainer::log_header() { return "iter,L_pred,L_inter,L_total,wall_ms"; }

std::string Trainer::log_line(const TrainLogRow& r) {
    std::ostringstream os;
    os << r.iteration << "," << std::setprecision(8) << r.l_pred << "," << r.l_inter << "," << r.l_total << ","
       << std::setprecision(6) << r.wall_ms;
    return os.str();
}

void Trainer::run(int64_t iterations, std::ostream* log, const fs::path& checkpoint_dir) {
    if (log && iteration_ == 0) *log << log_header() << "\n";
    for (int64_t i = 0; i < iterations; ++i) {
        const auto row = step();
        if (log && (row.iteration % cfg_.log_every == 0 || i + 1 == iterations)) *log << log_line(row) << std::endl;
        if (!checkpoint_dir.empty() && cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0 &&
            i + 1 < iterations) {
            save_checkpoint(checkpoint_dir / ("checkpoint_" + std::to_string(iteration_) + ".pt"), model_, iteration_);
        }
    }
    if (log) log->flush();
    if (!checkpoint_dir.empty()) save_checkpoint(checkpoint_dir / "checkpoint.pt", model_, iteration_);
}

nn::SamDaq train(const Config& cfg, std::ostream* progress) {
    cfg.validate();
    if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is required for training");
    auto videos = load_video_dataset(cfg.dataset);
    const fs::path out = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    {
        std::ofstream c(out / "config.cfg");
        c << cfg.to_text();
    }
    std::ofstream log(out / "train_log.csv");
    if (!log) throw IoError("cannot write " + (out / "train_log.csv").string());

    Trainer trainer(cfg, std::move(videos));
    trainer.run(cfg.iterations, &log, out);
    if (progress && !trainer.history().empty()) {
        *progress << "trained " << trainer.iteration() << " iterations, final "
                  << Trainer::log_line(trainer.history().back()) << "\n";
    }
    return trainer.model();
}

DatasetEval evaluate_model(nn::SamDaq& model, const std::vector<VideoHandle>& videos) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto dtype = model->dtype();
    const auto size = model->config().input_size;
    DatasetEval out;
    for (const auto& v : videos) {
        auto state = model->initial_state(1);
        for (size_t i = 0; i < v.frames.size(); ++i) {
            auto f = load_frame(v, i, size);
            auto res = model->step(f.rgb.unsqueeze(0).to(dtype), f.depth.unsqueeze(0).to(dtype), state);
            if (!f.gt.defined()) continue;
            out.frames.push_back({v.id + "/" + v.frames[i].name,
                                  evaluate(to_saliency_map(res.prediction), to_saliency_map(f.gt))});
        }
    }
    if (out.frames.empty()) throw DataError("no labeled frames to evaluate");
    const double n = static_cast<double>(out.frames.size());
    for (const auto& f : out.frames) {
        out.mean.e_measure += f.result.e_measure / n;
        out.mean.s_measure += f.result.s_measure / n;
        out.mean.f_measure += f.result.f_measure / n;
        out.mean.mae += f.result.mae / n;
    }
    return out;
}

size_t predict_video(const fs::path& checkpoint, const fs::path& video_dir, const fs::path& out_dir) {
    auto loaded = load_checkpoint(checkpoint);
    auto& model = loaded.model;
    auto video = load_video(video_dir, false);
    torch::NoGradGuard no_grad;
    model->eval();
    const auto dtype = model->dtype();
    auto state = model->initial_state(1);
    for (size_t i = 0; i < video.frames.size(); ++i) {
        auto f = load_frame(video, i, loaded.config.input_size);
        auto res = model->step(f.rgb.unsqueeze(0).to(dtype), f.depth.unsqueeze(0).to(dtype), state);
        auto p = nn::resize_bilinear(res.prediction, f.source_height, f.source_width).clamp(0.0, 1.0);
        write_gray8(out_dir / (video.frames[i].name + ".png"), p[0]);
    }
    return video.frames.size();
}

}  // namespace daq
