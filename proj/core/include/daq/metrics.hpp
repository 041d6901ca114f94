#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "daq/errors.hpp"

namespace daq {

/// Row-major H x W map of doubles.
struct SaliencyMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    SaliencyMap() = default;
    SaliencyMap(int h, int w, double fill = 0.0) : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}
    SaliencyMap(int h, int w, std::vector<double> v);

    double& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return values.size(); }
};

struct EvalResult {
    double e_measure = 0.0;
    double s_measure = 0.0;
    double f_measure = 0.0;
    double mae = 0.0;
};

/// min(2 * mean(P), 1).
double adaptive_threshold(const SaliencyMap& pred);
/// 1 where P >= adaptive threshold and P > 0, else 0.
SaliencyMap binarize_adaptive(const SaliencyMap& pred);

double mae(const SaliencyMap& pred, const SaliencyMap& gt);
/// Adaptive-threshold F-measure with beta^2 = 0.3.
double f_measure(const SaliencyMap& pred, const SaliencyMap& gt);
/// Structure measure, alpha = 0.5.
double s_measure(const SaliencyMap& pred, const SaliencyMap& gt);
/// Adaptive-threshold enhanced-alignment measure.
double e_measure(const SaliencyMap& pred, const SaliencyMap& gt);

EvalResult evaluate(const SaliencyMap& pred, const SaliencyMap& gt);

struct FrameEval {
    std::string frame;  // path relative to the prediction root
    EvalResult result;
};

struct DatasetEval {
    std::vector<FrameEval> frames;
    EvalResult mean;
};

/// Pairs every ground-truth PNG under `gt_dir` with a prediction under
/// `pred_dir`. Paths are compared relative to each root with any `GT`
/// directory component dropped, so a dataset root can serve as `gt_dir`.
/// GT is binarised at 128; predictions are read as byte / 255.
DatasetEval evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);

/// frame,e_measure,s_measure,f_measure,mae rows plus a final "mean" row.
std::string to_csv(const DatasetEval& eval);
/// One-row markdown table with columns E, S, F, M.
std::string to_markdown(const EvalResult& mean, const std::string& label);

}  // namespace daq
