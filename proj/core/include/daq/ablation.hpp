#pragma once

#include <string>
#include <vector>

#include "daq/config.hpp"
#include "daq/data.hpp"
#include "daq/metrics.hpp"
#include "daq/peft.hpp"

namespace daq {

enum class AblationAxis { PeftTopology, EmbeddingMode, QueryCounts, HiddenDim, UpdateStrategy, SupervisedLevels };

std::string to_string(AblationAxis axis);
/// Throws ConfigError for unknown names.
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationVariant {
    std::string label;
    Config config;
};

/// The rows of one ablation table, in table order, each derived from `base`.
std::vector<AblationVariant> ablation_variants(AblationAxis axis, const Config& base);

struct AblationRow {
    std::string label;
    EvalResult metrics;
    ParamCounts params;
};

struct AblationTable {
    AblationAxis axis;
    std::vector<AblationRow> rows;
};

/// Mean of E, S, F and 1 - MAE; one number for ranking rows.
double composite_score(const EvalResult& r);

/// Trains every variant from the same seed on `train_videos` for
/// `base.iterations` steps and scores it on `eval_videos`.
AblationTable run_ablation(AblationAxis axis, const Config& base, const std::vector<VideoHandle>& train_videos,
                           const std::vector<VideoHandle>& eval_videos, std::ostream* progress = nullptr);

/// Markdown table with the metric columns (and parameter counts for the
/// topology axis).
std::string to_markdown(const AblationTable& table);

}  // namespace daq
