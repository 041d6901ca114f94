#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "daq/config.hpp"
#include "daq/memory_tracker.hpp"

namespace daq {

struct ParamCounts {
    int64_t trainable = 0;
    int64_t total = 0;
    double ratio() const { return total ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0; }
};

/// Element counts split by `requires_grad`.
ParamCounts count_params(const torch::nn::Module& module);

/// Element count of the parameters whose dotted name contains `fragment`.
int64_t count_params_named(const torch::nn::Module& module, const std::string& fragment);

/// One row of the topology comparison.
struct PeftVariant {
    std::string name;
    Config config;
};

/// Parallel (ours), sequential adapters and low-rank injection over the same
/// frozen backbone and rank.
std::vector<PeftVariant> peft_variants(const Config& base);

struct PeftReport {
    std::string name;
    ParamCounts params;
    std::optional<PeakMemory> memory;  // nullopt: measurement unsupported
};

/// Builds the model for `cfg`, takes one warm-up optimizer step on a
/// `frames`-frame random clip, then measures the peak of a second step.
PeftReport measure_variant(const std::string& name, const Config& cfg, int64_t frames);

/// CSV with columns variant,trainable,total,peak_bytes ("unsupported" when the
/// counter is unavailable).
std::string peft_report_csv(const std::vector<PeftReport>& rows);

}  // namespace daq
