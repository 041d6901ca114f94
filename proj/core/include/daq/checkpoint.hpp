#pragma once

#include <filesystem>

#include "daq/config.hpp"
#include "daq/model.hpp"

namespace daq {

inline constexpr int64_t kCheckpointFormatVersion = 1;

/// Names of the arrays stored under `frozen/` and `trainable/`.
struct CheckpointContents {
    Config config;
    int64_t iteration = 0;
    int64_t format_version = 0;
    std::vector<std::string> frozen;
    std::vector<std::string> trainable;
};

/// Single-file archive: format version, full config text, iteration count and
/// every parameter, grouped by trainability.
void save_checkpoint(const std::filesystem::path& path, nn::SamDaq& model, int64_t iteration);

/// Reads the metadata and array listing without building a model.
CheckpointContents inspect_checkpoint(const std::filesystem::path& path);

/// Strict load into an existing model: every parameter must be present with
/// the same shape, and the archive may hold nothing else. Throws
/// CheckpointError naming the offending parameter. Returns the iteration.
int64_t load_checkpoint_into(const std::filesystem::path& path, nn::SamDaq& model);

struct LoadedModel {
    Config config;
    int64_t iteration = 0;
    nn::SamDaq model{nullptr};
};

/// Rebuilds the model from the stored config, then loads it strictly.
LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace daq
