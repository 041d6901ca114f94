#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace daq {

enum class PeftTopology { Parallel, Sequential, Lora };
enum class UpdateStrategy { Addition, Multiply, None, Sam2Bank };
enum class EmbeddingMode { Sparse, Dense, Both };
enum class Precision { Float32, Float64 };

std::string to_string(PeftTopology v);
std::string to_string(UpdateStrategy v);
std::string to_string(EmbeddingMode v);
std::string to_string(Precision v);

PeftTopology parse_peft_topology(const std::string& s);
UpdateStrategy parse_update_strategy(const std::string& s);
EmbeddingMode parse_embedding_mode(const std::string& s);
Precision parse_precision(const std::string& s);

/// Every tunable of the model, the trainer and the ablation runner.
///
/// The on-disk form is a flat UTF-8 `key = value` file. Lists are
/// comma-separated, `#` starts a comment, unknown keys are rejected.
struct Config {
    // encoder
    int64_t input_size = 64;
    std::array<int64_t, 4> stage_channels{16, 32, 64, 128};
    std::array<int64_t, 4> stage_blocks{1, 1, 1, 1};
    std::array<int64_t, 4> stage_heads{1, 1, 2, 4};
    int64_t fpn_width = 64;
    int64_t adapter_rank = 8;
    bool freeze_backbone = true;
    std::vector<int> supervised_levels{4};
    PeftTopology peft_topology = PeftTopology::Parallel;
    bool grad_bypass = true;
    int64_t lora_rank = 8;
    double lora_alpha = 16.0;
    bool use_depth = true;
    bool use_depth_projector = true;

    // temporal memory
    int64_t num_frame_queries = 30;
    int64_t num_video_queries = 8;
    int64_t query_hidden_dim = 64;
    int64_t attention_heads = 1;
    UpdateStrategy update_strategy = UpdateStrategy::Addition;
    EmbeddingMode embedding_mode = EmbeddingMode::Sparse;
    int64_t memory_bank_size = 6;

    // decoder
    int64_t decoder_rounds = 2;

    // numerics / seeding
    uint64_t backbone_seed = 20240601;
    uint64_t seed = 7;
    Precision precision = Precision::Float32;

    // training
    std::string dataset;
    std::string eval_dataset;
    std::string output_dir = "runs/default";
    int64_t iterations = 2000;
    int64_t clip_length = 10;
    double learning_rate = 1e-4;
    double weight_decay = 0.05;
    double loss_alpha = 0.5;
    int64_t checkpoint_every = 500;
    int64_t log_every = 1;

    /// Throws ConfigError on inconsistent values.
    void validate() const;

    /// Serialized key = value form; `parse_config(to_text())` round-trips.
    std::string to_text() const;

    /// Applies one key/value pair; throws ConfigError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
};

Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);

/// Applies `key=value` overrides, e.g. from a command line.
void apply_overrides(Config& cfg, const std::vector<std::string>& overrides);

}  // namespace daq
