#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace daq {

// ---------------------------------------------------------------------------
// Synthetic scenes

enum class ObjectShape { Disk, Rectangle };

struct SynthSceneSpec {
    uint64_t seed = 0;
    int num_frames = 10;
    int size = 64;
    ObjectShape object_shape = ObjectShape::Disk;
    double object_depth = 0.2;  // near plane; distractors sit at >= 0.7
    int distractor_count = 2;
    double velocity = 1.5;      // pixels per frame
    double noise_sigma = 0.02;  // additive RGB noise
};

struct SynthFrame {
    torch::Tensor rgb;          // (3, S, S) in [0, 1]
    torch::Tensor depth;        // (1, S, S) in [0, 1]
    torch::Tensor gt;           // (1, S, S) in {0, 1}
    torch::Tensor distractors;  // (1, S, S) visible distractor pixels
};

/// Renders a scene: one salient object, nearest to the camera, plus
/// same-coloured distractors of the same shape family at far depth. All of
/// them move. Deterministic in `spec`.
std::vector<SynthFrame> render_scene(const SynthSceneSpec& spec);

/// Per-video specs of a `videos`-video dataset derived from `seed`.
std::vector<SynthSceneSpec> dataset_specs(uint64_t seed, int videos, int frames, int size = 64);

/// Writes root/<video_id>/{RGB,depth,GT}/%05d.png; depth is 16-bit.
void write_scene(const SynthSceneSpec& spec, const std::filesystem::path& root, const std::string& video_id);

/// Writes a whole synthetic dataset; video ids are video_000, video_001, ...
void generate_dataset(uint64_t seed, int videos, int frames, const std::filesystem::path& root, int size = 64);

// ---------------------------------------------------------------------------
// On-disk datasets

struct FrameRecord {
    std::string name;  // file stem, e.g. "00003"
    std::filesystem::path rgb;
    std::filesystem::path depth;
    std::optional<std::filesystem::path> gt;
};

struct VideoHandle {
    std::string id;
    std::filesystem::path root;
    std::vector<FrameRecord> frames;  // every RGB-D frame, by name
    std::vector<size_t> labeled;      // indices into `frames` that have GT

    size_t size() const { return frames.size(); }
};

/// Scans one video directory. RGB and depth must pair up frame by frame;
/// GT may cover a subset. Throws DataError naming missing folders or the
/// offending frames.
VideoHandle load_video(const std::filesystem::path& dir, bool require_gt = true);

/// Every sub-directory of `root` that is a video, sorted by id.
std::vector<VideoHandle> load_video_dataset(const std::filesystem::path& root);

struct LoadedFrame {
    torch::Tensor rgb;    // (3, S, S)
    torch::Tensor depth;  // (1, S, S)
    torch::Tensor gt;     // (1, S, S) binary; undefined when unlabeled
    int64_t source_height = 0;
    int64_t source_width = 0;
};

/// Reads one frame resized to `size` (bilinear for images, nearest for GT).
LoadedFrame load_frame(const VideoHandle& video, size_t index, int64_t size);

struct VideoClip {
    std::string video_id;
    std::vector<size_t> frame_indices;  // into VideoHandle::frames, non-decreasing
    torch::Tensor rgb;    // (T, 3, S, S)
    torch::Tensor depth;  // (T, 1, S, S)
    torch::Tensor gt;     // (T, 1, S, S)
};

/// `length` sorted draws from [0, n): without replacement when n >= length,
/// with replacement otherwise.
std::vector<size_t> sample_indices(size_t n, size_t length, std::mt19937_64& rng);

/// Samples a clip from the labeled frames of `video`.
VideoClip sample_clip(const VideoHandle& video, size_t length, std::mt19937_64& rng, int64_t size);

/// All labeled frames of `video` in order, as one clip.
VideoClip full_clip(const VideoHandle& video, int64_t size);

}  // namespace daq
