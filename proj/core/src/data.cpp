#include "daq/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "daq/errors.hpp"
#include "daq/image_io.hpp"

namespace daq {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace {

struct Mover {
    double cx, cy;    // centre
    double hx, hy;    // half extents (radius for disks: hx == hy)
    double vx, vy;
    double depth;

    void advance(int size) {
        cx += vx;
        cy += vy;
        // Reflect so the shape stays at least one pixel inside the frame.
        const double lo_x = hx + 1.0, hi_x = size - 2.0 - hx;
        const double lo_y = hy + 1.0, hi_y = size - 2.0 - hy;
        if (cx < lo_x) { cx = 2 * lo_x - cx; vx = -vx; }
        if (cx > hi_x) { cx = 2 * hi_x - cx; vx = -vx; }
        if (cy < lo_y) { cy = 2 * lo_y - cy; vy = -vy; }
        if (cy > hi_y) { cy = 2 * hi_y - cy; vy = -vy; }
    }

    bool covers(ObjectShape shape, int r, int c) const {
        const double dx = c + 0.5 - cx;
        const double dy = r + 0.5 - cy;
        if (shape == ObjectShape::Disk) return dx * dx + dy * dy <= hx * hx;
        return std::abs(dx) <= hx && std::abs(dy) <= hy;
    }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Mover make_mover(std::mt19937_64& rng, const SynthSceneSpec& spec, double depth) {
    const double s = spec.size;
    Mover m{};
    if (spec.object_shape == ObjectShape::Disk) {
        m.hx = m.hy = uniform(rng, 0.11, 0.17) * s;
    } else {
        m.hx = uniform(rng, 0.09, 0.17) * s;
        m.hy = uniform(rng, 0.09, 0.17) * s;
    }
    m.cx = uniform(rng, m.hx + 1.0, s - 2.0 - m.hx);
    m.cy = uniform(rng, m.hy + 1.0, s - 2.0 - m.hy);
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double speed = spec.velocity * s / 64.0;
    m.vx = speed * std::cos(angle);
    m.vy = speed * std::sin(angle);
    m.depth = depth;
    return m;
}

std::array<double, 3> random_colour(std::mt19937_64& rng) {
    return {uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)};
}

double colour_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

std::string frame_name(int t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", t);
    return buf;
}

const std::set<std::string>& image_extensions() {
    static const std::set<std::string> ext{".png", ".jpg", ".jpeg", ".bmp"};
    return ext;
}

std::map<std::string, fs::path> list_frames(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (image_extensions().count(ext)) out.emplace(e.path().stem().string(), e.path());
    }
    return out;
}

torch::Tensor resize_image(const torch::Tensor& x, int64_t size, bool nearest) {
    if (x.size(1) == size && x.size(2) == size) return x;
    auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>{size, size});
    if (nearest) {
        opts.mode(torch::kNearest);
    } else {
        opts.mode(torch::kBilinear).align_corners(false);
    }
    return F::interpolate(x.unsqueeze(0), opts).squeeze(0).clamp(0.0, 1.0);
}

}  // namespace

std::vector<SynthFrame> render_scene(const SynthSceneSpec& spec) {
    if (spec.size < 16 || spec.num_frames < 1) throw ConfigError("synthetic scene needs size >= 16 and frames >= 1");
    if (spec.object_depth < 0.0 || spec.object_depth > 0.3) throw ConfigError("object_depth must be in [0, 0.3]");
    std::mt19937_64 rng(spec.seed);
    const int s = spec.size;

    const auto bg_top = random_colour(rng);
    const auto bg_bottom = random_colour(rng);
    auto colour = random_colour(rng);
    while (colour_distance(colour, bg_top) < 0.8 || colour_distance(colour, bg_bottom) < 0.8) colour = random_colour(rng);

    Mover object = make_mover(rng, spec, spec.object_depth);
    std::vector<Mover> distractors;
    for (int k = 0; k < spec.distractor_count; ++k) distractors.push_back(make_mover(rng, spec, uniform(rng, 0.75, 0.9)));

    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    std::uniform_real_distribution<double> depth_noise(-0.01, 0.01);

    std::vector<SynthFrame> frames;
    frames.reserve(static_cast<size_t>(spec.num_frames));
    const size_t plane = static_cast<size_t>(s) * s;
    for (int t = 0; t < spec.num_frames; ++t) {
        std::vector<float> rgb(3 * plane), depth(plane), gt(plane, 0.f), dis(plane, 0.f);
        for (int r = 0; r < s; ++r) {
            const double a = (r + 0.5) / s;
            for (int c = 0; c < s; ++c) {
                const size_t i = static_cast<size_t>(r) * s + c;
                std::array<double, 3> px{};
                for (int ch = 0; ch < 3; ++ch) px[ch] = (1 - a) * bg_top[ch] + a * bg_bottom[ch];
                double d = 0.5 + 0.1 * a;
                for (const auto& m : distractors) {
                    if (m.covers(spec.object_shape, r, c)) {
                        px = colour;
                        d = m.depth + 0.05 * ((r + 0.5 - m.cy) / (2 * m.hy) + 0.5);
                        dis[i] = 1.f;
                    }
                }
                if (object.covers(spec.object_shape, r, c)) {
                    px = colour;
                    d = object.depth + 0.05 * ((r + 0.5 - object.cy) / (2 * object.hy) + 0.5);
                    gt[i] = 1.f;
                    dis[i] = 0.f;
                }
                for (int ch = 0; ch < 3; ++ch) {
                    rgb[ch * plane + i] = static_cast<float>(std::clamp(px[ch] + noise(rng), 0.0, 1.0));
                }
                depth[i] = static_cast<float>(std::clamp(d + depth_noise(rng), 0.0, 1.0));
            }
        }
        SynthFrame f;
        f.rgb = torch::from_blob(rgb.data(), {3, s, s}, torch::kFloat32).clone();
        f.depth = torch::from_blob(depth.data(), {1, s, s}, torch::kFloat32).clone();
        f.gt = torch::from_blob(gt.data(), {1, s, s}, torch::kFloat32).clone();
        f.distractors = torch::from_blob(dis.data(), {1, s, s}, torch::kFloat32).clone();
        frames.push_back(std::move(f));

        object.advance(s);
        for (auto& m : distractors) m.advance(s);
    }
    return frames;
}

std::vector<SynthSceneSpec> dataset_specs(uint64_t seed, int videos, int frames, int size) {
    if (videos < 1) throw ConfigError("need at least one video");
    std::mt19937_64 rng(seed);
    std::vector<SynthSceneSpec> specs;
    for (int v = 0; v < videos; ++v) {
        SynthSceneSpec s;
        s.seed = rng();
        s.num_frames = frames;
        s.size = size;
        s.object_shape = (rng() & 1) ? ObjectShape::Rectangle : ObjectShape::Disk;
        s.object_depth = uniform(rng, 0.1, 0.25);
        s.distractor_count = 1 + static_cast<int>(rng() % 2);
        s.velocity = uniform(rng, 1.0, 2.0);
        s.noise_sigma = 0.02;
        specs.push_back(s);
    }
    return specs;
}

void write_scene(const SynthSceneSpec& spec, const fs::path& root, const std::string& video_id) {
    const auto frames = render_scene(spec);
    const auto dir = root / video_id;
    for (const auto* sub : {"RGB", "depth", "GT"}) {
        std::error_code ec;
        fs::create_directories(dir / sub, ec);
        if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
    }
    for (size_t t = 0; t < frames.size(); ++t) {
        const auto name = frame_name(static_cast<int>(t)) + ".png";
        write_rgb8(dir / "RGB" / name, frames[t].rgb);
        write_gray16(dir / "depth" / name, frames[t].depth);
        write_gray8(dir / "GT" / name, frames[t].gt);
    }
}

void generate_dataset(uint64_t seed, int videos, int frames, const fs::path& root, int size) {
    const auto specs = dataset_specs(seed, videos, frames, size);
    for (size_t v = 0; v < specs.size(); ++v) {
        char id[32];
        std::snprintf(id, sizeof(id), "video_%03zu", v);
        write_scene(specs[v], root, id);
    }
}

VideoHandle load_video(const fs::path& dir, bool require_gt) {
    if (!fs::is_directory(dir)) throw IoError("video directory not found: " + dir.string());
    for (const auto* sub : {"RGB", "depth"}) {
        if (!fs::is_directory(dir / sub)) throw DataError("video " + dir.string() + " has no " + sub + " folder");
    }
    const bool has_gt = fs::is_directory(dir / "GT");
    if (require_gt && !has_gt) throw DataError("video " + dir.string() + " has no GT folder");

    const auto rgb = list_frames(dir / "RGB");
    const auto depth = list_frames(dir / "depth");
    std::vector<std::string> missing;
    for (const auto& [name, p] : rgb) {
        if (!depth.count(name)) missing.push_back("depth/" + name);
    }
    for (const auto& [name, p] : depth) {
        if (!rgb.count(name)) missing.push_back("RGB/" + name);
    }
    if (!missing.empty()) {
        std::string list;
        for (size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
        if (missing.size() > 10) list += ", ...";
        throw DataError("RGB/depth frame mismatch in " + dir.string() + " (" + std::to_string(rgb.size()) +
                        " RGB vs " + std::to_string(depth.size()) + " depth); missing: " + list);
    }

    const auto gt = has_gt ? list_frames(dir / "GT") : std::map<std::string, fs::path>{};
    VideoHandle v;
    v.id = dir.filename().string();
    v.root = dir;
    for (const auto& [name, p] : rgb) {
        FrameRecord r{name, p, depth.at(name), std::nullopt};
        if (auto it = gt.find(name); it != gt.end()) {
            r.gt = it->second;
            v.labeled.push_back(v.frames.size());
        }
        v.frames.push_back(std::move(r));
    }
    if (v.frames.empty()) throw DataError("video " + dir.string() + " has no frames");
    return v;
}

std::vector<VideoHandle> load_video_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<VideoHandle> out;
    for (const auto& d : dirs) {
        auto v = load_video(d, true);
        if (!v.labeled.empty()) out.push_back(std::move(v));
    }
    if (out.empty()) throw DataError("no labeled videos under " + root.string());
    return out;
}

LoadedFrame load_frame(const VideoHandle& video, size_t index, int64_t size) {
    if (index >= video.frames.size()) throw DataError("frame index out of range in video " + video.id);
    const auto& r = video.frames[index];
    LoadedFrame f;
    auto rgb = read_rgb(r.rgb);
    f.source_height = rgb.size(1);
    f.source_width = rgb.size(2);
    f.rgb = resize_image(rgb, size, false);
    f.depth = resize_image(read_gray(r.depth), size, false);
    if (f.rgb.sizes().slice(1) != f.depth.sizes().slice(1)) {
        throw DataError("RGB and depth sizes differ for frame " + video.id + "/" + r.name);
    }
    if (r.gt) f.gt = (resize_image(read_gray(*r.gt), size, true) >= 0.5).to(torch::kFloat32);
    return f;
}

std::vector<size_t> sample_indices(size_t n, size_t length, std::mt19937_64& rng) {
    if (n == 0) throw DataError("cannot sample a clip from an empty video");
    std::vector<size_t> out;
    if (n >= length) {
        std::vector<size_t> all(n);
        for (size_t i = 0; i < n; ++i) all[i] = i;
        // Partial Fisher-Yates: the first `length` entries are a uniform sample.
        for (size_t i = 0; i < length; ++i) {
            std::uniform_int_distribution<size_t> pick(i, n - 1);
            std::swap(all[i], all[pick(rng)]);
        }
        out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(length));
    } else {
        std::uniform_int_distribution<size_t> pick(0, n - 1);
        for (size_t i = 0; i < length; ++i) out.push_back(pick(rng));
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

VideoClip assemble(const VideoHandle& video, const std::vector<size_t>& indices, int64_t size) {
    VideoClip clip;
    clip.video_id = video.id;
    clip.frame_indices = indices;
    std::vector<torch::Tensor> rgb, depth, gt;
    for (size_t idx : indices) {
        auto f = load_frame(video, idx, size);
        if (!f.gt.defined()) throw DataError("frame " + video.frames[idx].name + " of " + video.id + " is unlabeled");
        rgb.push_back(f.rgb);
        depth.push_back(f.depth);
        gt.push_back(f.gt);
    }
    clip.rgb = torch::stack(rgb);
    clip.depth = torch::stack(depth);
    clip.gt = torch::stack(gt);
    return clip;
}

}  // namespace

VideoClip sample_clip(const VideoHandle& video, size_t length, std::mt19937_64& rng, int64_t size) {
    const auto picks = sample_indices(video.labeled.size(), length, rng);
    std::vector<size_t> indices;
    for (size_t p : picks) indices.push_back(video.labeled[p]);
    return assemble(video, indices, size);
}

VideoClip full_clip(const VideoHandle& video, int64_t size) { return assemble(video, video.labeled, size); }

}  // namespace daq
