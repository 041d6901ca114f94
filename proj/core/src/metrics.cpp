#include "daq/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "daq/errors.hpp"
#include "daq/image_io.hpp"

namespace daq {

namespace {

constexpr double kEps = DBL_EPSILON;
constexpr double kAlignEps = 1e-8;
constexpr double kBeta2 = 0.3;

void check_same(const SaliencyMap& a, const SaliencyMap& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("map sizes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double fg_fraction(const SaliencyMap& gt) {
    size_t n = 0;
    for (double g : gt.values) n += g > 0.5;
    return static_cast<double>(n) / static_cast<double>(gt.size());
}

// Similarity of one region's values to an ideal all-ones region.
double object_similarity(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    const double mu = mean_of(x);
    double var = 0.0;
    if (x.size() > 1) {
        for (double v : x) var += (v - mu) * (v - mu);
        var /= static_cast<double>(x.size() - 1);
    }
    return 2.0 * mu / (mu * mu + 1.0 + std::sqrt(var) + kEps);
}

double s_object(const SaliencyMap& pred, const SaliencyMap& gt) {
    std::vector<double> fg, bg;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (gt.values[i] > 0.5) {
            fg.push_back(pred.values[i]);
        } else {
            bg.push_back(1.0 - pred.values[i]);
        }
    }
    const double u = fg_fraction(gt);
    return u * object_similarity(fg) + (1.0 - u) * object_similarity(bg);
}

double block_ssim(const SaliencyMap& pred, const SaliencyMap& gt, int r0, int r1, int c0, int c1) {
    const int n = (r1 - r0) * (c1 - c0);
    if (n <= 0) return 0.0;
    double mx = 0.0, my = 0.0;
    for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
            mx += pred.at(r, c);
            my += gt.at(r, c) > 0.5 ? 1.0 : 0.0;
        }
    }
    mx /= n;
    my /= n;
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    if (n > 1) {
        for (int r = r0; r < r1; ++r) {
            for (int c = c0; c < c1; ++c) {
                const double dx = pred.at(r, c) - mx;
                const double dy = (gt.at(r, c) > 0.5 ? 1.0 : 0.0) - my;
                sx += dx * dx;
                sy += dy * dy;
                sxy += dx * dy;
            }
        }
        sx /= n - 1;
        sy /= n - 1;
        sxy /= n - 1;
    }
    const double a = 4.0 * mx * my * sxy;
    const double b = (mx * mx + my * my) * (sx + sy);
    if (a != 0.0) return a / (b + kEps);
    return b == 0.0 ? 1.0 : 0.0;
}

double s_region(const SaliencyMap& pred, const SaliencyMap& gt) {
    const int h = gt.height;
    const int w = gt.width;
    double sr = 0.0, sc = 0.0;
    size_t n = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (gt.at(r, c) > 0.5) {
                sr += r;
                sc += c;
                ++n;
            }
        }
    }
    // Split point: rounded centroid plus one (half-to-even rounding).
    int x, y;
    if (n == 0) {
        x = static_cast<int>(std::nearbyint(w / 2.0)) + 1;
        y = static_cast<int>(std::nearbyint(h / 2.0)) + 1;
    } else {
        x = static_cast<int>(std::nearbyint(sc / static_cast<double>(n))) + 1;
        y = static_cast<int>(std::nearbyint(sr / static_cast<double>(n))) + 1;
    }
    x = std::min(x, w);
    y = std::min(y, h);
    const double area = static_cast<double>(h) * w;
    const double w1 = static_cast<double>(x) * y / area;
    const double w2 = static_cast<double>(w - x) * y / area;
    const double w3 = static_cast<double>(x) * (h - y) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    return w1 * block_ssim(pred, gt, 0, y, 0, x) + w2 * block_ssim(pred, gt, 0, y, x, w) +
           w3 * block_ssim(pred, gt, y, h, 0, x) + w4 * block_ssim(pred, gt, y, h, x, w);
}

std::filesystem::path key_of(const std::filesystem::path& rel) {
    std::filesystem::path out;
    for (const auto& part : rel) {
        if (part != "GT") out /= part;
    }
    return out;
}

bool under_gt(const std::filesystem::path& rel) {
    return std::any_of(rel.begin(), rel.end(), [](const auto& part) { return part == "GT"; });
}

// With `gt_only`, a tree that has GT folders contributes only the files inside them.
std::map<std::filesystem::path, std::filesystem::path> index_pngs(const std::filesystem::path& root, bool gt_only) {
    if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root.string());
    std::vector<std::filesystem::path> rels;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        rels.push_back(std::filesystem::relative(e.path(), root));
    }
    const bool filter = gt_only && std::any_of(rels.begin(), rels.end(), under_gt);
    std::map<std::filesystem::path, std::filesystem::path> out;
    for (const auto& rel : rels) {
        if (filter && !under_gt(rel)) continue;
        out.emplace(key_of(rel), root / rel);
    }
    return out;
}

SaliencyMap load_map(const std::filesystem::path& p) {
    auto t = read_gray(p, torch::kFloat64).squeeze(0).contiguous();
    const auto* d = t.data_ptr<double>();
    return SaliencyMap(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)),
                       std::vector<double>(d, d + t.numel()));
}

}  // namespace

SaliencyMap::SaliencyMap(int h, int w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != static_cast<size_t>(h) * static_cast<size_t>(w)) {
        throw ShapeError("map has " + std::to_string(values.size()) + " values for " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
}

double adaptive_threshold(const SaliencyMap& pred) { return std::min(2.0 * mean_of(pred.values), 1.0); }

SaliencyMap binarize_adaptive(const SaliencyMap& pred) {
    const double t = adaptive_threshold(pred);
    SaliencyMap out(pred.height, pred.width);
    for (size_t i = 0; i < pred.size(); ++i) out.values[i] = (pred.values[i] >= t && pred.values[i] > 0.0) ? 1.0 : 0.0;
    return out;
}

double mae(const SaliencyMap& pred, const SaliencyMap& gt) {
    check_same(pred, gt);
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.values[i] - gt.values[i]);
    return s / static_cast<double>(pred.size());
}

double f_measure(const SaliencyMap& pred, const SaliencyMap& gt) {
    check_same(pred, gt);
    const auto bin = binarize_adaptive(pred);
    double tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < bin.size(); ++i) {
        const bool p = bin.values[i] > 0.5;
        const bool g = gt.values[i] > 0.5;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    if (tp + fn == 0) return tp + fp == 0 ? 1.0 : 0.0;
    if (tp == 0) return 0.0;
    const double precision = tp / (tp + fp);
    const double recall = tp / (tp + fn);
    return (1.0 + kBeta2) * precision * recall / (kBeta2 * precision + recall);
}

double s_measure(const SaliencyMap& pred, const SaliencyMap& gt) {
    check_same(pred, gt);
    const double y = fg_fraction(gt);
    if (y == 0.0) return 1.0 - mean_of(pred.values);
    if (y == 1.0) return mean_of(pred.values);
    const double s = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt);
    return std::max(0.0, s);
}

double e_measure(const SaliencyMap& pred, const SaliencyMap& gt) {
    check_same(pred, gt);
    const auto bin = binarize_adaptive(pred);
    const double y = fg_fraction(gt);
    if (y == 0.0) return 1.0 - mean_of(bin.values);
    if (y == 1.0) return mean_of(bin.values);
    const double mp = mean_of(bin.values);
    double s = 0.0;
    for (size_t i = 0; i < bin.size(); ++i) {
        const double fp = bin.values[i] - mp;
        const double fg = (gt.values[i] > 0.5 ? 1.0 : 0.0) - y;
        const double xi = 2.0 * fp * fg / (fp * fp + fg * fg + kAlignEps);
        s += (1.0 + xi) * (1.0 + xi) / 4.0;
    }
    return s / static_cast<double>(bin.size());
}

EvalResult evaluate(const SaliencyMap& pred, const SaliencyMap& gt) {
    return {e_measure(pred, gt), s_measure(pred, gt), f_measure(pred, gt), mae(pred, gt)};
}

DatasetEval evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
    const auto preds = index_pngs(pred_dir, false);
    const auto gts = index_pngs(gt_dir, true);
    if (gts.empty()) throw DataError("no ground-truth PNG files under " + gt_dir.string());
    DatasetEval out;
    for (const auto& [key, gt_path] : gts) {
        auto it = preds.find(key);
        if (it == preds.end()) throw DataError("missing prediction for frame " + key.string());
        auto gt = load_map(gt_path);
        for (auto& v : gt.values) v = v * 255.0 >= 127.5 ? 1.0 : 0.0;  // byte >= 128
        auto pred = load_map(it->second);
        out.frames.push_back({key.string(), evaluate(pred, gt)});
    }
    const double n = static_cast<double>(out.frames.size());
    for (const auto& f : out.frames) {
        out.mean.e_measure += f.result.e_measure / n;
        out.mean.s_measure += f.result.s_measure / n;
        out.mean.f_measure += f.result.f_measure / n;
        out.mean.mae += f.result.mae / n;
    }
    return out;
}

std::string to_csv(const DatasetEval& eval) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "frame,e_measure,s_measure,f_measure,mae\n";
    auto row = [&](const std::string& name, const EvalResult& r) {
        os << name << "," << r.e_measure << "," << r.s_measure << "," << r.f_measure << "," << r.mae << "\n";
    };
    for (const auto& f : eval.frames) row(f.frame, f.result);
    row("mean", eval.mean);
    return os.str();
}

std::string to_markdown(const EvalResult& m, const std::string& label) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << "| Method | E_xi ↑ | S_alpha ↑ | F_beta ↑ | M ↓ |\n";
    os << "|---|---|---|---|---|\n";
    os << "| " << label << " | " << m.e_measure << " | " << m.s_measure << " | " << m.f_measure << " | " << m.mae
       << " |\n";
    return os.str();
}

}  // namespace daq
