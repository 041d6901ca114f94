#include "daq/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "daq/errors.hpp"

namespace daq {

namespace {

cv::Mat load(const std::filesystem::path& path, int flags) {
    if (!std::filesystem::exists(path)) throw IoError("file not found: " + path.string());
    cv::Mat m = cv::imread(path.string(), flags);
    if (m.empty()) throw IoError("cannot decode image: " + path.string());
    return m;
}

torch::Tensor to_unit(const cv::Mat& m, torch::Dtype dtype = torch::kFloat32) {
    double scale = 1.0;
    switch (m.depth()) {
        case CV_8U: scale = 255.0; break;
        case CV_16U: scale = 65535.0; break;
        default: throw IoError("unsupported image bit depth");
    }
    const bool wide = dtype == torch::kFloat64;
    cv::Mat f;
    m.convertTo(f, wide ? CV_64F : CV_32F, 1.0 / scale);
    auto t = torch::from_blob(f.data, {f.rows, f.cols, f.channels()}, wide ? torch::kFloat64 : torch::kFloat32).clone();
    return t.permute({2, 0, 1}).contiguous();
}

void save(const std::filesystem::path& path, const cv::Mat& m) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), m);
    } catch (const cv::Exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw IoError("cannot write " + path.string());
}

cv::Mat quantize(const torch::Tensor& x, double scale, int type) {
    auto t = x.detach().to(torch::kCPU, torch::kFloat64);
    if (t.dim() == 3) {
        if (t.size(0) != 1) throw ShapeError("expected a single-channel map");
        t = t.squeeze(0);
    }
    if (t.dim() != 2) throw ShapeError("expected (H, W) or (1, H, W)");
    t = (t.clamp(0.0, 1.0) * scale).round().contiguous();
    cv::Mat d(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_64F, t.data_ptr<double>());
    cv::Mat out;
    d.convertTo(out, type);
    return out;
}

}  // namespace

torch::Tensor read_rgb(const std::filesystem::path& path) {
    cv::Mat m = load(path, cv::IMREAD_COLOR);
    cv::Mat rgb;
    cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB);
    return to_unit(rgb);
}

torch::Tensor read_gray(const std::filesystem::path& path, torch::Dtype dtype) {
    cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
    if (m.channels() == 3) {
        cv::Mat g;
        cv::cvtColor(m, g, cv::COLOR_BGR2GRAY);
        m = g;
    } else if (m.channels() == 4) {
        cv::Mat g;
        cv::cvtColor(m, g, cv::COLOR_BGRA2GRAY);
        m = g;
    }
    return to_unit(m, dtype);
}

void write_gray8(const std::filesystem::path& path, const torch::Tensor& x) {
    save(path, quantize(x, 255.0, CV_8U));
}

void write_gray16(const std::filesystem::path& path, const torch::Tensor& x) {
    save(path, quantize(x, 65535.0, CV_16U));
}

void write_rgb8(const std::filesystem::path& path, const torch::Tensor& x) {
    if (x.dim() != 3 || x.size(0) != 3) throw ShapeError("write_rgb8 expects (3, H, W)");
    auto t = (x.detach().to(torch::kCPU, torch::kFloat64).clamp(0.0, 1.0) * 255.0).round();
    t = t.permute({1, 2, 0}).to(torch::kUInt8).contiguous();
    cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr<uint8_t>());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    save(path, bgr);
}

}  // namespace daq
