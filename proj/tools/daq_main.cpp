// daq: train, evaluate, ablate and benchmark the model from the command line.
//
// Errors are reported as one JSON line on stderr:
//   {"error":"<kind>","message":"..."}
// with exit code 2 for usage errors and 1 for everything else.

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include <fstream>
#include <iostream>

#include "daq/ablation.hpp"
#include "daq/config.hpp"
#include "daq/data.hpp"
#include "daq/errors.hpp"
#include "daq/metrics.hpp"
#include "daq/peft.hpp"
#include "daq/trainer.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, int code = 1) {
    nlohmann::json j{{"error", kind}, {"message", message}};
    std::cerr << j.dump() << std::endl;
    return code;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw daq::IoError("cannot write " + path.string());
    out << text;
}

daq::Config config_from(const std::string& path, const std::vector<std::string>& overrides) {
    auto cfg = path.empty() ? daq::Config{} : daq::load_config(path);
    daq::apply_overrides(cfg, overrides);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAM-DAQ desk-scale toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--set", overrides, "key=value override (repeatable)");

    std::string pred_dir, gt_dir, out_path, markdown_path;
    auto* eval = app.add_subcommand("eval", "score predicted masks against ground truth");
    eval->add_option("--pred", pred_dir, "prediction directory")->required();
    eval->add_option("--gt", gt_dir, "ground-truth directory")->required();
    eval->add_option("--out", out_path, "per-frame CSV output")->required();
    eval->add_option("--markdown", markdown_path, "also write the mean row as a markdown table");

    std::string axis;
    auto* ablate = app.add_subcommand("ablate", "train and score every row of one ablation table");
    ablate->add_option("--axis", axis, "peft_topology|embedding_mode|query_counts|hidden_dim|update_strategy|"
                                       "supervised_levels")
        ->required();
    ablate->add_option("--config", config_path, "base config file");
    ablate->add_option("--set", overrides, "key=value override (repeatable)");
    ablate->add_option("--out", out_path, "write the markdown table here as well");

    uint64_t seed = 0;
    int videos = 5, frames = 10, size = 64;
    std::string out_dir;
    auto* gen = app.add_subcommand("gen-data", "write a synthetic RGB-D video dataset");
    gen->add_option("--seed", seed, "generator seed")->required();
    gen->add_option("--videos", videos, "number of videos")->required()->check(CLI::PositiveNumber);
    gen->add_option("--frames", frames, "frames per video")->required()->check(CLI::PositiveNumber);
    gen->add_option("--out", out_dir, "output root")->required();
    gen->add_option("--size", size, "frame size in pixels")->check(CLI::Range(16, 4096));

    int bench_frames = 10, repeats = 1;
    auto* bench = app.add_subcommand("bench-memory", "peak training memory of each adapter topology");
    bench->add_option("--config", config_path, "config file")->required();
    bench->add_option("--set", overrides, "key=value override (repeatable)");
    bench->add_option("--frames", bench_frames, "frames per clip")->check(CLI::PositiveNumber);
    bench->add_option("--repeats", repeats, "measurements per variant (the maximum is reported)")
        ->check(CLI::PositiveNumber);
    bench->add_option("--out", out_path, "also write the CSV here");

    std::string ckpt, video_dir;
    auto* predict = app.add_subcommand("predict", "predict masks for one video");
    predict->add_option("--ckpt", ckpt, "checkpoint file")->required();
    predict->add_option("--video", video_dir, "video directory with RGB/ and depth/")->required();
    predict->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        torch::manual_seed(0);
        if (*train) {
            auto cfg = config_from(config_path, overrides);
            daq::train(cfg, &std::cout);
            std::cout << "checkpoint: " << (std::filesystem::path(cfg.output_dir) / "checkpoint.pt").string() << "\n";
        } else if (*eval) {
            auto res = daq::evaluate_dataset(pred_dir, gt_dir);
            write_text(out_path, daq::to_csv(res));
            const auto md = daq::to_markdown(res.mean, std::filesystem::path(pred_dir).filename().string());
            if (!markdown_path.empty()) write_text(markdown_path, md);
            std::cout << md;
        } else if (*ablate) {
            const auto a = daq::parse_ablation_axis(axis);
            auto cfg = config_from(config_path, overrides);
            if (cfg.dataset.empty()) throw daq::ConfigError("config key 'dataset' is required for ablation");
            auto train_videos = daq::load_video_dataset(cfg.dataset);
            auto eval_videos = cfg.eval_dataset.empty() ? train_videos : daq::load_video_dataset(cfg.eval_dataset);
            auto table = daq::run_ablation(a, cfg, train_videos, eval_videos, &std::cerr);
            const auto md = daq::to_markdown(table);
            if (!out_path.empty()) write_text(out_path, md);
            std::cout << md;
        } else if (*gen) {
            daq::generate_dataset(seed, videos, frames, out_dir, size);
            std::cout << "wrote " << videos << " videos x " << frames << " frames to " << out_dir << "\n";
        } else if (*bench) {
            auto cfg = config_from(config_path, overrides);
            std::vector<daq::PeftReport> rows;
            for (const auto& v : daq::peft_variants(cfg)) {
                daq::PeftReport best;
                for (int r = 0; r < repeats; ++r) {
                    auto rep = daq::measure_variant(v.name, v.config, bench_frames);
                    if (r == 0 || (rep.memory && best.memory && rep.memory->peak_bytes > best.memory->peak_bytes)) {
                        best = rep;
                    }
                }
                rows.push_back(best);
            }
            const auto csv = daq::peft_report_csv(rows);
            if (!out_path.empty()) write_text(out_path, csv);
            std::cout << csv;
        } else if (*predict) {
            const auto n = daq::predict_video(ckpt, video_dir, out_dir);
            std::cout << "wrote " << n << " masks to " << out_dir << "\n";
        }
    } catch (const daq::Error& e) {
        return fail(e.kind(), e.what());
    } catch (const c10::Error& e) {
        return fail("runtime", e.what_without_backtrace());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("io", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
