// Acceptance checks. One PASS/FAIL line per criterion.
//
//   daq_acceptance [--criterion N]... [--workdir DIR]
//
// Without --criterion all nine run in order. The exit code is the number of
// failed criteria (capped at 100).

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "daq/ablation.hpp"
#include "daq/checkpoint.hpp"
#include "daq/data.hpp"
#include "daq/errors.hpp"
#include "daq/losses.hpp"
#include "daq/metrics.hpp"
#include "daq/model.hpp"
#include "daq/peft.hpp"
#include "daq/trainer.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace daq;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

fs::path g_workdir;

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
    Stopwatch sw;
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<int> dim(1, 8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const int h = dim(rng), w = dim(rng);
        SaliencyMap p(h, w), g(h, w);
        const double density = u(rng);
        for (size_t i = 0; i < p.size(); ++i) {
            p.values[i] = u(rng) < 0.2 ? std::round(u(rng)) : u(rng);
            g.values[i] = u(rng) < density ? 1.0 : 0.0;
        }
        const auto gp = oracle::make_grid(h, w, p.values);
        const auto gg = oracle::make_grid(h, w, g.values);
        worst = std::max({worst, std::abs(daq::mae(p, g) - oracle::mae(gp, gg)),
                          std::abs(daq::f_measure(p, g) - oracle::f_measure(gp, gg)),
                          std::abs(daq::s_measure(p, g) - oracle::s_measure(gp, gg)),
                          std::abs(daq::e_measure(p, g) - oracle::e_measure(gp, gg))});
    }
    const double t = sw.seconds();
    return {worst <= 1e-9 && t < 10.0, "200 pairs, max diff " + fmt(worst) + ", " + fmt(t, 3) + " s"};
}

Outcome zero_adapter_equivalence() {
    Config cfg;
    auto model = build_model(cfg);
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        auto rgb = testing_support::rand_like_gen({1, 3, cfg.input_size, cfg.input_size}, seed);
        auto depth = testing_support::rand_like_gen({1, 1, cfg.input_size, cfg.input_size}, seed + 10);
        auto out = model->encoder->encode(rgb, depth);
        torch::NoGradGuard ng;
        auto pyr = model->encoder->frozen_pyramid(rgb);
        auto feats = model->encoder->backbone->forward(rgb);
        for (int i = 0; i < 3; ++i) worst = std::max(worst, testing_support::max_abs_diff(out.pyramid[i], pyr[i]));
        for (int i = 0; i < 4; ++i) {
            worst = std::max(worst, testing_support::max_abs_diff(out.rgb_features[i], feats[i]));
        }
    }
    return {worst == 0.0, "max abs diff " + fmt(worst) + " over 3 inputs, 4 stages, 3 levels"};
}

fs::path ensure_dataset(const std::string& name, uint64_t seed, int videos, int frames, int size) {
    auto root = g_workdir / name;
    const auto marker = root / ".complete";
    if (!fs::exists(marker)) {
        fs::remove_all(root);
        generate_dataset(seed, videos, frames, root, size);
        std::ofstream(marker) << seed << " " << videos << " " << frames << " " << size << "\n";
    }
    return root;
}

Outcome frozen_immutability() {
    auto data = ensure_dataset("synth_5x10_64", 1, 5, 10, 64);
    Config cfg;
    cfg.learning_rate = 1e-3;
    Trainer trainer(cfg, load_video_dataset(data));
    std::map<std::string, torch::Tensor> frozen;
    for (const auto& p : trainer.model()->named_parameters()) {
        if (!p.value().requires_grad()) frozen.emplace(p.key(), p.value().detach().clone());
    }
    auto before = testing_support::snapshot(*trainer.model());
    trainer.run(50);

    size_t changed_frozen = 0, moved_trainable = 0;
    for (const auto& p : trainer.model()->named_parameters()) {
        const bool same = testing_support::bitwise_equal(p.value(), before.at(p.key()));
        if (frozen.count(p.key())) {
            changed_frozen += same ? 0 : 1;
        } else {
            moved_trainable += same ? 0 : 1;
        }
    }

    std::string counts;
    bool counts_ok = true;
    for (const auto& v : peft_variants(cfg)) {
        const auto got = count_params(*build_model(v.config));
        const auto want = oracle::model_params(v.config);
        counts_ok = counts_ok && got.trainable == want.trainable && got.total == want.total;
        counts += " " + v.name + "=" + std::to_string(got.trainable) + "/" + std::to_string(got.total);
    }
    const bool pass = changed_frozen == 0 && !frozen.empty() && moved_trainable > 0 && counts_ok;
    return {pass, std::to_string(frozen.size()) + " frozen arrays, " + std::to_string(changed_frozen) +
                      " changed after 50 iterations; counts" + (counts_ok ? " match:" : " MISMATCH:") + counts};
}

Outcome gradient_check() {
    Stopwatch sw;
    auto cfg = testing_support::tiny_config();
    cfg.precision = Precision::Float64;
    cfg.grad_bypass = false;  // the exact gradient of the function
    cfg.supervised_levels = {3, 4};
    auto model = build_model(cfg);
    testing_support::randomize_trainable(*model, 2024);
    const auto dt = torch::kFloat64;
    auto rgb = testing_support::rand_like_gen({3, 3, 16, 16}, 1, dt);
    auto depth = testing_support::rand_like_gen({3, 1, 16, 16}, 2, dt);
    auto gt = (testing_support::rand_like_gen({3, 1, 16, 16}, 3, dt) > 0.5).to(dt);
    auto clip_loss_fn = [&] {
        auto outs = model->forward_clip(rgb, depth);
        auto loss = torch::zeros({}, torch::TensorOptions().dtype(dt));
        for (size_t t = 0; t < outs.size(); ++t) {
            const auto g = gt.slice(0, static_cast<int64_t>(t), static_cast<int64_t>(t) + 1);
            loss = loss + total_loss(outs[t].prediction, outs[t].intermediate_preds, g, 0.5).total;
        }
        return loss / static_cast<double>(outs.size());
    };

    const std::vector<std::string> groups[] = {
        {"encoder.depth_adapter1.down.weight", "encoder.depth_adapter3.up.weight", "encoder.rgb_adapter2.down.weight",
         "encoder.rgb_adapter4.up.weight", "encoder.rgb_adapter3.up.bias"},
        {"encoder.depth_projector.proj.weight", "encoder.depth_projector.proj.bias"},
        {"qtm.frame_queries", "qtm.video_queries", "qtm.enhance_attn.q.base.weight",
         "qtm.update_block.cross_attn.v.base.weight", "qtm.update_block.ffn_out.weight",
         "qtm.memory_encoder.conv1.weight"},
    };
    const char* group_names[] = {"adapter", "projector", "qtm"};
    auto params = model->named_parameters();
    std::string detail;
    bool pass = true;
    int checked = 0;
    for (int gi = 0; gi < 3; ++gi) {
        double worst = 0.0;
        for (const auto& name : groups[gi]) {
            auto p = params[name];
            worst = std::max(worst, testing_support::fd_relative_error(
                                        clip_loss_fn, p, testing_support::sample_indices(p.numel(), 4), 1e-5, 1e-6));
            checked += static_cast<int>(std::min<int64_t>(4, p.numel()));
        }
        pass = pass && worst <= 1e-3;
        detail += std::string(group_names[gi]) + " " + fmt(worst, 3) + ", ";
    }

    // Loss: gradient with respect to the predictions themselves.
    auto p = (testing_support::rand_like_gen({1, 1, 16, 16}, 4, dt) * 0.9 + 0.05).set_requires_grad(true);
    auto p4 = (testing_support::rand_like_gen({1, 1, 16, 16}, 5, dt) * 0.9 + 0.05).set_requires_grad(true);
    auto g0 = gt.slice(0, 0, 1);
    auto loss_fn = [&] { return total_loss(p, {{4, p4}}, g0, 0.5).total; };
    const double lw = std::max(
        testing_support::fd_relative_error(loss_fn, p, testing_support::sample_indices(256, 16), 1e-5, 1e-6),
        testing_support::fd_relative_error(loss_fn, p4, testing_support::sample_indices(256, 16), 1e-5, 1e-6));
    checked += 32;
    pass = pass && lw <= 1e-3;
    const double t = sw.seconds();
    pass = pass && t < 120.0;
    return {pass, "max rel err " + detail + "loss " + fmt(lw, 3) + "; " + std::to_string(checked) + " entries, " +
                      fmt(t, 3) + " s"};
}

Outcome qtm_invariants() {
    Config cfg;
    auto model = build_model(cfg);
    torch::NoGradGuard ng;
    const auto s = cfg.input_size;
    auto rgb = testing_support::rand_like_gen({10, 3, s, s}, 7);
    auto depth = testing_support::rand_like_gen({10, 1, s, s}, 8);

    // Attention rows over one frame.
    double row_err = 0.0;
    auto state = model->initial_state();
    auto enc = model->encoder->encode(rgb.slice(0, 0, 1), depth.slice(0, 0, 1));
    auto image = model->qtm->project_image(enc.level(4));
    torch::Tensor w_pool, w_enh, w_cross, w_self;
    auto fe = model->qtm->pool_frame_queries(model->qtm->projected_frame_queries(), image, &w_pool);
    auto enhanced = model->qtm->enhance_video_queries(state.queries, fe, &w_enh);
    auto el = model->qtm->form_learnable_embeddings(enhanced, image);
    auto pred = model->decoder->forward(image, enc.level(3), enc.level(2), el).prediction;
    auto mem = model->qtm->encode_memory(enc.level(4), pred);
    model->qtm->update_block->forward(state.queries, mem, &w_cross, &w_self);
    for (const auto* w : {&w_pool, &w_enh, &w_cross, &w_self}) {
        auto sums = w->sum(-1);
        row_err = std::max(row_err, (sums - 1.0).abs().max().item<double>());
    }

    // Residual identity over a whole clip.
    model->qtm->update_block->ffn_out->weight.zero_();
    model->qtm->update_block->ffn_out->bias.zero_();
    auto st = model->initial_state();
    const auto q0 = st.queries.clone();
    bool constant = true;
    std::vector<int64_t> shape;
    for (int64_t t = 0; t < 10; ++t) {
        auto out = model->step(rgb.slice(0, t, t + 1), depth.slice(0, t, t + 1), st);
        constant = constant && torch::equal(st.queries, q0);
        shape = out.learnable_embeddings.sizes().vec();
    }
    const bool shape_ok = shape == std::vector<int64_t>{1, 8, 64};
    const bool pass = row_err <= 1e-6 && constant && shape_ok;
    return {pass, "row-sum err " + fmt(row_err, 3) + ", trajectory " + (constant ? "constant" : "MOVED") +
                      " over 10 frames, E_L " + std::to_string(shape[1]) + "x" + std::to_string(shape[2])};
}

Outcome memory_direction() {
    Stopwatch sw;
    Config cfg;
    std::map<std::string, std::pair<int64_t, int64_t>> peaks;
    for (const auto& v : peft_variants(cfg)) {
        auto a = measure_variant(v.name, v.config, cfg.clip_length);
        auto b = measure_variant(v.name, v.config, cfg.clip_length);
        if (!a.memory || !b.memory) return {false, "peak-memory counter unsupported"};
        peaks[v.name] = {a.memory->peak_bytes, b.memory->peak_bytes};
    }
    auto hi = [&](const std::string& n) { return std::max(peaks[n].first, peaks[n].second); };
    auto lo = [&](const std::string& n) { return std::min(peaks[n].first, peaks[n].second); };
    double worst_spread = 0.0;
    for (const auto& [n, pr] : peaks) {
        worst_spread = std::max(worst_spread, static_cast<double>(hi(n) - lo(n)) / static_cast<double>(lo(n)));
    }
    const double seq_ratio = static_cast<double>(lo("sequential")) / static_cast<double>(hi("parallel"));
    const double lora_ratio = static_cast<double>(lo("lora")) / static_cast<double>(hi("parallel"));
    const double t = sw.seconds();
    const bool pass = seq_ratio >= 1.2 && lora_ratio > 1.0 && worst_spread <= 0.10 && t < 300.0;
    std::ostringstream os;
    os << "peak MB parallel " << fmt(hi("parallel") / 1e6, 4) << ", sequential " << fmt(hi("sequential") / 1e6, 4)
       << " (x" << fmt(seq_ratio, 3) << "), lora " << fmt(hi("lora") / 1e6, 4) << " (x" << fmt(lora_ratio, 3)
       << "); repeat spread " << fmt(100 * worst_spread, 3) << "%, " << fmt(t, 3) << " s";
    return {pass, os.str()};
}

Config smoke_config() {
    auto cfg = load_config(fs::path(DAQ_SOURCE_DIR) / "configs" / "smoke.cfg");
    cfg.dataset = ensure_dataset("synth_5x10_64", 1, 5, 10, 64).string();
    return cfg;
}

/// Trains `cfg` or reuses a checkpoint of the same config from an earlier run.
nn::SamDaq trained_model(Config cfg, const std::string& tag) {
    cfg.output_dir = (g_workdir / tag).string();
    const auto ckpt = fs::path(cfg.output_dir) / "checkpoint.pt";
    if (fs::exists(ckpt)) {
        try {
            auto loaded = load_checkpoint(ckpt);
            if (loaded.config.to_text() == cfg.to_text() && loaded.iteration == cfg.iterations) {
                std::cerr << "[" << tag << "] reusing " << ckpt << "\n";
                return loaded.model;
            }
        } catch (const Error&) {
        }
    }
    std::cerr << "[" << tag << "] training " << cfg.iterations << " iterations\n";
    return train(cfg, &std::cerr);
}

std::string metrics_text(const EvalResult& r) {
    return "E " + fmt(r.e_measure) + " S " + fmt(r.s_measure) + " F " + fmt(r.f_measure) + " MAE " + fmt(r.mae);
}

Outcome learning_smoke() {
    Stopwatch sw;
    auto cfg = smoke_config();
    auto videos = load_video_dataset(cfg.dataset);
    auto full = trained_model(cfg, "smoke_full");
    const auto with_depth = evaluate_model(full, videos).mean;

    auto ablated_cfg = cfg;
    ablated_cfg.use_depth = false;
    auto ablated = trained_model(ablated_cfg, "smoke_no_depth");
    const auto without_depth = evaluate_model(ablated, videos).mean;

    const double t = sw.seconds();
    const bool fit = with_depth.f_measure >= 0.95 && with_depth.mae <= 0.02;
    const bool depth_helps = composite_score(without_depth) < composite_score(with_depth) &&
                             without_depth.f_measure < with_depth.f_measure;
    return {fit && depth_helps, "with depth: " + metrics_text(with_depth) + "; depth removed: " +
                                    metrics_text(without_depth) + "; " + fmt(t / 60.0, 3) + " min"};
}

Outcome ablation_fidelity() {
    Config base;
    auto labels = [&](AblationAxis a) {
        std::vector<std::string> out;
        for (const auto& v : ablation_variants(a, base)) out.push_back(v.label);
        return out;
    };
    const bool rows_ok =
        labels(AblationAxis::UpdateStrategy) ==
            std::vector<std::string>{"none", "sam2_bank", "multiply", "addition (Ours)"} &&
        labels(AblationAxis::HiddenDim) == std::vector<std::string>{"32", "64 (Ours)", "128", "256"};

    auto cfg = smoke_config();
    auto videos = load_video_dataset(cfg.dataset);
    auto addition_model = trained_model(cfg, "smoke_full");
    const auto addition = evaluate_model(addition_model, videos).mean;
    auto none_cfg = cfg;
    none_cfg.update_strategy = UpdateStrategy::None;
    auto none_model = trained_model(none_cfg, "smoke_none");
    const auto none = evaluate_model(none_model, videos).mean;
    const double sa = composite_score(addition), sn = composite_score(none);
    return {rows_ok && sa >= sn, std::string("row sets ") + (rows_ok ? "match" : "DIFFER") + "; score addition " +
                                     fmt(sa, 5) + " vs none " + fmt(sn, 5) + " (" + metrics_text(addition) + " / " +
                                     metrics_text(none) + ")"};
}

Outcome checkpoint_roundtrip() {
    Config cfg;
    auto model = build_model(cfg);
    testing_support::randomize_trainable(*model, 77, 0.05);
    const auto path = g_workdir / "roundtrip.pt";
    const auto s = cfg.input_size;
    auto rgb = testing_support::rand_like_gen({4, 3, s, s}, 1);
    auto depth = testing_support::rand_like_gen({4, 1, s, s}, 2);
    torch::NoGradGuard ng;
    auto before = model->forward_clip(rgb, depth);
    save_checkpoint(path, model, 123);
    auto loaded = load_checkpoint(path);
    auto after = loaded.model->forward_clip(rgb, depth);
    bool bitwise = loaded.iteration == 123;
    for (size_t t = 0; t < before.size(); ++t) {
        bitwise = bitwise && testing_support::bitwise_equal(before[t].prediction, after[t].prediction);
    }

    auto other = cfg;
    other.stage_channels = {16, 32, 64, 96};
    auto mismatched = build_model(other);
    std::string error;
    try {
        load_checkpoint_into(path, mismatched);
    } catch (const CheckpointError& e) {
        error = e.what();
    }
    const bool named = error.find("parameter '") != std::string::npos;
    return {bitwise && named, std::string("outputs ") + (bitwise ? "bitwise identical" : "DIFFER") +
                                  "; mismatch error: " + (error.empty() ? "none raised" : error)};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> selected;
    std::string workdir = (fs::temp_directory_path() / "daq_acceptance").string();
    app.add_option("--criterion", selected, "criterion number (repeatable)")->check(CLI::Range(1, 9));
    app.add_option("--workdir", workdir, "scratch directory for datasets and trained models");
    CLI11_PARSE(app, argc, argv);

    g_workdir = workdir;
    fs::create_directories(g_workdir);
    torch::manual_seed(0);
    torch::set_num_threads(1);

    const std::vector<Criterion> criteria{
        {1, "metric-oracle equivalence", metric_oracles},
        {2, "zero-adapter equivalence", zero_adapter_equivalence},
        {3, "frozen-parameter immutability", frozen_immutability},
        {4, "gradient correctness", gradient_check},
        {5, "QTM structural invariants", qtm_invariants},
        {6, "memory-topology direction", memory_direction},
        {7, "end-to-end learning smoke test", learning_smoke},
        {8, "ablation harness fidelity", ablation_fidelity},
        {9, "checkpoint round-trip", checkpoint_roundtrip},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << "CRITERION " << c.id << " " << (o.pass ? "PASS" : "FAIL") << " " << c.name << ": " << o.detail
                  << std::endl;
    }
    return std::min(failed, 100);
}
