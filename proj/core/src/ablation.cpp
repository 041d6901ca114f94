#include "daq/ablation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "daq/errors.hpp"
#include "daq/trainer.hpp"

namespace daq {

namespace {

const std::vector<std::pair<AblationAxis, std::string>>& axis_names() {
    static const std::vector<std::pair<AblationAxis, std::string>> names{
        {AblationAxis::PeftTopology, "peft_topology"},     {AblationAxis::EmbeddingMode, "embedding_mode"},
        {AblationAxis::QueryCounts, "query_counts"},       {AblationAxis::HiddenDim, "hidden_dim"},
        {AblationAxis::UpdateStrategy, "update_strategy"}, {AblationAxis::SupervisedLevels, "supervised_levels"},
    };
    return names;
}

}  // namespace

std::string to_string(AblationAxis axis) {
    for (const auto& [a, n] : axis_names()) {
        if (a == axis) return n;
    }
    return "unknown";
}

AblationAxis parse_ablation_axis(const std::string& name) {
    std::string known;
    for (const auto& [a, n] : axis_names()) {
        if (n == name) return a;
        known += (known.empty() ? "" : ", ") + n;
    }
    throw ConfigError("unknown ablation axis '" + name + "' (expected one of " + known + ")");
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const Config& base) {
    std::vector<AblationVariant> out;
    auto add = [&](std::string label, auto&& edit) {
        Config c = base;
        edit(c);
        c.validate();
        out.push_back({std::move(label), c});
    };
    switch (axis) {
        case AblationAxis::PeftTopology:
            add("w/o depth projector", [](Config& c) { c.use_depth_projector = false; });
            add("w/o parallel (sequential adapter)", [](Config& c) { c.peft_topology = PeftTopology::Sequential; });
            add("w/o parallel (LoRA)", [](Config& c) { c.peft_topology = PeftTopology::Lora; });
            add("w/o multi-modal", [](Config& c) { c.use_depth = false; });
            add("Ours", [](Config&) {});
            break;
        case AblationAxis::EmbeddingMode:
            add("sparse only (Ours)", [](Config& c) { c.embedding_mode = EmbeddingMode::Sparse; });
            add("dense only", [](Config& c) { c.embedding_mode = EmbeddingMode::Dense; });
            add("both", [](Config& c) { c.embedding_mode = EmbeddingMode::Both; });
            break;
        case AblationAxis::QueryCounts:
            for (int64_t nv : {5, 8, 10}) {
                add("N_v=" + std::to_string(nv) + ", N_f=30", [nv](Config& c) {
                    c.num_video_queries = nv;
                    c.num_frame_queries = 30;
                });
            }
            for (int64_t nf : {10, 20, 30, 40}) {
                add("N_v=8, N_f=" + std::to_string(nf), [nf](Config& c) {
                    c.num_video_queries = 8;
                    c.num_frame_queries = nf;
                });
            }
            break;
        case AblationAxis::HiddenDim:
            for (int64_t d : {32, 64, 128, 256}) {
                add(std::to_string(d) + (d == 64 ? " (Ours)" : ""), [d](Config& c) { c.query_hidden_dim = d; });
            }
            break;
        case AblationAxis::UpdateStrategy:
            add("none", [](Config& c) { c.update_strategy = UpdateStrategy::None; });
            add("sam2_bank", [](Config& c) { c.update_strategy = UpdateStrategy::Sam2Bank; });
            add("multiply", [](Config& c) { c.update_strategy = UpdateStrategy::Multiply; });
            add("addition (Ours)", [](Config& c) { c.update_strategy = UpdateStrategy::Addition; });
            break;
        case AblationAxis::SupervisedLevels:
            for (const auto& levels : std::vector<std::vector<int>>{{2}, {3}, {4}, {3, 4}, {2, 3, 4}}) {
                std::string label = "E2:";
                label += std::count(levels.begin(), levels.end(), 2) ? "x" : "-";
                label += " E3:";
                label += std::count(levels.begin(), levels.end(), 3) ? "x" : "-";
                label += " E4:";
                label += std::count(levels.begin(), levels.end(), 4) ? "x" : "-";
                add(label, [levels](Config& c) { c.supervised_levels = levels; });
            }
            break;
    }
    return out;
}

double composite_score(const EvalResult& r) { return (r.e_measure + r.s_measure + r.f_measure + 1.0 - r.mae) / 4.0; }

AblationTable run_ablation(AblationAxis axis, const Config& base, const std::vector<VideoHandle>& train_videos,
                           const std::vector<VideoHandle>& eval_videos, std::ostream* progress) {
    AblationTable table{axis, {}};
    for (const auto& v : ablation_variants(axis, base)) {
        Trainer trainer(v.config, train_videos);
        trainer.run(v.config.iterations);
        auto eval = evaluate_model(trainer.model(), eval_videos);
        table.rows.push_back({v.label, eval.mean, count_params(*trainer.model())});
        if (progress) {
            *progress << to_string(axis) << " | " << v.label << " | score " << composite_score(eval.mean) << "\n";
        }
    }
    return table;
}

std::string to_markdown(const AblationTable& table) {
    const bool params = table.axis == AblationAxis::PeftTopology;
    std::ostringstream os;
    os << "| " << to_string(table.axis) << " |";
    if (params) os << " Trainable/Total |";
    os << " E_xi ↑ | S_alpha ↑ | F_beta ↑ | M ↓ |\n|---|";
    if (params) os << "---|";
    os << "---|---|---|---|\n";
    for (const auto& r : table.rows) {
        os << "| " << r.label << " |";
        if (params) os << " " << r.params.trainable << "/" << r.params.total << " |";
        os << std::fixed << std::setprecision(3) << " " << r.metrics.e_measure << " | " << r.metrics.s_measure
           << " | " << r.metrics.f_measure << " | " << r.metrics.mae << " |\n";
        os.unsetf(std::ios::floatfield);
    }
    return os.str();
}

}  // namespace daq
