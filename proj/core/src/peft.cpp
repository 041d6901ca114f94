#include "daq/peft.hpp"

#include <sstream>

#include "daq/losses.hpp"
#include "daq/model.hpp"
#include "daq/nn_common.hpp"

namespace daq {

ParamCounts count_params(const torch::nn::Module& module) {
    ParamCounts c;
    for (const auto& p : module.parameters()) {
        c.total += p.numel();
        if (p.requires_grad()) c.trainable += p.numel();
    }
    return c;
}

int64_t count_params_named(const torch::nn::Module& module, const std::string& fragment) {
    int64_t n = 0;
    for (const auto& p : module.named_parameters()) {
        if (p.key().find(fragment) != std::string::npos) n += p.value().numel();
    }
    return n;
}

std::vector<PeftVariant> peft_variants(const Config& base) {
    std::vector<PeftVariant> out;
    for (auto [name, topo] : {std::pair{"parallel", PeftTopology::Parallel},
                              std::pair{"sequential", PeftTopology::Sequential},
                              std::pair{"lora", PeftTopology::Lora}}) {
        Config c = base;
        c.peft_topology = topo;
        out.push_back({name, c});
    }
    return out;
}

PeftReport measure_variant(const std::string& name, const Config& cfg, int64_t frames) {
    // Installed before the model is built so weights and optimizer state are part of the peak.
    MemoryTracker::instance().install();
    auto model = build_model(cfg);
    model->train();
    const auto dtype = model->dtype();
    const auto s = cfg.input_size;

    auto gen = nn::make_generator(cfg.seed + 1);
    auto opts = torch::TensorOptions().dtype(dtype);
    auto rgb = torch::rand({frames, 3, s, s}, gen, opts);
    auto depth = torch::rand({frames, 1, s, s}, gen, opts);
    auto gt = (torch::rand({frames, 1, s, s}, gen, opts) > 0.5).to(dtype);

    torch::optim::AdamW opt(nn::trainable_parameters(*model),
                            torch::optim::AdamWOptions(cfg.learning_rate).weight_decay(cfg.weight_decay));
    auto step = [&] {
        opt.zero_grad();
        auto outs = model->forward_clip(rgb, depth);
        auto loss = torch::zeros({}, opts);
        for (int64_t t = 0; t < frames; ++t) {
            loss = loss + total_loss(outs[t].prediction, outs[t].intermediate_preds, gt.slice(0, t, t + 1),
                                     cfg.loss_alpha).total;
        }
        (loss / static_cast<double>(frames)).backward();
        opt.step();
    };

    step();
    PeftReport r;
    r.name = name;
    r.params = count_params(*model);
    r.memory = measure_peak_memory(step);
    return r;
}

std::string peft_report_csv(const std::vector<PeftReport>& rows) {
    std::ostringstream os;
    os << "variant,trainable,total,peak_bytes\n";
    for (const auto& r : rows) {
        os << r.name << "," << r.params.trainable << "," << r.params.total << ",";
        if (r.memory) {
            os << r.memory->peak_bytes;
        } else {
            os << "unsupported";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace daq
