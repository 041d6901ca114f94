#include "daq/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "daq/errors.hpp"

namespace daq {

namespace {

std::string trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

int64_t parse_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
    uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    const auto s = lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::array<int64_t, 4> parse_quad(const std::string& key, const std::string& v) {
    auto items = split_list(v);
    if (items.size() != 4) {
        throw ConfigError("key '" + key + "': expected 4 comma-separated integers, got '" + v + "'");
    }
    std::array<int64_t, 4> out{};
    for (size_t i = 0; i < 4; ++i) out[i] = parse_int(key, items[i]);
    return out;
}

template <typename T, size_t N>
std::string join(const std::array<T, N>& a) {
    std::string s;
    for (size_t i = 0; i < N; ++i) {
        if (i) s += ",";
        s += std::to_string(a[i]);
    }
    return s;
}

std::string join(const std::vector<int>& a) {
    std::string s;
    for (size_t i = 0; i < a.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(a[i]);
    }
    return s;
}

std::string fmt_double(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

}  // namespace

std::string to_string(PeftTopology v) {
    switch (v) {
        case PeftTopology::Parallel: return "parallel";
        case PeftTopology::Sequential: return "sequential";
        case PeftTopology::Lora: return "lora";
    }
    return "?";
}

std::string to_string(UpdateStrategy v) {
    switch (v) {
        case UpdateStrategy::Addition: return "addition";
        case UpdateStrategy::Multiply: return "multiply";
        case UpdateStrategy::None: return "none";
        case UpdateStrategy::Sam2Bank: return "sam2_bank";
    }
    return "?";
}

std::string to_string(EmbeddingMode v) {
    switch (v) {
        case EmbeddingMode::Sparse: return "sparse";
        case EmbeddingMode::Dense: return "dense";
        case EmbeddingMode::Both: return "both";
    }
    return "?";
}

std::string to_string(Precision v) {
    return v == Precision::Float64 ? "float64" : "float32";
}

PeftTopology parse_peft_topology(const std::string& s) {
    const auto v = lower(s);
    if (v == "parallel") return PeftTopology::Parallel;
    if (v == "sequential") return PeftTopology::Sequential;
    if (v == "lora") return PeftTopology::Lora;
    throw ConfigError("unknown peft_topology '" + s + "' (expected parallel|sequential|lora)");
}

UpdateStrategy parse_update_strategy(const std::string& s) {
    const auto v = lower(s);
    if (v == "addition") return UpdateStrategy::Addition;
    if (v == "multiply") return UpdateStrategy::Multiply;
    if (v == "none") return UpdateStrategy::None;
    if (v == "sam2_bank" || v == "sam2") return UpdateStrategy::Sam2Bank;
    throw ConfigError("unknown update_strategy '" + s + "' (expected addition|multiply|none|sam2_bank)");
}

EmbeddingMode parse_embedding_mode(const std::string& s) {
    const auto v = lower(s);
    if (v == "sparse") return EmbeddingMode::Sparse;
    if (v == "dense") return EmbeddingMode::Dense;
    if (v == "both") return EmbeddingMode::Both;
    throw ConfigError("unknown embedding_mode '" + s + "' (expected sparse|dense|both)");
}

Precision parse_precision(const std::string& s) {
    const auto v = lower(s);
    if (v == "float32" || v == "f32") return Precision::Float32;
    if (v == "float64" || v == "f64") return Precision::Float64;
    throw ConfigError("unknown precision '" + s + "' (expected float32|float64)");
}

void Config::set(const std::string& key, const std::string& value) {
    using Setter = std::function<void(Config&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"input_size", [](Config& c, const std::string& v) { c.input_size = parse_int("input_size", v); }},
        {"stage_channels", [](Config& c, const std::string& v) { c.stage_channels = parse_quad("stage_channels", v); }},
        {"stage_blocks", [](Config& c, const std::string& v) { c.stage_blocks = parse_quad("stage_blocks", v); }},
        {"stage_heads", [](Config& c, const std::string& v) { c.stage_heads = parse_quad("stage_heads", v); }},
        {"fpn_width", [](Config& c, const std::string& v) { c.fpn_width = parse_int("fpn_width", v); }},
        {"adapter_rank", [](Config& c, const std::string& v) { c.adapter_rank = parse_int("adapter_rank", v); }},
        {"freeze_backbone", [](Config& c, const std::string& v) { c.freeze_backbone = parse_bool("freeze_backbone", v); }},
        {"supervised_levels",
         [](Config& c, const std::string& v) {
             c.supervised_levels.clear();
             for (const auto& item : split_list(v)) {
                 c.supervised_levels.push_back(static_cast<int>(parse_int("supervised_levels", item)));
             }
         }},
        {"peft_topology", [](Config& c, const std::string& v) { c.peft_topology = parse_peft_topology(v); }},
        {"grad_bypass", [](Config& c, const std::string& v) { c.grad_bypass = parse_bool("grad_bypass", v); }},
        {"lora_rank", [](Config& c, const std::string& v) { c.lora_rank = parse_int("lora_rank", v); }},
        {"lora_alpha", [](Config& c, const std::string& v) { c.lora_alpha = parse_double("lora_alpha", v); }},
        {"use_depth", [](Config& c, const std::string& v) { c.use_depth = parse_bool("use_depth", v); }},
        {"use_depth_projector",
         [](Config& c, const std::string& v) { c.use_depth_projector = parse_bool("use_depth_projector", v); }},
        {"num_frame_queries",
         [](Config& c, const std::string& v) { c.num_frame_queries = parse_int("num_frame_queries", v); }},
        {"num_video_queries",
         [](Config& c, const std::string& v) { c.num_video_queries = parse_int("num_video_queries", v); }},
        {"query_hidden_dim",
         [](Config& c, const std::string& v) { c.query_hidden_dim = parse_int("query_hidden_dim", v); }},
        {"attention_heads", [](Config& c, const std::string& v) { c.attention_heads = parse_int("attention_heads", v); }},
        {"update_strategy", [](Config& c, const std::string& v) { c.update_strategy = parse_update_strategy(v); }},
        {"embedding_mode", [](Config& c, const std::string& v) { c.embedding_mode = parse_embedding_mode(v); }},
        {"memory_bank_size",
         [](Config& c, const std::string& v) { c.memory_bank_size = parse_int("memory_bank_size", v); }},
        {"decoder_rounds", [](Config& c, const std::string& v) { c.decoder_rounds = parse_int("decoder_rounds", v); }},
        {"backbone_seed", [](Config& c, const std::string& v) { c.backbone_seed = parse_uint("backbone_seed", v); }},
        {"seed", [](Config& c, const std::string& v) { c.seed = parse_uint("seed", v); }},
        {"precision", [](Config& c, const std::string& v) { c.precision = parse_precision(v); }},
        {"dataset", [](Config& c, const std::string& v) { c.dataset = v; }},
        {"eval_dataset", [](Config& c, const std::string& v) { c.eval_dataset = v; }},
        {"output_dir", [](Config& c, const std::string& v) { c.output_dir = v; }},
        {"iterations", [](Config& c, const std::string& v) { c.iterations = parse_int("iterations", v); }},
        {"clip_length", [](Config& c, const std::string& v) { c.clip_length = parse_int("clip_length", v); }},
        {"learning_rate", [](Config& c, const std::string& v) { c.learning_rate = parse_double("learning_rate", v); }},
        {"weight_decay", [](Config& c, const std::string& v) { c.weight_decay = parse_double("weight_decay", v); }},
        {"loss_alpha", [](Config& c, const std::string& v) { c.loss_alpha = parse_double("loss_alpha", v); }},
        {"checkpoint_every",
         [](Config& c, const std::string& v) { c.checkpoint_every = parse_int("checkpoint_every", v); }},
        {"log_every", [](Config& c, const std::string& v) { c.log_every = parse_int("log_every", v); }},
    };
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(*this, value);
}

void Config::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (input_size < 16 || input_size % 16 != 0) fail("input_size must be a positive multiple of 16");
    for (size_t i = 0; i < 4; ++i) {
        if (stage_channels[i] <= 0) fail("stage_channels must be positive");
        if (i > 0 && stage_channels[i] <= stage_channels[i - 1]) fail("stage_channels must strictly increase");
        if (stage_blocks[i] < 1) fail("stage_blocks must be >= 1");
        if (stage_heads[i] < 1 || stage_channels[i] % stage_heads[i] != 0) {
            fail("stage_heads must divide stage_channels at stage " + std::to_string(i + 1));
        }
    }
    if (fpn_width <= 0) fail("fpn_width must be positive");
    if (adapter_rank <= 0) fail("adapter_rank must be positive");
    if (lora_rank <= 0) fail("lora_rank must be positive");
    std::set<int> seen;
    for (int l : supervised_levels) {
        if (l < 2 || l > 4) fail("supervised_levels must be a subset of {2,3,4}");
        if (!seen.insert(l).second) fail("supervised_levels has a duplicate level");
    }
    if (num_frame_queries <= 0 || num_video_queries <= 0) fail("query counts must be positive");
    if (query_hidden_dim <= 0 || query_hidden_dim % 4 != 0) fail("query_hidden_dim must be a positive multiple of 4");
    if (attention_heads < 1 || query_hidden_dim % attention_heads != 0) {
        fail("attention_heads must divide query_hidden_dim");
    }
    if (memory_bank_size < 1) fail("memory_bank_size must be >= 1");
    if (decoder_rounds < 1) fail("decoder_rounds must be >= 1");
    if (iterations < 0) fail("iterations must be >= 0");
    if (clip_length < 1) fail("clip_length must be >= 1");
    if (learning_rate <= 0.0) fail("learning_rate must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (loss_alpha < 0.0) fail("loss_alpha must be >= 0");
    if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
    if (log_every < 1) fail("log_every must be >= 1");
}

std::string Config::to_text() const {
    std::ostringstream os;
    os << "input_size = " << input_size << "\n"
       << "stage_channels = " << join(stage_channels) << "\n"
       << "stage_blocks = " << join(stage_blocks) << "\n"
       << "stage_heads = " << join(stage_heads) << "\n"
       << "fpn_width = " << fpn_width << "\n"
       << "adapter_rank = " << adapter_rank << "\n"
       << "freeze_backbone = " << (freeze_backbone ? "true" : "false") << "\n"
       << "supervised_levels = " << join(supervised_levels) << "\n"
       << "peft_topology = " << to_string(peft_topology) << "\n"
       << "grad_bypass = " << (grad_bypass ? "true" : "false") << "\n"
       << "lora_rank = " << lora_rank << "\n"
       << "lora_alpha = " << fmt_double(lora_alpha) << "\n"
       << "use_depth = " << (use_depth ? "true" : "false") << "\n"
       << "use_depth_projector = " << (use_depth_projector ? "true" : "false") << "\n"
       << "num_frame_queries = " << num_frame_queries << "\n"
       << "num_video_queries = " << num_video_queries << "\n"
       << "query_hidden_dim = " << query_hidden_dim << "\n"
       << "attention_heads = " << attention_heads << "\n"
       << "update_strategy = " << to_string(update_strategy) << "\n"
       << "embedding_mode = " << to_string(embedding_mode) << "\n"
       << "memory_bank_size = " << memory_bank_size << "\n"
       << "decoder_rounds = " << decoder_rounds << "\n"
       << "backbone_seed = " << backbone_seed << "\n"
       << "seed = " << seed << "\n"
       << "precision = " << to_string(precision) << "\n"
       << "dataset = " << dataset << "\n"
       << "eval_dataset = " << eval_dataset << "\n"
       << "output_dir = " << output_dir << "\n"
       << "iterations = " << iterations << "\n"
       << "clip_length = " << clip_length << "\n"
       << "learning_rate = " << fmt_double(learning_rate) << "\n"
       << "weight_decay = " << fmt_double(weight_decay) << "\n"
       << "loss_alpha = " << fmt_double(loss_alpha) << "\n"
       << "checkpoint_every = " << checkpoint_every << "\n"
       << "log_every = " << log_every << "\n";
    return os.str();
}

Config parse_config(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto t = trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        cfg.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_overrides(Config& cfg, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
        cfg.set(trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)));
    }
}

}  // namespace daq
