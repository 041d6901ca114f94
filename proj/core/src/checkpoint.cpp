#include "daq/checkpoint.hpp"

#include <torch/serialize.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "daq/errors.hpp"

namespace daq {

namespace {

using Archive = c10::Dict<std::string, at::Tensor>;

constexpr const char* kVersionKey = "meta/format_version";
constexpr const char* kConfigKey = "meta/config";
constexpr const char* kIterationKey = "meta/iteration";

Archive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    c10::IValue v;
    try {
        v = torch::pickle_load(bytes);
    } catch (const c10::Error& e) {
        throw CheckpointError("not a checkpoint archive: " + path.string());
    }
    if (!v.isGenericDict()) throw CheckpointError("not a checkpoint archive: " + path.string());
    Archive out;
    for (const auto& kv : v.toGenericDict()) {
        if (!kv.key().isString() || !kv.value().isTensor()) throw CheckpointError("malformed archive " + path.string());
        out.insert(kv.key().toStringRef(), kv.value().toTensor());
    }
    return out;
}

const at::Tensor& require(const Archive& a, const std::string& key) {
    auto it = a.find(key);
    if (it == a.end()) throw CheckpointError("checkpoint is missing '" + key + "'");
    return it->value();
}

CheckpointContents contents_of(const Archive& a) {
    CheckpointContents c;
    c.format_version = require(a, kVersionKey).item<int64_t>();
    if (c.format_version != kCheckpointFormatVersion) {
        throw CheckpointError("checkpoint format version " + std::to_string(c.format_version) + ", expected " +
                              std::to_string(kCheckpointFormatVersion));
    }
    auto text = require(a, kConfigKey).contiguous();
    c.config = parse_config(std::string(static_cast<const char*>(text.data_ptr()), static_cast<size_t>(text.numel())));
    c.iteration = require(a, kIterationKey).item<int64_t>();
    for (const auto& kv : a) {
        const auto& k = kv.key();
        if (k.rfind("frozen/", 0) == 0) c.frozen.push_back(k.substr(7));
        if (k.rfind("trainable/", 0) == 0) c.trainable.push_back(k.substr(10));
    }
    std::sort(c.frozen.begin(), c.frozen.end());
    std::sort(c.trainable.begin(), c.trainable.end());
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, nn::SamDaq& model, int64_t iteration) {
    Archive a;
    a.insert(kVersionKey, torch::tensor({kCheckpointFormatVersion}, torch::kInt64));
    const auto text = model->config().to_text();
    a.insert(kConfigKey, torch::from_blob(const_cast<char*>(text.data()), {static_cast<int64_t>(text.size())},
                                          torch::kUInt8)
                             .clone());
    a.insert(kIterationKey, torch::tensor({iteration}, torch::kInt64));
    for (const auto& p : model->named_parameters()) {
        const auto prefix = p.value().requires_grad() ? "trainable/" : "frozen/";
        a.insert(prefix + p.key(), p.value().detach().clone());
    }
    const auto bytes = torch::pickle_save(c10::IValue(a));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("cannot write checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointContents inspect_checkpoint(const std::filesystem::path& path) { return contents_of(read_archive(path)); }

int64_t load_checkpoint_into(const std::filesystem::path& path, nn::SamDaq& model) {
    const auto archive = read_archive(path);
    const auto meta = contents_of(archive);

    size_t matched = 0;
    torch::NoGradGuard no_grad;
    for (auto& p : model->named_parameters()) {
        const auto& name = p.key();
        auto it = archive.find("trainable/" + name);
        if (it == archive.end()) it = archive.find("frozen/" + name);
        if (it == archive.end()) throw CheckpointError("checkpoint has no array for parameter '" + name + "'");
        const auto& src = it->value();
        if (src.sizes() != p.value().sizes()) {
            throw CheckpointError("shape mismatch for parameter '" + name + "': checkpoint " + c10::str(src.sizes()) +
                                  " vs model " + c10::str(p.value().sizes()));
        }
        p.value().copy_(src);
        ++matched;
    }
    const size_t stored = meta.frozen.size() + meta.trainable.size();
    if (stored != matched) {
        auto params = model->named_parameters();
        for (const auto& group : {std::pair{"frozen/", &meta.frozen}, std::pair{"trainable/", &meta.trainable}}) {
            for (const auto& n : *group.second) {
                if (!params.contains(n)) {
                    throw CheckpointError("checkpoint array '" + std::string(group.first) + n +
                                          "' has no matching model parameter");
                }
            }
        }
        throw CheckpointError("checkpoint stores a parameter under both groups");
    }
    return meta.iteration;
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
    const auto meta = inspect_checkpoint(path);
    LoadedModel out;
    out.config = meta.config;
    out.model = build_model(meta.config);
    out.iteration = load_checkpoint_into(path, out.model);
    return out;
}

}  // namespace daq
