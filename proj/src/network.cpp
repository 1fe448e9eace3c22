#include "setseg/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "setseg/ops.hpp"

namespace setseg {

std::int64_t ModelConfig::embed_factor() const {
    return std::int64_t{1} << embed_pools.size();
}

std::int64_t ModelConfig::region_factor() const {
    return std::int64_t{1} << region_pools.size();
}

std::int64_t ModelConfig::downsample_factor() const { return embed_factor() * region_factor(); }

void ModelConfig::validate() const {
    check(input_dim >= 1, "model config: input_dim must be set");
    check(num_classes >= 2, "model config: need at least two classes");
    check(hidden >= 2 && hidden % 2 == 0, "model config: hidden size must be even");
    check(embed_blocks >= 1 && region_blocks >= 1, "model config: block counts must be positive");
    check(dropout >= 0.0 && dropout < 1.0, "model config: dropout must lie in [0, 1)");
    check(expansion >= 2, "model config: expansion must be at least 2");
    for (auto p : embed_pools)
        check(p >= 1 && p <= embed_blocks, "model config: embed pool index out of range");
    for (auto p : region_pools)
        check(p >= 1 && p <= region_blocks, "model config: region pool index out of range");
}

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
    check(index_.find(name) == index_.end(), "duplicate parameter name '" + name + "'");
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter '" + name + "'");
    return tensors_[it->second];
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter '" + name + "'");
    return tensors_[it->second];
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::int64_t d = config_.input_dim;
    const std::int64_t h = config_.hidden;
    const std::int64_t c = config_.num_classes;

    auto conv = [&](const std::string& name, std::int64_t k, std::int64_t cin, std::int64_t cout) {
        params_.add(name + ".weight", Tensor::zeros({k, cin, cout}, true));
        params_.add(name + ".bias", Tensor::zeros({cout}, true));
    };

    conv("embed.in_proj", 1, d, h);
    for (std::int64_t b = 1; b <= config_.embed_blocks; ++b) {
        const std::string prefix = "embed.tcb" + std::to_string(b);
        conv(prefix + ".dilated", 3, h, h);
        conv(prefix + ".pointwise", 1, h, h);
    }
    for (std::int64_t b = 1; b <= config_.region_blocks; ++b) {
        const std::string prefix = "region.tcb" + std::to_string(b);
        conv(prefix + ".dilated", 3, h, h);
        conv(prefix + ".pointwise", 1, h, h);
    }
    conv("region.class_head", 1, h, c);
    conv("region.length_head.fc1", 1, h, h / 2);
    conv("region.length_head.fc2", 1, h / 2, 1);
    conv("frame_head", 1, h, c);
}

void Model::init_params(RngStream& rng) {
    for (const auto& name : params_.names()) {
        Tensor& t = params_.get(name);
        if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) {
            for (auto& v : t.values()) v = 0.0;
            continue;
        }
        // weight k x Cin x Cout: fan-in = k * Cin
        const double fan_in = static_cast<double>(t.dim(0) * t.dim(1));
        const double bound = 1.0 / std::sqrt(fan_in);
        for (auto& v : t.values()) v = (2.0 * rng.next_uniform() - 1.0) * bound;
    }
}

Tensor Model::tcb(const Tensor& x, const std::string& prefix, std::int64_t dilation, bool training,
                  RngStream& dropout_rng) const {
    Tensor h = ops::conv1d_dilated(x, params_.get(prefix + ".dilated.weight"),
                                   params_.get(prefix + ".dilated.bias"), dilation);
    h = ops::relu(h);
    h = ops::conv1d_dilated(h, params_.get(prefix + ".pointwise.weight"),
                            params_.get(prefix + ".pointwise.bias"), 1);
    h = ops::add(h, x);
    return ops::dropout(h, config_.dropout, training, dropout_rng);
}

Tensor Model::embed(const Tensor& features, bool training, RngStream& dropout_rng) const {
    check(features.ndim() == 2, "embed: features must be T x D");
    check(features.dim(1) == config_.input_dim,
          "embed: feature dimension " + std::to_string(features.dim(1)) + " does not match config " +
              std::to_string(config_.input_dim));
    const std::int64_t min_frames = config_.downsample_factor();
    check(features.dim(0) >= min_frames,
          "embed: need at least " + std::to_string(min_frames) + " frames, got " +
              std::to_string(features.dim(0)));

    Tensor z = ops::conv1d_dilated(features, params_.get("embed.in_proj.weight"),
                                   params_.get("embed.in_proj.bias"), 1);
    for (std::int64_t b = 1; b <= config_.embed_blocks; ++b) {
        z = tcb(z, "embed.tcb" + std::to_string(b), std::int64_t{1} << b, training, dropout_rng);
        for (auto p : config_.embed_pools)
            if (p == b) z = ops::maxpool1d(z);
    }
    return z;
}

RegionOutput Model::region_forward(const Tensor& embedding, bool training,
                                   RngStream& dropout_rng) const {
    check(embedding.ndim() == 2 && embedding.dim(1) == config_.hidden,
          "region_forward: embedding must be T' x hidden");
    check(embedding.dim(0) >= config_.region_factor(),
          "region_forward: need at least " + std::to_string(config_.region_factor()) +
              " embedded frames, got " + std::to_string(embedding.dim(0)));

    Tensor z = embedding;
    for (std::int64_t b = 1; b <= config_.region_blocks; ++b) {
        const std::int64_t dilation = std::int64_t{1} << (config_.embed_blocks + b);
        z = tcb(z, "region.tcb" + std::to_string(b), dilation, training, dropout_rng);
        for (auto p : config_.region_pools)
            if (p == b) z = ops::maxpool1d(z);
    }

    RegionOutput out;
    out.probs = ops::softmax(ops::conv1d_dilated(z, params_.get("region.class_head.weight"),
                                                 params_.get("region.class_head.bias"), 1),
                             1);
    Tensor l = ops::relu(ops::conv1d_dilated(z, params_.get("region.length_head.fc1.weight"),
                                             params_.get("region.length_head.fc1.bias"), 1));
    l = ops::conv1d_dilated(l, params_.get("region.length_head.fc2.weight"),
                            params_.get("region.length_head.fc2.bias"), 1);
    out.raw_lengths = ops::reshape(l, {l.dim(0)});
    return out;
}

Tensor Model::frame_branch(const Tensor& embedding, std::int64_t total_frames) const {
    check(embedding.ndim() == 2 && embedding.dim(1) == config_.hidden,
          "frame_branch: embedding must be T' x hidden");
    Tensor s = ops::softmax(ops::conv1d_dilated(embedding, params_.get("frame_head.weight"),
                                                params_.get("frame_head.bias"), 1),
                            1);
    return ops::resize_linear(s, total_frames);
}

bool Model::is_length_head_param(const std::string& name) const {
    return name.rfind("region.length_head.", 0) == 0;
}

Tensor pad_rows_edge(const Tensor& x, std::int64_t target_rows) {
    check(x.ndim() == 2, "pad_rows_edge: input must be 2-d");
    const std::int64_t t = x.dim(0), c = x.dim(1);
    check(target_rows >= t, "pad_rows_edge: target smaller than input");
    if (target_rows == t) return x;
    Tensor out = Tensor::zeros({target_rows, c});
    std::memcpy(out.data(), x.data(), static_cast<std::size_t>(t * c) * sizeof(double));
    for (std::int64_t r = t; r < target_rows; ++r)
        std::memcpy(out.data() + r * c, x.data() + (t - 1) * c,
                    static_cast<std::size_t>(c) * sizeof(double));
    return out;
}

std::int64_t round_up(std::int64_t rows, std::int64_t factor) {
    return (rows + factor - 1) / factor * factor;
}

namespace {

constexpr char kMagic[4] = {'S', 'S', 'E', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint '" + path + "': truncated");
    return v;
}

void write_i64_list(std::ostream& os, const std::vector<std::int64_t>& v) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
    for (auto e : v) write_pod<std::int64_t>(os, e);
}

std::vector<std::int64_t> read_i64_list(std::istream& is, const std::string& path) {
    const auto n = read_pod<std::uint32_t>(is, path);
    std::vector<std::int64_t> v(n);
    for (auto& e : v) e = read_pod<std::int64_t>(is, path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, std::uint64_t rng_counter) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint '" + path + "' for writing");
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    const ModelConfig& c = model.config();
    write_pod(os, c.input_dim);
    write_pod(os, c.num_classes);
    write_pod(os, c.hidden);
    write_pod(os, c.embed_blocks);
    write_pod(os, c.region_blocks);
    write_i64_list(os, c.embed_pools);
    write_i64_list(os, c.region_pools);
    write_pod(os, c.dropout);
    write_pod(os, c.expansion);
    write_pod(os, c.delta);
    write_pod(os, rng_counter);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.params().size()));
    for (const auto& name : model.params().names()) {
        const Tensor& t = model.params().get(name);
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_i64_list(os, t.shape());
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw DataError("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path, std::uint64_t* rng_counter) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint '" + path + "': bad magic bytes at offset 0");
    const auto version = read_pod<std::uint32_t>(is, path);
    if (version != kVersion)
        throw DataError("checkpoint '" + path + "': unsupported version " +
                        std::to_string(version));
    ModelConfig c;
    c.input_dim = read_pod<std::int64_t>(is, path);
    c.num_classes = read_pod<std::int64_t>(is, path);
    c.hidden = read_pod<std::int64_t>(is, path);
    c.embed_blocks = read_pod<std::int64_t>(is, path);
    c.region_blocks = read_pod<std::int64_t>(is, path);
    c.embed_pools = read_i64_list(is, path);
    c.region_pools = read_i64_list(is, path);
    c.dropout = read_pod<double>(is, path);
    c.expansion = read_pod<std::int64_t>(is, path);
    c.delta = read_pod<double>(is, path);
    const auto counter = read_pod<std::uint64_t>(is, path);
    if (rng_counter) *rng_counter = counter;

    Model model(c);
    const auto param_count = read_pod<std::uint32_t>(is, path);
    if (param_count != model.params().size())
        throw DataError("checkpoint '" + path + "': expected " +
                        std::to_string(model.params().size()) + " parameters, found " +
                        std::to_string(param_count));
    for (std::uint32_t i = 0; i < param_count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw DataError("checkpoint '" + path + "': truncated");
        if (!model.params().contains(name))
            throw DataError("checkpoint '" + path + "': unknown parameter '" + name + "'");
        Tensor& t = model.params().get(name);
        const auto shape = read_i64_list(is, path);
        if (shape != t.shape())
            throw DataError("checkpoint '" + path + "': parameter '" + name + "' has shape " +
                            shape_str(shape) + ", expected " + shape_str(t.shape()));
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw DataError("checkpoint '" + path + "': truncated");
    }
    return model;
}

}  // namespace setseg
