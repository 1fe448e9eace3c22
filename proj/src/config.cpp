#include <fstream>
#include <map>
#include <sstream>

#include "setseg/trainer.hpp"

namespace setseg {

namespace {

struct KeyValues {
    std::map<std::string, std::string> entries;

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    std::string take(const std::string& key, const std::string& fallback) {
        auto it = entries.find(key);
        if (it == entries.end()) return fallback;
        std::string v = it->second;
        entries.erase(it);
        return v;
    }

    std::int64_t take_int(const std::string& key, std::int64_t fallback) {
        auto it = entries.find(key);
        if (it == entries.end()) return fallback;
        const std::string v = it->second;
        entries.erase(it);
        try {
            std::size_t pos = 0;
            const std::int64_t out = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing characters");
            return out;
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': expected an integer, got '" + v + "'");
        }
    }

    double take_double(const std::string& key, double fallback) {
        auto it = entries.find(key);
        if (it == entries.end()) return fallback;
        const std::string v = it->second;
        entries.erase(it);
        try {
            std::size_t pos = 0;
            const double out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing characters");
            return out;
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
        }
    }

    void reject_unknown(const std::string& context) const {
        if (entries.empty()) return;
        std::string keys;
        for (const auto& [k, v] : entries) keys += (keys.empty() ? "" : ", ") + k;
        throw UsageError(context + ": unknown config keys: " + keys);
    }
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

KeyValues parse_lines(const std::vector<std::string>& lines) {
    KeyValues out;
    std::int64_t line_no = 0;
    for (const auto& raw : lines) {
        ++line_no;
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                             line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
        if (out.entries.count(key))
            throw UsageError("config: duplicate key '" + key + "'");
        out.entries[key] = value;
    }
    return out;
}

KeyValues parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read config file '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return parse_lines(lines);
}

std::vector<std::int64_t> parse_int_list(const std::string& value, const std::string& key) {
    std::vector<std::int64_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stoll(item));
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': expected a comma list of integers");
        }
    }
    return out;
}

RunConfig run_config_from(KeyValues kv) {
    RunConfig c;
    c.model.input_dim = kv.take_int("input_dim", 0);
    c.model.num_classes = kv.take_int("num_classes", 0);
    c.model.hidden = kv.take_int("hidden", c.model.hidden);
    c.model.dropout = kv.take_double("dropout", c.model.dropout);
    c.model.expansion = kv.take_int("expansion", c.model.expansion);
    c.model.delta = kv.take_double("delta", c.model.delta);

    const bool has_list = kv.has("embed_pools");
    const bool has_count = kv.has("embed_pool_count");
    if (has_list && has_count)
        throw UsageError("config: set either embed_pools or embed_pool_count, not both");
    if (has_list) c.model.embed_pools = parse_int_list(kv.take("embed_pools", ""), "embed_pools");
    if (has_count) {
        const std::int64_t n = kv.take_int("embed_pool_count", 3);
        if (n < 0 || n > c.model.embed_blocks)
            throw UsageError("config: embed_pool_count must lie in [0, " +
                             std::to_string(c.model.embed_blocks) + "]");
        c.model.embed_pools.clear();
        for (std::int64_t i = 1; i <= n; ++i) c.model.embed_pools.push_back(i);
    }

    c.weights.set = kv.take_double("lambda_set", c.weights.set);
    c.weights.region = kv.take_double("lambda_region", c.weights.region);
    c.weights.sparsity = kv.take_double("lambda_sparsity", c.weights.sparsity);
    c.weights.consistency = kv.take_double("lambda_consistency", c.weights.consistency);
    c.weights.self_supervision = kv.take_double("lambda_self", c.weights.self_supervision);
    c.weights.length = kv.take_double("lambda_length", c.weights.length);
    c.weights.jsd = kv.take_double("lambda_jsd", c.weights.jsd);

    c.learning_rate = kv.take_double("learning_rate", c.learning_rate);
    c.weight_decay = kv.take_double("weight_decay", c.weight_decay);
    c.epochs = kv.take_int("epochs", c.epochs);
    c.eval_every = kv.take_int("eval_every", c.eval_every);
    c.seed = static_cast<std::uint64_t>(kv.take_int("seed", static_cast<std::int64_t>(c.seed)));
    c.data_root = kv.take("data_root", c.data_root);
    c.out_dir = kv.take("out_dir", c.out_dir);

    kv.reject_unknown("run config");
    check(c.epochs >= 1, "config: epochs must be positive");
    check(c.learning_rate > 0.0, "config: learning_rate must be positive");
    check(c.weight_decay >= 0.0, "config: weight_decay must be non-negative");
    c.weights.validate();
    return c;
}

}  // namespace

RunConfig parse_run_config(const std::string& path) { return run_config_from(parse_file(path)); }

RunConfig parse_run_config_lines(const std::vector<std::string>& lines) {
    return run_config_from(parse_lines(lines));
}

void write_run_config(const std::string& path, const RunConfig& c) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write run config '" + path + "'");
    os.precision(17);
    os << "input_dim = " << c.model.input_dim << "\n";
    os << "num_classes = " << c.model.num_classes << "\n";
    os << "hidden = " << c.model.hidden << "\n";
    os << "embed_pools = ";
    for (std::size_t i = 0; i < c.model.embed_pools.size(); ++i)
        os << (i ? "," : "") << c.model.embed_pools[i];
    os << "\n";
    os << "dropout = " << c.model.dropout << "\n";
    os << "expansion = " << c.model.expansion << "\n";
    os << "delta = " << c.model.delta << "\n";
    os << "lambda_set = " << c.weights.set << "\n";
    os << "lambda_region = " << c.weights.region << "\n";
    os << "lambda_sparsity = " << c.weights.sparsity << "\n";
    os << "lambda_consistency = " << c.weights.consistency << "\n";
    os << "lambda_self = " << c.weights.self_supervision << "\n";
    os << "lambda_length = " << c.weights.length << "\n";
    os << "lambda_jsd = " << c.weights.jsd << "\n";
    os << "learning_rate = " << c.learning_rate << "\n";
    os << "weight_decay = " << c.weight_decay << "\n";
    os << "epochs = " << c.epochs << "\n";
    os << "eval_every = " << c.eval_every << "\n";
    os << "seed = " << c.seed << "\n";
    os << "data_root = " << c.data_root << "\n";
    os << "out_dir = " << c.out_dir << "\n";
}

SynthRequest parse_synth_config(const std::string& path) {
    KeyValues kv = parse_file(path);
    SynthRequest r;
    r.synth.num_classes = kv.take_int("num_classes", r.synth.num_classes);
    r.synth.feature_dim = kv.take_int("feature_dim", r.synth.feature_dim);
    r.synth.frames = kv.take_int("frames", r.synth.frames);
    r.synth.min_segments = kv.take_int("min_segments", r.synth.min_segments);
    r.synth.max_segments = kv.take_int("max_segments", r.synth.max_segments);
    r.synth.min_segment_frames = kv.take_int("min_segment_frames", r.synth.min_segment_frames);
    r.synth.dirichlet_alpha = kv.take_double("dirichlet_alpha", r.synth.dirichlet_alpha);
    r.synth.mean_scale = kv.take_double("mean_scale", r.synth.mean_scale);
    r.synth.noise_sigma = kv.take_double("noise_sigma", r.synth.noise_sigma);
    r.synth.smoothing = kv.take_int("smoothing", r.synth.smoothing);
    r.synth.seed = static_cast<std::uint64_t>(
        kv.take_int("seed", static_cast<std::int64_t>(r.synth.seed)));
    r.train_videos = kv.take_int("train_videos", r.train_videos);
    r.test_videos = kv.take_int("test_videos", r.test_videos);
    kv.reject_unknown("synth config");
    check(r.train_videos >= 0 && r.test_videos >= 0, "synth config: negative video count");
    return r;
}

}  // namespace setseg
