#include "setseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace setseg {

namespace fs = std::filesystem;

std::int64_t Corpus::feature_dim() const {
    if (!train.empty()) return train.front().features.dim(1);
    if (!test.empty()) return test.front().features.dim(1);
    throw DataError("empty corpus");
}

void SynthConfig::validate() const {
    check(num_classes >= 2, "synth: need at least two classes");
    check(feature_dim >= num_classes, "synth: feature_dim must be >= num_classes");
    check(frames >= 1, "synth: frames must be positive");
    check(min_segments >= 1 && max_segments >= min_segments, "synth: bad segment count range");
    check(min_segment_frames >= 1, "synth: min segment length must be positive");
    if (max_segments * min_segment_frames > frames)
        throw DataError("synth: " + std::to_string(max_segments) + " segments of at least " +
                        std::to_string(min_segment_frames) + " frames do not fit in " +
                        std::to_string(frames) + " frames");
    check(dirichlet_alpha > 0.0, "synth: dirichlet_alpha must be positive");
    check(noise_sigma > 0.0, "synth: noise_sigma must be positive");
    check(smoothing >= 1, "synth: smoothing width must be positive");
    check(mean_scale * std::sqrt(2.0) > 2.0 * noise_sigma,
          "synth: class means are not separable (need mean_scale*sqrt(2) > 2*noise_sigma)");
}

namespace {

double sample_gamma(double alpha, RngStream& rng) {
    // Marsaglia-Tsang; boost alpha < 1 with the power trick.
    if (alpha < 1.0) {
        const double u = std::max(rng.next_uniform(), 1e-300);
        return sample_gamma(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = rng.next_normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.next_uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<std::int64_t> dirichlet_partition(std::int64_t total, std::int64_t parts,
                                              std::int64_t min_len, double alpha,
                                              RngStream& rng) {
    std::vector<double> w(static_cast<std::size_t>(parts));
    double sum = 0.0;
    for (auto& v : w) {
        v = sample_gamma(alpha, rng);
        sum += v;
    }
    const std::int64_t extra_total = total - parts * min_len;
    std::vector<std::int64_t> out(static_cast<std::size_t>(parts), min_len);
    std::vector<std::pair<double, std::int64_t>> fracs;
    std::int64_t used = 0;
    for (std::int64_t i = 0; i < parts; ++i) {
        const double share = w[static_cast<std::size_t>(i)] / sum * static_cast<double>(extra_total);
        const std::int64_t fl = static_cast<std::int64_t>(std::floor(share));
        out[static_cast<std::size_t>(i)] += fl;
        used += fl;
        fracs.emplace_back(share - static_cast<double>(fl), i);
    }
    std::stable_sort(fracs.begin(), fracs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::int64_t i = 0; i < extra_total - used; ++i)
        ++out[static_cast<std::size_t>(fracs[static_cast<std::size_t>(i)].second)];
    return out;
}

void chi_square_notice(const std::vector<std::int64_t>& class_frames, std::int64_t num_classes) {
    std::int64_t total = 0;
    for (auto v : class_frames) total += v;
    if (total == 0) return;
    const double expected = static_cast<double>(total) / static_cast<double>(num_classes);
    double chi2 = 0.0;
    for (auto v : class_frames) {
        const double d = static_cast<double>(v) - expected;
        chi2 += d * d / expected;
    }
    // loose bound; class priors are uniform by construction
    if (chi2 > 20.0 * static_cast<double>(num_classes)) {
        std::cerr << "warning: synthetic class priors deviate from uniform (chi2=" << chi2
                  << ")\n";
    }
}

}  // namespace

std::vector<VideoRecord> gen_synthetic(const SynthConfig& config, std::int64_t n_videos,
                                       const std::string& id_prefix) {
    config.validate();
    RngStream rng(config.seed);
    const std::int64_t C = config.num_classes;
    const std::int64_t D = config.feature_dim;
    const std::int64_t T = config.frames;

    std::vector<VideoRecord> out;
    out.reserve(static_cast<std::size_t>(n_videos));
    std::vector<std::int64_t> class_frames(static_cast<std::size_t>(C), 0);

    for (std::int64_t v = 0; v < n_videos; ++v) {
        const std::int64_t segments =
            config.min_segments +
            static_cast<std::int64_t>(rng.next_u64() %
                                      static_cast<std::uint64_t>(config.max_segments -
                                                                 config.min_segments + 1));
        // class sequence without immediate repeats
        std::vector<std::int64_t> seq(static_cast<std::size_t>(segments));
        seq[0] = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(C));
        for (std::int64_t s = 1; s < segments; ++s) {
            std::int64_t c = static_cast<std::int64_t>(rng.next_u64() %
                                                       static_cast<std::uint64_t>(C - 1));
            if (c >= seq[static_cast<std::size_t>(s - 1)]) ++c;
            seq[static_cast<std::size_t>(s)] = c;
        }
        const auto seg_len = dirichlet_partition(T, segments, config.min_segment_frames,
                                                 config.dirichlet_alpha, rng);

        VideoRecord rec;
        {
            std::ostringstream os;
            os << id_prefix;
            os.width(4);
            os.fill('0');
            os << v;
            rec.id = os.str();
        }
        rec.frame_labels.reserve(static_cast<std::size_t>(T));
        for (std::int64_t s = 0; s < segments; ++s)
            rec.frame_labels.insert(rec.frame_labels.end(),
                                    static_cast<std::size_t>(seg_len[static_cast<std::size_t>(s)]),
                                    seq[static_cast<std::size_t>(s)]);
        for (auto l : rec.frame_labels) ++class_frames[static_cast<std::size_t>(l)];

        // class-conditional features: scaled one-hot mean + Gaussian noise
        std::vector<double> raw(static_cast<std::size_t>(T * D));
        for (std::int64_t t = 0; t < T; ++t) {
            const std::int64_t label = rec.frame_labels[static_cast<std::size_t>(t)];
            for (std::int64_t d = 0; d < D; ++d) {
                double mu = (d == label) ? config.mean_scale : 0.0;
                raw[static_cast<std::size_t>(t * D + d)] =
                    mu + config.noise_sigma * rng.next_normal();
            }
        }
        // centered moving average along time, truncated at the edges
        const std::int64_t half = config.smoothing / 2;
        std::vector<double> smooth(static_cast<std::size_t>(T * D));
        for (std::int64_t t = 0; t < T; ++t) {
            const std::int64_t lo = std::max<std::int64_t>(0, t - half);
            const std::int64_t hi = std::min<std::int64_t>(T - 1, t + half);
            const double inv = 1.0 / static_cast<double>(hi - lo + 1);
            for (std::int64_t d = 0; d < D; ++d) {
                double acc = 0.0;
                for (std::int64_t s = lo; s <= hi; ++s)
                    acc += raw[static_cast<std::size_t>(s * D + d)];
                smooth[static_cast<std::size_t>(t * D + d)] = acc * inv;
            }
        }
        rec.features = Tensor::from({T, D}, std::move(smooth));

        rec.action_set = rec.frame_labels;
        std::sort(rec.action_set.begin(), rec.action_set.end());
        rec.action_set.erase(std::unique(rec.action_set.begin(), rec.action_set.end()),
                             rec.action_set.end());
        out.push_back(std::move(rec));
    }

    chi_square_notice(class_frames, C);
    return out;
}

Corpus gen_synthetic_corpus(const SynthConfig& config, std::int64_t n_train,
                            std::int64_t n_test) {
    Corpus corpus;
    corpus.train = gen_synthetic(config, n_train, "train_v");
    SynthConfig test_config = config;
    test_config.seed = config.seed ^ 0x5EED7E57ull;
    corpus.test = gen_synthetic(test_config, n_test, "test_v");
    return corpus;
}

namespace {

constexpr char kFeatureMagic[4] = {'F', 'S', 'E', 'Q'};
constexpr std::uint32_t kFeatureVersion = 1;

void write_int_lines(const std::string& path, const std::vector<std::int64_t>& values) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write '" + path + "'");
    for (auto v : values) os << v << "\n";
}

std::vector<std::int64_t> read_int_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read '" + path + "'");
    std::vector<std::int64_t> out;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            std::size_t pos = 0;
            const std::int64_t v = std::stoll(line, &pos);
            if (pos != line.size()) throw std::invalid_argument("trailing characters");
            out.push_back(v);
        } catch (const std::exception&) {
            throw DataError("'" + path + "' line " + std::to_string(line_no) +
                            ": expected an integer, got '" + line + "'");
        }
    }
    return out;
}

std::vector<std::string> read_id_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read split file '" + path + "'");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace

void save_features(const std::string& path, const Tensor& features) {
    check(features.ndim() == 2, "save_features: features must be T x D");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    os.write(kFeatureMagic, 4);
    const std::uint32_t version = kFeatureVersion;
    const std::uint32_t t = static_cast<std::uint32_t>(features.dim(0));
    const std::uint32_t d = static_cast<std::uint32_t>(features.dim(1));
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&t), 4);
    os.write(reinterpret_cast<const char*>(&d), 4);
    std::vector<float> buf(static_cast<std::size_t>(features.numel()));
    for (std::int64_t i = 0; i < features.numel(); ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<float>(features.at(i));
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!os) throw DataError("failed writing '" + path + "'");
}

Tensor load_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kFeatureMagic, 4) != 0)
        throw DataError("'" + path + "': bad magic bytes at offset 0");
    std::uint32_t version = 0, t = 0, d = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (!is || version != kFeatureVersion)
        throw DataError("'" + path + "': unsupported version at offset 4");
    is.read(reinterpret_cast<char*>(&t), 4);
    is.read(reinterpret_cast<char*>(&d), 4);
    if (!is || t == 0 || d == 0) throw DataError("'" + path + "': bad dimensions at offset 8");
    std::vector<float> buf(static_cast<std::size_t>(t) * d);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is)
        throw DataError("'" + path + "': truncated data at offset " +
                        std::to_string(16 + is.gcount()));
    std::vector<double> values(buf.begin(), buf.end());
    return Tensor::from({static_cast<std::int64_t>(t), static_cast<std::int64_t>(d)},
                        std::move(values));
}

namespace {

void save_split(const std::string& root, const std::string& split,
                const std::vector<VideoRecord>& videos) {
    std::ofstream os(root + "/split_" + split + ".txt");
    if (!os) throw DataError("cannot write split file under '" + root + "'");
    for (const auto& v : videos) os << v.id << "\n";
    for (const auto& v : videos) {
        save_features(root + "/features/" + v.id + ".bin", v.features);
        if (!v.frame_labels.empty()) write_int_lines(root + "/labels/" + v.id + ".txt", v.frame_labels);
        write_int_lines(root + "/sets/" + v.id + ".txt", v.action_set);
    }
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& root) {
    fs::create_directories(root);
    fs::create_directories(root + "/features");
    fs::create_directories(root + "/labels");
    fs::create_directories(root + "/sets");
    save_split(root, "train", corpus.train);
    save_split(root, "test", corpus.test);
}

std::vector<VideoRecord> load_split(const std::string& root, const std::string& split) {
    const auto ids = read_id_lines(root + "/split_" + split + ".txt");
    std::vector<VideoRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        VideoRecord rec;
        rec.id = id;
        rec.features = load_features(root + "/features/" + id + ".bin");

        const std::string labels_path = root + "/labels/" + id + ".txt";
        if (fs::exists(labels_path)) {
            rec.frame_labels = read_int_lines(labels_path);
            if (static_cast<std::int64_t>(rec.frame_labels.size()) != rec.features.dim(0))
                throw DataError("'" + labels_path + "': " +
                                std::to_string(rec.frame_labels.size()) + " labels for " +
                                std::to_string(rec.features.dim(0)) + " frames");
        }

        const std::string sets_path = root + "/sets/" + id + ".txt";
        if (fs::exists(sets_path)) {
            auto raw = read_int_lines(sets_path);
            const std::size_t before = raw.size();
            std::sort(raw.begin(), raw.end());
            raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
            if (raw.size() != before)
                std::cerr << "warning: '" << sets_path << "' contains duplicate action ids\n";
            rec.action_set = std::move(raw);
        } else if (!rec.frame_labels.empty()) {
            rec.action_set = rec.frame_labels;
            std::sort(rec.action_set.begin(), rec.action_set.end());
            rec.action_set.erase(std::unique(rec.action_set.begin(), rec.action_set.end()),
                                 rec.action_set.end());
        } else {
            throw DataError("video '" + id + "': no action set file and no labels to derive it");
        }

        if (!rec.frame_labels.empty()) {
            auto derived = rec.frame_labels;
            std::sort(derived.begin(), derived.end());
            derived.erase(std::unique(derived.begin(), derived.end()), derived.end());
            if (derived != rec.action_set)
                throw DataError("video '" + id +
                                "': action set disagrees with the labels' distinct classes");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

Corpus load_corpus(const std::string& root) {
    Corpus corpus;
    corpus.train = load_split(root, "train");
    corpus.test = load_split(root, "test");
    return corpus;
}

}  // namespace setseg
