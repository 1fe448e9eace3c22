#include "setseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "setseg/metrics.hpp"
#include "setseg/ops.hpp"

namespace setseg {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDropoutStream = 0xD80977A15EEDull;
constexpr std::uint64_t kShuffleStream = 0x583FFE1ull;
constexpr std::int64_t kBackgroundClass = 0;

std::vector<std::int64_t> argmax_rows(const Tensor& probs) {
    const std::int64_t rows = probs.dim(0), cols = probs.dim(1);
    std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        std::int64_t best = 0;
        for (std::int64_t c = 1; c < cols; ++c)
            if (probs.at(r, c) > probs.at(r, best)) best = c;
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

void validate_video_against(const ModelConfig& model, const VideoRecord& video) {
    if (video.features.dim(1) != model.input_dim)
        throw DataError("video '" + video.id + "': feature dimension " +
                        std::to_string(video.features.dim(1)) + " does not match model " +
                        std::to_string(model.input_dim));
    for (auto a : video.action_set)
        if (a < 0 || a >= model.num_classes)
            throw DataError("video '" + video.id + "': action id " + std::to_string(a) +
                            " outside the model's " + std::to_string(model.num_classes) +
                            " classes");
    for (auto l : video.frame_labels)
        if (l < 0 || l >= model.num_classes)
            throw DataError("video '" + video.id + "': frame label " + std::to_string(l) +
                            " outside the model's " + std::to_string(model.num_classes) +
                            " classes");
}

void sgd_step(Model& model, double lr, double weight_decay) {
    for (const auto& name : model.params().names()) {
        Tensor& p = model.params().get(name);
        if (!p.has_grad()) continue;  // untouched by this objective
        const auto& g = p.grad();
        auto& v = p.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double w = v[i];
            v[i] = w - lr * g[i] - lr * weight_decay * w;
        }
    }
}

void zero_all_grads(Model& model) {
    for (const auto& name : model.params().names()) model.params().get(name).zero_grad();
}

const char* kTermNames[] = {"set", "region", "sparsity", "consistency", "self", "length", "jsd"};

}  // namespace

VideoForward forward_video(const Model& model, const Tensor& features, bool training,
                           RngStream& dropout_rng, const std::vector<std::int64_t>* fixed_lint) {
    const ModelConfig& cfg = model.config();
    const std::int64_t frames = features.dim(0);
    const std::int64_t padded = round_up(frames, cfg.downsample_factor());

    VideoForward out;
    Tensor x = pad_rows_edge(features, padded);
    out.embedding = model.embed(x, training, dropout_rng);
    out.region = model.region_forward(out.embedding, training, dropout_rng);
    out.lengths = normalize_lengths(out.region.raw_lengths, padded);
    if (fixed_lint) {
        check(fixed_lint->size() == out.lengths.lint.size(),
              "forward_video: fixed partition has the wrong region count");
        out.lengths.lint = *fixed_lint;
    }
    Tensor y = upsample(out.region.probs, out.lengths, padded, cfg.expansion);
    Tensor s = model.frame_branch(out.embedding, padded);
    out.region_posterior = padded == frames ? y : ops::slice_rows(y, 0, frames);
    out.frame_posterior = padded == frames ? s : ops::slice_rows(s, 0, frames);
    return out;
}

TrainResult train(const RunConfig& config) {
    check(!config.data_root.empty(), "train: data_root is required");
    return train_on(config, load_corpus(config.data_root));
}

TrainResult train_on(const RunConfig& config_in, const Corpus& corpus) {
    RunConfig config = config_in;
    check(!corpus.train.empty(), "train: empty training split");
    check(!config.out_dir.empty(), "train: out_dir is required");
    const std::int64_t data_dim = corpus.feature_dim();
    if (config.model.input_dim == 0) config.model.input_dim = data_dim;
    check(config.model.input_dim == data_dim,
          "train: config input_dim disagrees with the corpus features");
    check(config.model.num_classes >= 2, "train: num_classes must be configured");
    config.weights.validate();
    for (const auto& v : corpus.train) validate_video_against(config.model, v);

    fs::create_directories(config.out_dir);
    write_run_config(config.out_dir + "/runconfig.txt", config);

    Model model(config.model);
    RngStream init_rng(config.seed);
    model.init_params(init_rng);
    RngStream dropout_rng(config.seed ^ kDropoutStream);
    RngStream shuffle_rng(config.seed ^ kShuffleStream);

    TrainResult result;
    result.trainlog_path = config.out_dir + "/trainlog.csv";
    result.checkpoint_path = config.out_dir + "/ckpt_final.bin";

    std::ofstream trainlog(result.trainlog_path);
    if (!trainlog) throw DataError("cannot write '" + result.trainlog_path + "'");
    trainlog.precision(17);
    trainlog << "epoch";
    for (const char* t : kTermNames) trainlog << "," << t;
    trainlog << ",total,train_mof\n";

    std::ofstream losslog(config.out_dir + "/losses.csv");
    if (!losslog) throw DataError("cannot write loss log under '" + config.out_dir + "'");
    losslog.precision(17);
    losslog << "epoch,term,value\n";

    const std::size_t n = corpus.train.size();
    std::vector<std::size_t> order(n);
    bool wrote_checkpoint = false;

    for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }

        std::vector<double> term_sums(std::size(kTermNames), 0.0);
        double total_sum = 0.0;
        MofAccumulator train_mof;

        for (std::size_t idx : order) {
            const VideoRecord& video = corpus.train[idx];
            Graph graph;
            {
                TapeScope scope(graph);
                VideoForward fwd =
                    forward_video(model, video.features, /*training=*/true, dropout_rng);

                LossInputs in;
                in.region_probs = fwd.region.probs;
                in.raw_lengths = fwd.region.raw_lengths;
                in.region_posterior = fwd.region_posterior;
                in.frame_posterior = fwd.frame_posterior;
                in.action_set = video.action_set;
                in.num_classes = config.model.num_classes;
                in.delta = config.model.delta;

                LossReport report = total_loss(in, config.weights);
                const double total = report.total.item();
                if (!std::isfinite(total)) {
                    throw NumericError(
                        "training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                        (wrote_checkpoint ? "; last finite checkpoint retained in " + config.out_dir
                                          : "; no checkpoint was written yet"));
                }
                graph.backward(report.total);

                for (std::size_t t = 0; t < std::size(kTermNames); ++t)
                    for (const auto& [name, value] : report.terms)
                        if (name == kTermNames[t]) term_sums[t] += value;
                total_sum += total;
                if (!video.frame_labels.empty())
                    train_mof.add(argmax_rows(fwd.region_posterior), video.frame_labels);
            }
            sgd_step(model, config.learning_rate, config.weight_decay);
            zero_all_grads(model);
        }

        const double inv = 1.0 / static_cast<double>(n);
        trainlog << epoch;
        for (std::size_t t = 0; t < std::size(kTermNames); ++t) {
            trainlog << "," << term_sums[t] * inv;
            losslog << epoch << "," << kTermNames[t] << "," << term_sums[t] * inv << "\n";
        }
        trainlog << "," << total_sum * inv << ",";
        if (train_mof.total > 0) trainlog << train_mof.value();
        trainlog << "\n";
        result.final_total = total_sum * inv;

        if (config.eval_every > 0 && epoch % config.eval_every == 0 && epoch < config.epochs) {
            save_checkpoint(config.out_dir + "/ckpt_epoch" + std::to_string(epoch) + ".bin", model,
                            dropout_rng.counter());
            wrote_checkpoint = true;
        }
    }

    save_checkpoint(result.checkpoint_path, model, dropout_rng.counter());
    return result;
}

std::vector<std::int64_t> predict_labels(const Model& model, const Tensor& features) {
    RngStream rng(0);  // dropout disabled in eval mode
    VideoForward fwd = forward_video(model, features, /*training=*/false, rng);
    return argmax_rows(fwd.region_posterior);
}

Prediction predict_video(const Model& model, const Tensor& features) {
    RngStream rng(0);
    VideoForward fwd = forward_video(model, features, /*training=*/false, rng);
    Prediction out;
    out.posterior = fwd.region_posterior;
    out.labels = argmax_rows(fwd.region_posterior);
    const Tensor& probs = fwd.region.probs;
    for (std::int64_t k = 0; k < probs.dim(0); ++k) {
        std::int64_t best = 0;
        for (std::int64_t c = 1; c < probs.dim(1); ++c)
            if (probs.at(k, c) > probs.at(k, best)) best = c;
        out.region_length.push_back(fwd.lengths.lint[static_cast<std::size_t>(k)]);
        out.region_class.push_back(best);
        out.region_prob.push_back(probs.at(k, best));
    }
    return out;
}

EvalResult evaluate_labelings(const std::vector<std::vector<std::int64_t>>& predictions,
                              const std::vector<VideoRecord>& videos) {
    check(predictions.size() == videos.size(), "evaluate: one prediction per video expected");
    EvalResult result;
    MofAccumulator corpus_mof;
    MidpointAccumulator corpus_mid;
    double jaccard_sum = 0.0;
    for (std::size_t i = 0; i < videos.size(); ++i) {
        const auto& gt = videos[i].frame_labels;
        if (gt.empty())
            throw DataError("video '" + videos[i].id + "': no ground-truth labels to evaluate");
        const auto& pred = predictions[i];

        EvalVideoRow row;
        row.id = videos[i].id;
        row.mof = mof(pred, gt);
        row.jaccard = jaccard(pred, gt);
        const SegmentList pred_segs = frames_to_segments(pred);
        const SegmentList gt_segs = frames_to_segments(gt);
        row.midpoint = midpoint_hit(pred_segs, gt_segs, kBackgroundClass);
        result.per_video.push_back(row);

        corpus_mof.add(pred, gt);
        corpus_mid.add(pred_segs, gt_segs, kBackgroundClass);
        jaccard_sum += row.jaccard;
    }
    result.mof = corpus_mof.value();
    result.jaccard = videos.empty() ? 0.0 : jaccard_sum / static_cast<double>(videos.size());
    result.midpoint = corpus_mid.value();
    return result;
}

EvalResult evaluate_model(const Model& model, const std::vector<VideoRecord>& videos) {
    check(!videos.empty(), "evaluate: empty split");
    std::vector<std::vector<std::int64_t>> predictions;
    predictions.reserve(videos.size());
    for (const auto& video : videos) {
        validate_video_against(model.config(), video);
        predictions.push_back(predict_labels(model, video.features));
    }
    return evaluate_labelings(predictions, videos);
}

void write_eval_report(const EvalResult& result, const std::string& csv_path,
                       const std::string& text_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw DataError("cannot write '" + csv_path + "'");
    csv.precision(17);
    csv << "video,mof,jaccard,midpoint\n";
    for (const auto& row : result.per_video)
        csv << row.id << "," << row.mof << "," << row.jaccard << "," << row.midpoint << "\n";

    std::ofstream txt(text_path);
    if (!txt) throw DataError("cannot write '" + text_path + "'");
    txt.precision(6);
    txt << "videos:        " << result.per_video.size() << "\n";
    txt << "MoF:           " << result.mof << "\n";
    txt << "Jaccard:       " << result.jaccard << "\n";
    txt << "midpoint hit:  " << result.midpoint << "\n";
}

namespace {

struct GradCheckInstance {
    Tensor features;
    std::vector<std::int64_t> action_set;
};

GradCheckInstance make_gradcheck_instance(const GradCheckConfig& cfg, RngStream& rng) {
    check(cfg.set_size >= 1 && cfg.set_size <= cfg.num_classes,
          "gradcheck: set size must lie in [1, num_classes]");
    // pick set_size distinct classes
    std::vector<std::int64_t> classes(static_cast<std::size_t>(cfg.num_classes));
    for (std::int64_t c = 0; c < cfg.num_classes; ++c) classes[static_cast<std::size_t>(c)] = c;
    for (std::size_t i = classes.size(); i > 1; --i)
        std::swap(classes[i - 1], classes[static_cast<std::size_t>(rng.next_u64() % i)]);
    classes.resize(static_cast<std::size_t>(cfg.set_size));

    // one segment per chosen class plus a couple of repeats
    const std::int64_t segments = cfg.set_size + 2;
    std::vector<std::int64_t> seq;
    for (std::int64_t s = 0; s < segments; ++s)
        seq.push_back(classes[static_cast<std::size_t>(s) % classes.size()]);
    std::vector<double> values(static_cast<std::size_t>(cfg.frames * cfg.input_dim));
    std::vector<std::int64_t> bounds;
    for (std::int64_t s = 1; s < segments; ++s) bounds.push_back(s * cfg.frames / segments);
    bounds.push_back(cfg.frames);
    std::int64_t t = 0;
    for (std::int64_t s = 0; s < segments; ++s) {
        for (; t < bounds[static_cast<std::size_t>(s)]; ++t) {
            for (std::int64_t d = 0; d < cfg.input_dim; ++d) {
                const double mu = (d == seq[static_cast<std::size_t>(s)] % cfg.input_dim) ? 2.0 : 0.0;
                values[static_cast<std::size_t>(t * cfg.input_dim + d)] = mu + rng.next_normal();
            }
        }
    }

    GradCheckInstance out;
    out.features = Tensor::from({cfg.frames, cfg.input_dim}, std::move(values));
    out.action_set = classes;
    std::sort(out.action_set.begin(), out.action_set.end());
    return out;
}

}  // namespace

GradCheckReport gradcheck(
    const GradCheckConfig& config,
    const std::function<void(const std::string&, std::vector<double>&)>& corrupt) {
    config.weights.validate();
    RngStream rng(config.seed);
    GradCheckInstance instance = make_gradcheck_instance(config, rng);

    ModelConfig mc;
    mc.input_dim = config.input_dim;
    mc.num_classes = config.num_classes;
    mc.hidden = config.hidden;
    mc.embed_pools = config.embed_pools;
    Model model(mc);
    RngStream init_rng(config.seed ^ 0x1317ull);
    model.init_params(init_rng);

    RngStream no_dropout(0);
    auto loss_of = [&](const std::vector<std::int64_t>* lint) {
        VideoForward fwd =
            forward_video(model, instance.features, /*training=*/false, no_dropout, lint);
        LossInputs in;
        in.region_probs = fwd.region.probs;
        in.raw_lengths = fwd.region.raw_lengths;
        in.region_posterior = fwd.region_posterior;
        in.frame_posterior = fwd.frame_posterior;
        in.action_set = instance.action_set;
        in.num_classes = config.num_classes;
        in.delta = mc.delta;
        return total_loss(in, config.weights);
    };

    // Freeze the integer partition at the base point; the compared function
    // is then smooth in every parameter.
    const std::vector<std::int64_t> base_lint = [&] {
        RngStream r(0);
        VideoForward fwd = forward_video(model, instance.features, false, r);
        return fwd.lengths.lint;
    }();

    std::vector<std::vector<double>> analytic;
    {
        Graph graph;
        TapeScope scope(graph);
        LossReport report = loss_of(&base_lint);
        graph.backward(report.total);
    }
    for (const auto& name : model.params().names()) {
        Tensor& p = model.params().get(name);
        std::vector<double> g = p.has_grad() ? p.grad()
                                             : std::vector<double>(static_cast<std::size_t>(p.numel()), 0.0);
        if (corrupt) corrupt(name, g);
        analytic.push_back(std::move(g));
        p.zero_grad();
    }

    GradCheckReport report;
    const double h = config.step;
    std::size_t pi = 0;
    for (const auto& name : model.params().names()) {
        Tensor& p = model.params().get(name);
        GradCheckEntry entry;
        entry.name = name;
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double saved = p.at(i);
            p.at(i) = saved + h;
            const double up = loss_of(&base_lint).total.item();
            p.at(i) = saved - h;
            const double down = loss_of(&base_lint).total.item();
            p.at(i) = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic_v = analytic[pi][static_cast<std::size_t>(i)];
            const double rel =
                std::fabs(analytic_v - numeric) / std::max(1.0, std::fabs(numeric));
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            entry.max_abs_grad = std::max(entry.max_abs_grad, std::fabs(analytic_v));
        }
        report.worst = std::max(report.worst, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
        ++pi;
    }
    report.passed = report.worst < config.threshold;
    return report;
}

}  // namespace setseg
