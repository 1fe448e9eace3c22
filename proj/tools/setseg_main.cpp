// Command line front end: train / evaluate / predict / gradcheck / synth.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "setseg/data.hpp"
#include "setseg/metrics.hpp"
#include "setseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace setseg;

namespace {

int run_train(const std::string& config_path) {
    RunConfig config = parse_run_config(config_path);
    if (config.data_root.empty()) throw UsageError("train: config must set data_root");
    if (config.out_dir.empty()) throw UsageError("train: config must set out_dir");

    const auto started = std::chrono::steady_clock::now();
    TrainResult result = train(config);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cout << "trained " << config.epochs << " epochs in " << seconds << " s\n";
    std::cout << "final mean loss " << result.final_total << "\n";
    std::cout << "checkpoint: " << result.checkpoint_path << "\n";
    std::cout << "train log:  " << result.trainlog_path << "\n";
    return 0;
}

std::string resolve_data_root(const std::string& flag_value, const std::string& ckpt_path) {
    if (!flag_value.empty()) return flag_value;
    const fs::path sibling = fs::path(ckpt_path).parent_path() / "runconfig.txt";
    if (fs::exists(sibling)) {
        RunConfig config = parse_run_config(sibling.string());
        if (!config.data_root.empty()) return config.data_root;
    }
    throw UsageError("evaluate: pass --data or keep runconfig.txt next to the checkpoint");
}

int run_evaluate(const std::string& ckpt_path, const std::string& data_flag,
                 const std::string& split, const std::string& out_flag) {
    Model model = load_checkpoint(ckpt_path);
    const std::string root = resolve_data_root(data_flag, ckpt_path);
    const auto videos = load_split(root, split);
    EvalResult result = evaluate_model(model, videos);

    const std::string out_dir =
        out_flag.empty() ? fs::path(ckpt_path).parent_path().string() : out_flag;
    fs::create_directories(out_dir);
    write_eval_report(result, out_dir + "/eval_" + split + ".csv",
                      out_dir + "/eval_" + split + ".txt");

    std::cout << "videos:       " << result.per_video.size() << "\n";
    std::cout << "MoF:          " << result.mof << "\n";
    std::cout << "Jaccard:      " << result.jaccard << "\n";
    std::cout << "midpoint hit: " << result.midpoint << "\n";
    return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& features_path,
                const std::string& out_dir, bool dump_posterior) {
    Model model = load_checkpoint(ckpt_path);
    Tensor features = load_features(features_path);
    Prediction pred = predict_video(model, features);

    fs::create_directories(out_dir);
    {
        std::ofstream os(out_dir + "/labels.txt");
        for (auto l : pred.labels) os << l << "\n";
    }
    {
        std::ofstream os(out_dir + "/regions.csv");
        os.precision(17);
        os << "region,length,class,prob\n";
        for (std::size_t k = 0; k < pred.region_length.size(); ++k)
            os << k << "," << pred.region_length[k] << "," << pred.region_class[k] << ","
               << pred.region_prob[k] << "\n";
    }
    if (dump_posterior) {
        std::ofstream os(out_dir + "/posterior.csv");
        os.precision(17);
        for (std::int64_t t = 0; t < pred.posterior.dim(0); ++t) {
            for (std::int64_t c = 0; c < pred.posterior.dim(1); ++c)
                os << (c ? "," : "") << pred.posterior.at(t, c);
            os << "\n";
        }
    }
    std::cout << "wrote " << pred.labels.size() << " frame labels and "
              << pred.region_length.size() << " regions to " << out_dir << "\n";
    return 0;
}

int run_gradcheck(const std::string& config_path) {
    GradCheckConfig config;
    if (!config_path.empty()) {
        RunConfig rc = parse_run_config(config_path);
        config.weights = rc.weights;
        config.seed = rc.seed;
        if (rc.model.hidden != 128) config.hidden = rc.model.hidden;
        config.embed_pools = rc.model.embed_pools;
    }
    GradCheckReport report = gradcheck(config);
    std::cout.precision(6);
    for (const auto& e : report.entries) {
        std::cout << (e.max_rel_err < config.threshold ? "ok   " : "FAIL ") << e.name
                  << "  max_rel_err=" << e.max_rel_err << "  max_abs_grad=" << e.max_abs_grad
                  << "\n";
    }
    std::cout << (report.passed ? "PASS" : "FAIL") << " worst=" << report.worst
              << " threshold=" << config.threshold << "\n";
    if (!report.passed) {
        std::cerr << "gradcheck failed on:";
        for (const auto& e : report.entries)
            if (e.max_rel_err >= config.threshold) std::cerr << " " << e.name;
        std::cerr << "\n";
        throw NumericError("gradient check failed");
    }
    return 0;
}

int run_synth(const std::string& config_path, const std::string& out_dir) {
    SynthRequest request = parse_synth_config(config_path);
    Corpus corpus = gen_synthetic_corpus(request.synth, request.train_videos, request.test_videos);
    save_corpus(corpus, out_dir);
    std::cout << "wrote " << corpus.train.size() << " train / " << corpus.test.size()
              << " test videos to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Set-supervised temporal action segmentation"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, data_root, split = "test", features_path, out_dir;
    bool dump_posterior = false;

    auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
    train_cmd->add_option("--config", config_path, "run config file")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a corpus split");
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", data_root, "corpus root (default: from runconfig.txt)");
    eval_cmd->add_option("--split", split, "split name (train|test)");
    eval_cmd->add_option("--out", out_dir, "report directory (default: checkpoint directory)");

    auto* predict_cmd = app.add_subcommand("predict", "label a single feature file");
    predict_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    predict_cmd->add_option("--features", features_path, "feature file (.bin)")->required();
    predict_cmd->add_option("--out", out_dir, "output directory")->required();
    predict_cmd->add_flag("--dump-posterior", dump_posterior, "also write the posterior matrix");

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    gradcheck_cmd->add_option("--config", config_path, "run config supplying loss weights/seed");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    synth_cmd->add_option("--config", config_path, "synth config file")->required();
    synth_cmd->add_option("--out", out_dir, "corpus root to write")->required();

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(train_cmd)) return run_train(config_path);
        if (app.got_subcommand(eval_cmd))
            return run_evaluate(ckpt_path, data_root, split, out_dir);
        if (app.got_subcommand(predict_cmd))
            return run_predict(ckpt_path, features_path, out_dir, dump_posterior);
        if (app.got_subcommand(gradcheck_cmd)) return run_gradcheck(config_path);
        if (app.got_subcommand(synth_cmd)) return run_synth(config_path, out_dir);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
